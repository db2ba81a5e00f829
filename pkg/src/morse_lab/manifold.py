"""Compact manifolds embedded as constraint sets ``M = c^{-1}(0)`` in R^N.

Every routine accepts a single point of shape ``(N,)`` or a batch ``(B, N)``.
Matrix manifolds live in the real vector space of Hermitian ``m x m``
matrices, identified with R^{m^2} through an orthonormal basis for the
Frobenius inner product, so the ambient metric is always Euclidean.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import OffManifold, RankDeficient, RetractionDiverged

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class ManifoldSpec:
    name: str
    ambient_dim: int
    intrinsic_dim: int
    constraint: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    constraint_hessians: Callable[[np.ndarray], np.ndarray]
    retraction: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    matrix_size: int | None = None
    # closed-form tangent projection (x, v) -> P_x v; must agree with the
    # Jacobian-based projection, which is used when this is None
    projector: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    tau_on: float = 1e-9
    tau_tan: float = 1e-8
    tau_retract_basin: float = 1e-2

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.intrinsic_dim

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.sampler(rng, size)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.constraint(x), axis=-1)


# ---------------------------------------------------------------------------
# Hermitian matrices as real vectors


@lru_cache(maxsize=None)
def herm_basis(m: int) -> np.ndarray:
    """Orthonormal basis of Hermitian ``m x m`` matrices, shape ``(m*m, m, m)``."""
    basis = []
    for i in range(m):
        e = np.zeros((m, m), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    s = 1.0 / np.sqrt(2.0)
    for i in range(m):
        for j in range(i + 1, m):
            e = np.zeros((m, m), dtype=complex)
            e[i, j] = e[j, i] = s
            basis.append(e)
            e = np.zeros((m, m), dtype=complex)
            e[i, j] = 1j * s
            e[j, i] = -1j * s
            basis.append(e)
    out = np.array(basis)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _flat_bases(m: int):
    B = herm_basis(m)
    to_mat = B.reshape(m * m, m * m)
    # tr(B_a X) = sum_ij B_a[j, i] X[i, j]
    to_vec = np.swapaxes(B, 1, 2).reshape(m * m, m * m).T.copy()
    return to_mat, to_vec


def to_matrix(x: np.ndarray, m: int) -> np.ndarray:
    x = np.asarray(x)
    return (x @ _flat_bases(m)[0]).reshape(x.shape[:-1] + (m, m))


def to_vector(X: np.ndarray) -> np.ndarray:
    m = X.shape[-1]
    flat = np.reshape(X, X.shape[:-2] + (m * m,))
    # tr(B_a X) is real for Hermitian X
    return (flat @ _flat_bases(m)[1]).real


@lru_cache(maxsize=None)
def _pair_products(m: int) -> np.ndarray:
    """``T[a, b, c] = Re tr(B_a (B_b B_c + B_c B_b))``."""
    B = herm_basis(m)
    t = np.einsum("aij,bjk,cki->abc", B, B, B)
    out = (t + np.swapaxes(t, 1, 2)).real
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Built-in families


def sphere(dim: int = 2) -> ManifoldSpec:
    N = dim + 1

    def constraint(x):
        return (np.sum(x * x, axis=-1) - 1.0)[..., None]

    def jacobian(x):
        return 2.0 * x[..., None, :]

    def hessians(x):
        return np.broadcast_to(2.0 * np.eye(N), x.shape[:-1] + (1, N, N))

    def retraction(x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def sampler(rng, size):
        return retraction(rng.standard_normal((size, N)))

    def projector(x, v):
        coef = np.sum(x * v, axis=-1, keepdims=True) / np.sum(x * x, axis=-1, keepdims=True)
        return v - coef * x

    return ManifoldSpec(f"S^{dim}", N, dim, constraint, jacobian, hessians,
                        retraction, sampler, projector=projector)


def projective_space(m: int) -> ManifoldSpec:
    """CP^{m-1} as rank-one Hermitian projectors (P^2 = P, tr P = 1)."""
    N = m * m
    T = _pair_products(m)
    trace_row = to_vector(np.eye(m))

    def constraint(x):
        P = to_matrix(x, m)
        c = to_vector(P @ P - P)
        t = np.trace(P, axis1=-2, axis2=-1).real - 1.0
        return np.concatenate([c, t[..., None]], axis=-1)

    def jacobian(x):
        # d(P^2 - P)[B_b] = P B_b + B_b P - B_b, i.e. sum_c x_c T[a, c, b] - delta_ab
        J = (x @ T.reshape(N, N * N)).reshape(x.shape[:-1] + (N, N)) - np.eye(N)
        row = np.broadcast_to(trace_row, x.shape[:-1] + (1, N))
        return np.concatenate([J, row], axis=-2)

    def hessians(x):
        H = np.concatenate([T, np.zeros((1, N, N))], axis=0)
        return np.broadcast_to(H, x.shape[:-1] + H.shape)

    def retraction(x):
        _, V = np.linalg.eigh(to_matrix(x, m))
        v = V[..., :, -1]
        return to_vector(v[..., :, None] * v[..., None, :].conj())

    def sampler(rng, size):
        v = rng.standard_normal((size, m)) + 1j * rng.standard_normal((size, m))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return to_vector(v[..., :, None] * v[..., None, :].conj())

    def projector(x, v):
        # tangent space at P: off-diagonal blocks P V (I-P) + (I-P) V P
        P = to_matrix(x, m)
        V = to_matrix(v, m)
        Q = np.eye(m) - P
        return to_vector(P @ V @ Q + Q @ V @ P)

    return ManifoldSpec(f"CP^{m - 1}", N, 2 * (m - 1), constraint, jacobian,
                        hessians, retraction, sampler, matrix_size=m,
                        projector=projector)


def isospectral(spectrum) -> ManifoldSpec:
    """Flag manifold U(m)/T as Hermitian matrices with fixed distinct spectrum.

    Constraints are the power sums ``tr X^k / k`` for ``k = 1..m``; they pin
    the characteristic polynomial and have linearly independent gradients
    ``I, X, ..., X^{m-1}`` whenever the eigenvalues are distinct.
    """
    s = np.sort(np.asarray(spectrum, dtype=float))
    m = len(s)
    if np.min(np.diff(s)) <= 0:
        raise ValueError("isospectral manifold needs distinct eigenvalues")
    N = m * m
    B = herm_basis(m)
    T = _pair_products(m)
    targets = np.array([np.sum(s ** k) / k for k in range(1, m + 1)])

    def _powers(X, upto):
        eye = np.broadcast_to(np.eye(m, dtype=complex), X.shape)
        out = [eye]
        for _ in range(upto):
            out.append(out[-1] @ X)
        return out

    def constraint(x):
        X = to_matrix(x, m)
        pw = _powers(X, m)
        vals = [np.trace(pw[k], axis1=-2, axis2=-1).real / k for k in range(1, m + 1)]
        return np.stack(vals, axis=-1) - targets

    def jacobian(x):
        X = to_matrix(x, m)
        pw = _powers(X, m - 1)
        return np.stack([to_vector(pw[k]) for k in range(m)], axis=-2)

    def hessians(x):
        out = np.zeros(x.shape[:-1] + (m, N, N))
        if m >= 2:
            out[..., 1, :, :] = np.eye(N)
        if m >= 3:
            # second derivative of tr X^3 / 3 is (V, W) -> tr(X (V W + W V))
            out[..., 2, :, :] = (x @ T.reshape(N, N * N)).reshape(x.shape[:-1] + (N, N))
        if m >= 4:
            pw = _powers(to_matrix(x, m), m - 2)
            for k in range(4, m + 1):
                acc = 0.0
                for j in range(k - 1):
                    acc = acc + np.einsum("...ip,bpq,...qr,ari->...ab", pw[j], B,
                                          pw[k - 2 - j], B, optimize=True).real
                out[..., k - 1, :, :] = acc
        return out

    def retraction(x):
        # nearest point on the orbit: keep eigenvectors, snap sorted eigenvalues
        _, V = np.linalg.eigh(to_matrix(x, m))
        X = (V * s) @ np.swapaxes(V.conj(), -1, -2)
        return to_vector(X)

    def sampler(rng, size):
        Z = rng.standard_normal((size, m, m)) + 1j * rng.standard_normal((size, m, m))
        Q, R = np.linalg.qr(Z)
        d = np.diagonal(R, axis1=-2, axis2=-1)
        Q = Q * (d / np.abs(d))[..., None, :]
        return to_vector((Q * s) @ np.swapaxes(Q.conj(), -1, -2))

    def projector(x, v):
        Nrm = jacobian(x)
        G = Nrm @ np.swapaxes(Nrm, -1, -2)
        coef = np.linalg.solve(G, np.einsum("...ka,...a->...k", Nrm, v)[..., None])[..., 0]
        return v - np.einsum("...ka,...k->...a", Nrm, coef)

    name = "Flag(" + ",".join(f"{v:g}" for v in s) + ")"
    return ManifoldSpec(name, N, m * (m - 1), constraint, jacobian, hessians,
                        retraction, sampler, matrix_size=m, projector=projector)


# ---------------------------------------------------------------------------
# Operations


def tangent_frames(m: ManifoldSpec, x: np.ndarray):
    """Orthonormal normal and tangent bases at ``x`` from the constraint Jacobian.

    Returns ``(normal, tangent, sv)`` with ``normal`` of shape ``(..., N-n, N)``
    and ``tangent`` of shape ``(..., n, N)`` (rows are basis vectors).
    """
    J = m.jacobian(x)
    _, sv, Vh = np.linalg.svd(J, full_matrices=True)
    r = m.codim
    if np.any(sv[..., r - 1] <= RANK_RTOL * sv[..., 0]):
        raise RankDeficient(f"constraint Jacobian of {m.name} drops rank")
    return Vh[..., :r, :], Vh[..., r:, :], sv


def _project(m: ManifoldSpec, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    if m.projector is not None:
        return m.projector(x, v)
    return _project_jacobian(m, x, v)


def _project_jacobian(m: ManifoldSpec, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    normal, _, _ = tangent_frames(m, x)
    coef = np.einsum("...ra,...a->...r", normal, v)
    return v - np.einsum("...ra,...r->...a", normal, coef)


def project_to_tangent(m: ManifoldSpec, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection of the ambient vector ``v`` onto ``T_x M``."""
    x = np.asarray(x, dtype=float)
    if np.any(m.residual(x) > m.tau_on):
        raise OffManifold(f"point is not on {m.name}")
    return _project(m, x, np.asarray(v, dtype=float))


def tangent_residual(m: ManifoldSpec, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``||Dc(x) v|| / ||v||``; small for tangent vectors."""
    Jv = np.einsum("...ka,...a->...k", m.jacobian(x), v)
    return np.linalg.norm(Jv, axis=-1) / np.maximum(np.linalg.norm(v, axis=-1), 1e-300)


def retract_batch(m: ManifoldSpec, x: np.ndarray):
    """Retract a batch; returns ``(points, ok)`` instead of raising."""
    x = np.atleast_2d(x)
    ok = m.residual(x) <= m.tau_retract_basin
    y = m.retraction(x)
    ok &= np.all(np.isfinite(y), axis=-1) & (m.residual(y) <= m.tau_on)
    return y, ok


def retract(m: ManifoldSpec, x: np.ndarray) -> np.ndarray:
    """Nearest-point retraction; flows only call it within ``tau_retract_basin``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = m.retraction(x)
    if not np.all(np.isfinite(y)) or np.any(m.residual(y) > m.tau_on):
        raise RetractionDiverged(f"retraction onto {m.name} failed")
    return y


def on_manifold(m: ManifoldSpec, x: np.ndarray) -> bool:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or m.residual(x) > m.tau_on:
        return False
    sv = np.linalg.svd(m.jacobian(x), compute_uv=False)
    r = m.codim
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    return rank == r
