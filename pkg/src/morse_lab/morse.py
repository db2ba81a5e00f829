"""Invariant scalar fields, Riemannian gradients and Lagrange-corrected Hessians."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateHessian, NotCritical, OffManifold
from .manifold import ManifoldSpec, _project, to_vector

TAU_CRIT = 1e-8
TAU_MORSE = 1e-6


@dataclass(frozen=True)
class InvariantFunction:
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    ambient_gradient: Callable[[np.ndarray], np.ndarray]
    ambient_hessian: Callable[[np.ndarray], np.ndarray]


def linear_function(weights, name: str) -> InvariantFunction:
    w = np.asarray(weights, dtype=float)
    N = len(w)

    def value(x):
        return np.asarray(x) @ w

    def gradient(x):
        return np.broadcast_to(w, np.shape(x)).copy()

    def hessian(x):
        return np.zeros(np.shape(x)[:-1] + (N, N))

    return InvariantFunction(name, value, gradient, hessian)


def height_function(N: int = 3, axis: int = -1) -> InvariantFunction:
    w = np.zeros(N)
    w[axis] = 1.0
    return linear_function(w, "height")


def trace_function(D) -> InvariantFunction:
    """``X -> tr(D X)`` on Hermitian matrices, ``D`` Hermitian."""
    D = np.asarray(D)
    if D.ndim == 1:
        D = np.diag(D)
    label = ",".join(f"{v:g}" for v in np.diag(D).real)
    return linear_function(to_vector(D.astype(complex)), f"tr(diag({label}) X)")


def quadratic_function(S, name: str) -> InvariantFunction:
    """``x -> x^T S x`` for symmetric ``S``."""
    S = np.asarray(S, dtype=float)

    def value(x):
        return np.einsum("...a,ab,...b->...", x, S, x)

    def gradient(x):
        return 2.0 * np.asarray(x) @ S

    def hessian(x):
        return np.broadcast_to(2.0 * S, np.shape(x)[:-1] + S.shape).copy()

    return InvariantFunction(name, value, gradient, hessian)


def riemannian_gradient(m: ManifoldSpec, f: InvariantFunction, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(m.residual(x) > m.tau_on):
        raise OffManifold(f"point is not on {m.name}")
    return _project(m, x, f.ambient_gradient(x))


def lagrange_derivatives(m: ManifoldSpec, f: InvariantFunction, x: np.ndarray):
    """Riemannian gradient and Hessian at (a batch of) points.

    The Hessian is ``P (grad^2 f - sum_i lam_i grad^2 c_i) P`` with ``lam``
    the least-squares multipliers of ``grad f`` on the constraint gradients.
    Returns ``(grad, H_tan, T, H_amb)``: tangent gradient (..., N), the
    Hessian in the tangent basis (..., n, n), the basis rows (..., n, N) and
    the projected ambient operator (..., N, N).
    """
    J = m.jacobian(x)
    U, sv, Vh = np.linalg.svd(J, full_matrices=True)
    r = m.codim
    eg = f.ambient_gradient(x)
    normal = Vh[..., :r, :]
    T = Vh[..., r:, :]
    coef = (normal @ eg[..., None])[..., 0]
    grad = eg - (np.swapaxes(normal, -1, -2) @ coef[..., None])[..., 0]
    # J^T lam = eg  =>  lam = U_r diag(1/s_r) V_r eg
    lam = (U[..., :, :r] @ (coef / sv[..., :r])[..., None])[..., 0]
    Hc = m.constraint_hessians(x)
    H = f.ambient_hessian(x) - np.sum(lam[..., None, None] * Hc, axis=-3)
    Tt = np.swapaxes(T, -1, -2)
    H_tan = T @ H @ Tt
    H_tan = 0.5 * (H_tan + np.swapaxes(H_tan, -1, -2))
    H_amb = Tt @ H_tan @ T
    return grad, H_tan, T, H_amb


@dataclass(frozen=True)
class HessianResult:
    point: np.ndarray
    eigenvalues: np.ndarray     # ascending, n entries
    eigenvectors: np.ndarray    # (N, n) ambient, orthonormal, tangent
    operator: np.ndarray        # (N, N) projected ambient operator


def riemannian_hessian(m: ManifoldSpec, f: InvariantFunction, x: np.ndarray) -> HessianResult:
    x = np.asarray(x, dtype=float)
    _, H_tan, T, H_amb = lagrange_derivatives(m, f, x)
    w, V = np.linalg.eigh(H_tan)
    return HessianResult(x, w, T.T @ V, H_amb)


def riemannian_hessian_at_critical(m: ManifoldSpec, f: InvariantFunction, p: np.ndarray,
                                   tau_crit: float = TAU_CRIT,
                                   tau_morse: float = TAU_MORSE) -> HessianResult:
    g = riemannian_gradient(m, f, p)
    if np.linalg.norm(g) > tau_crit:
        raise NotCritical(f"gradient norm {np.linalg.norm(g):.3e} exceeds {tau_crit:g}")
    h = riemannian_hessian(m, f, p)
    if np.min(np.abs(h.eigenvalues)) < tau_morse:
        raise DegenerateHessian(
            f"Hessian eigenvalue {np.min(np.abs(h.eigenvalues)):.3e} below {tau_morse:g}")
    return h


def morse_index(h) -> int:
    w = h.eigenvalues if isinstance(h, HessianResult) else np.asarray(h)
    return int(np.sum(w < 0))


def euler_characteristic(indices) -> int:
    return int(sum((-1) ** int(k) for k in indices))
