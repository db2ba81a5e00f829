"""Compact connected groups acting linearly and isometrically on the ambient space.

Group elements are always ``exp(sum_i theta_i A_i)`` for the realified
Lie-algebra generators ``A_i``.  Conjugation actions ``X -> U X U^*`` on
Hermitian matrices are realified to the same form, so every action is a
real orthogonal matrix on R^N.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, null_space

from .errors import FixedSetNotFinite, OffManifold
from .manifold import ManifoldSpec, herm_basis, to_matrix, to_vector
from .morse import InvariantFunction, lagrange_derivatives, quadratic_function
from .search import dedup, descend, lexsort_rows, newton_refine

TAU_FIX = 1e-8
DEDUP_RADIUS = 1e-5


@dataclass(frozen=True)
class GroupActionSpec:
    name: str
    generators: np.ndarray              # (d, N, N) real skew-symmetric
    convention: str = "linear"          # "linear" or "conjugation"
    algebra: np.ndarray | None = None   # (d, m, m) skew-Hermitian, conjugation only

    @property
    def group_dim(self) -> int:
        return len(self.generators)

    @property
    def ambient_dim(self) -> int:
        return self.generators.shape[-1]


@dataclass(frozen=True)
class GroupElement:
    matrix: np.ndarray                  # (N, N) orthogonal ambient matrix
    theta: np.ndarray
    unitary: np.ndarray | None = None   # (m, m), conjugation actions only


def linear_action(name: str, generators) -> GroupActionSpec:
    A = np.asarray(generators, dtype=float)
    if A.ndim == 2:
        A = A[None]
    if not np.allclose(np.swapaxes(A, -1, -2), -A, atol=1e-12):
        raise ValueError("generators must be skew-symmetric")
    return GroupActionSpec(name, A)


def conjugation_action(name: str, algebra) -> GroupActionSpec:
    """Realify ``X -> [A, X]`` on Hermitian matrices for skew-Hermitian ``A``."""
    A = np.asarray(algebra, dtype=complex)
    if A.ndim == 2:
        A = A[None]
    if not np.allclose(np.swapaxes(A.conj(), -1, -2), -A, atol=1e-12):
        raise ValueError("conjugation generators must be skew-Hermitian")
    B = herm_basis(A.shape[-1])
    # L[a, b] = <B_a, [A, B_b]>
    comm = np.einsum("dij,bjk->dbik", A, B) - np.einsum("bij,djk->dbik", B, A)
    L = np.einsum("aji,dbij->dab", B, comm).real
    return GroupActionSpec(name, L, "conjugation", A)


def sample_element(spec: GroupActionSpec, theta) -> GroupElement:
    theta = np.asarray(theta, dtype=float).reshape(spec.group_dim)
    gen = np.tensordot(theta, spec.generators, axes=1)
    U = None
    if spec.convention == "conjugation":
        U = expm(np.tensordot(theta, spec.algebra, axes=1))
    return GroupElement(expm(gen), theta, U)


def random_element(spec: GroupActionSpec, rng: np.random.Generator) -> GroupElement:
    # uniform angles are Haar measure for the built-in tori
    return sample_element(spec, rng.uniform(0.0, 2 * np.pi, spec.group_dim))


def identity_element(spec: GroupActionSpec) -> GroupElement:
    return sample_element(spec, np.zeros(spec.group_dim))


def act(g: GroupElement, x: np.ndarray, m: ManifoldSpec | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if m is not None and np.any(m.residual(x) > m.tau_on):
        raise OffManifold(f"point is not on {m.name}")
    if g.unitary is not None:
        U = g.unitary
        X = to_matrix(x, U.shape[0])
        return to_vector(U @ X @ U.conj().T)
    return x @ g.matrix.T


def induced_fields(spec: GroupActionSpec, x: np.ndarray) -> np.ndarray:
    """Infinitesimal action ``A_i x`` of each generator, shape ``(..., d, N)``."""
    return np.einsum("dab,...b->...da", spec.generators, x)


def is_fixed_point(spec: GroupActionSpec, x: np.ndarray, tol: float = TAU_FIX) -> bool:
    if spec.group_dim == 0:
        return True
    return bool(np.all(np.linalg.norm(induced_fields(spec, x), axis=-1) <= tol))


def orbit_function(spec: GroupActionSpec) -> InvariantFunction:
    """``F(x) = sum_i |A_i x|^2``; its zero set is the fixed-point set."""
    N = spec.ambient_dim
    S = np.zeros((N, N))
    for A in spec.generators:
        S += A.T @ A
    return quadratic_function(S, f"orbit-speed({spec.name})")


def enumerate_fixed_points(spec: GroupActionSpec, m: ManifoldSpec, n_starts: int = 200,
                           seed: int = 0, tol: float = TAU_FIX,
                           dedup_radius: float = DEDUP_RADIUS) -> np.ndarray:
    """Multistart minimisation of the orbit-speed function over ``m``.

    Returns the deduplicated minima with ``F <= tol^2`` sorted
    lexicographically.  A minimum whose tangent Hessian of ``F`` is
    singular sits on a continuum of fixed points and raises
    ``FixedSetNotFinite``.
    """
    F = orbit_function(spec)
    rng = np.random.default_rng(seed)
    x = descend(m, F, m.sample(rng, n_starts), iters=40)
    x, _ = newton_refine(m, F, x, gtol=1e-14)
    vals = F.value(x)
    keep = vals <= tol ** 2
    if not keep.any():
        return np.zeros((0, m.ambient_dim))
    reps, _ = dedup(x[keep], dedup_radius, vals[keep])
    _, H, _, _ = lagrange_derivatives(m, F, reps)
    lowest = np.linalg.eigvalsh(H)[:, 0]
    scale = max(1.0, float(np.max(np.abs(spec.generators), initial=0.0)) ** 2)
    if np.any(lowest < 1e-6 * scale):
        raise FixedSetNotFinite(
            f"{spec.name} on {m.name}: fixed points are not isolated")
    return reps[lexsort_rows(reps)]


def invariance_residual(spec: GroupActionSpec, f: InvariantFunction, m: ManifoldSpec,
                        n_samples: int = 200, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = m.sample(rng, n_samples)
    gx = np.array([act(random_element(spec, rng), xi) for xi in x])
    return float(np.max(np.abs(f.value(gx) - f.value(x))))


def stabilizer_subspace(spec: GroupActionSpec, x: np.ndarray, rtol: float = 1e-7):
    """Orthonormal basis (d, k) of ``{xi : sum_i xi_i A_i x = 0}`` and singular values."""
    E = induced_fields(spec, x).T  # (N, d)
    _, sv, Vh = np.linalg.svd(E, full_matrices=True)
    top = sv[0] if len(sv) else 0.0
    rank = int(np.sum(sv > rtol * max(top, 1e-300))) if top > 0 else 0
    return Vh[rank:].T, sv


def fixed_subspace_projector(spec: GroupActionSpec, coeffs) -> np.ndarray | None:
    """Orthogonal projector onto ``{x : sum_i c_i A_i x = 0 for each c in coeffs}``."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.size == 0:
        return None
    mats = [np.tensordot(c, spec.generators, axes=1) for c in coeffs]
    Z = null_space(np.vstack(mats))
    return Z @ Z.T
