"""Independent reference computations used to freeze expected values.

Nothing here calls the package's derivative, Hessian or search code.  The
chart oracle differentiates ``f(retract(p + T u))`` numerically, where ``T``
is a tangent basis from a finite-difference constraint Jacobian.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize


def permutation_diagonals(spectrum) -> list[np.ndarray]:
    """All diagonal matrices carrying ``spectrum`` in some order, as matrices."""
    out = {tuple(p) for p in itertools.permutations(spectrum)}
    return [np.diag(np.array(p, dtype=float)) for p in sorted(out)]


def coordinate_projectors(m: int) -> list[np.ndarray]:
    return [np.diag(e) for e in np.eye(m)]


def fd_jacobian(c, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((c(x + e) - c(x - e)) / (2 * h))
    return np.array(cols).T


def chart_hessian(constraint, retraction, value, p: np.ndarray, h: float = 1e-4):
    """Eigenvalues of the Hessian of ``value`` in the retraction chart at ``p``.

    At a critical point this equals the Riemannian Hessian for any
    retraction.  Central differences with step ``h``.
    """
    T = null_space(fd_jacobian(constraint, p), rcond=1e-7)   # (N, n)
    n = T.shape[1]

    def phi(u):
        return float(value(retraction(p + T @ u)))

    H = np.zeros((n, n))
    f0 = phi(np.zeros(n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            if i == j:
                H[i, i] = (phi(ei) - 2 * f0 + phi(-ei)) / h ** 2
            else:
                H[i, j] = H[j, i] = (phi(ei + ej) - phi(ei - ej) - phi(-ei + ej)
                                     + phi(-ei - ej)) / (4 * h * h)
    return np.linalg.eigvalsh(H)


def nearest_projector_bruteforce(A: np.ndarray, seed: int = 0) -> np.ndarray:
    """Minimise ``||A - v v*||_F`` over unit complex vectors by BFGS restarts."""
    m = A.shape[0]
    rng = np.random.default_rng(seed)

    def obj(z):
        v = z[:m] + 1j * z[m:]
        v = v / np.linalg.norm(v)
        return float(np.linalg.norm(A - np.outer(v, v.conj())) ** 2)

    best = None
    for _ in range(8):
        res = minimize(obj, rng.standard_normal(2 * m), method="BFGS",
                       options={"gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    v = best.x[:m] + 1j * best.x[m:]
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def fd_gradient(value, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (value(x + e) - value(x - e)) / (2 * h)
    return g


def tangent_fd_gradient(constraint, retraction, value, x: np.ndarray, h: float = 1e-6):
    """Riemannian gradient from directional differences along a chart basis."""
    T = null_space(fd_jacobian(constraint, x), rcond=1e-7)
    d = np.array([(value(retraction(x + h * t)) - value(retraction(x - h * t))) / (2 * h)
                  for t in T.T])
    return T @ d
