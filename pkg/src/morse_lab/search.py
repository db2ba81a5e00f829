"""Batched multistart search for critical points on a constraint manifold."""
from __future__ import annotations

import numpy as np

from .manifold import ManifoldSpec, retract_batch
from .morse import InvariantFunction, lagrange_derivatives


def _pinv_sym(H: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    cut = rcond * np.max(np.abs(w), axis=-1, keepdims=True)
    winv = np.where(np.abs(w) > cut, 1.0 / np.where(w == 0, 1.0, w), 0.0)
    return (V * winv[..., None, :]) @ np.swapaxes(V, -1, -2)


def descend(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray, iters: int = 100,
            step0: float = 0.5) -> np.ndarray:
    """Riemannian gradient descent with Armijo backtracking, batched."""
    x = np.array(x0, dtype=float)
    step = np.full(len(x), step0)
    for _ in range(iters):
        g, _, _, _ = lagrange_derivatives(m, f, x)
        gn2 = np.sum(g * g, axis=-1)
        if np.all(gn2 < 1e-28):
            break
        fx = f.value(x)
        done = np.zeros(len(x), dtype=bool)
        a = step.copy()
        for _ in range(30):
            y, ok = retract_batch(m, x - a[:, None] * g)
            good = ok & (f.value(y) <= fx - 1e-4 * a * gn2) & ~done
            x[good] = y[good]
            step[good] = np.minimum(2.0 * a[good], step0 * 4)
            done |= good
            if done.all():
                break
            a = np.where(done, a, 0.5 * a)
    return x


def newton_refine(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray,
                  max_iter: int = 60, gtol: float = 1e-12, max_step: float = 0.5):
    """Projected Newton iteration towards critical points, batched.

    Steps solve ``H xi = -g`` in the tangent space with a pseudo-inverse and
    are globalized by backtracking on ``|grad f|^2``; when Newton cannot
    decrease it the step falls back to gradient descent on ``|grad f|^2``.
    Returns ``(points, gradient_norms)``.
    """
    x = np.array(x0, dtype=float)
    gnorm = np.full(len(x), np.inf)
    for _ in range(max_iter):
        g, H, T, _ = lagrange_derivatives(m, f, x)
        gnorm = np.linalg.norm(g, axis=-1)
        act = np.nonzero(gnorm > gtol)[0]
        if len(act) == 0:
            break
        xa, ga, Ha, Ta = x[act], g[act], H[act], T[act]
        gt = (Ta @ ga[..., None])[..., 0]
        xi = -(_pinv_sym(Ha) @ gt[..., None])[..., 0]
        d = (np.swapaxes(Ta, -1, -2) @ xi[..., None])[..., 0]
        dn = np.linalg.norm(d, axis=-1)
        d *= np.minimum(1.0, max_step / np.maximum(dn, 1e-300))[:, None]
        # descent direction for F = |g|^2 / 2 is -Hess f[g]
        hg = (np.swapaxes(Ta, -1, -2) @ (Ha @ gt[..., None]))[..., 0]
        hgn = np.linalg.norm(hg, axis=-1)
        F0 = gnorm[act] ** 2
        moved = np.zeros(len(act), dtype=bool)
        alpha = np.ones(len(act))
        for _ in range(12):
            y, ok = retract_batch(m, xa + alpha[:, None] * d)
            gy = lagrange_derivatives(m, f, y)[0]
            good = ok & (np.sum(gy * gy, axis=-1) < F0) & ~moved
            xa[good] = y[good]
            moved |= good
            if moved.all():
                break
            alpha = np.where(moved, alpha, 0.5 * alpha)
        stuck = np.nonzero(~moved & (hgn > 0))[0]
        beta = np.minimum(0.1, 0.1 / np.maximum(hgn[stuck], 1e-300))
        for _ in range(20):
            if len(stuck) == 0:
                break
            y, ok = retract_batch(m, xa[stuck] - beta[:, None] * hg[stuck])
            gy = lagrange_derivatives(m, f, y)[0]
            good = ok & (np.sum(gy * gy, axis=-1) < F0[stuck])
            xa[stuck[good]] = y[good]
            stuck, beta = stuck[~good], 0.5 * beta[~good]
        x[act] = xa
    gnorm = np.linalg.norm(lagrange_derivatives(m, f, x)[0], axis=-1)
    return x, gnorm


def dedup(points: np.ndarray, radius: float, scores: np.ndarray | None = None):
    """Greedy clustering within ``radius``; keeps the lowest-score representative.

    Returns ``(representatives, labels)`` with ``labels[i]`` the cluster of
    ``points[i]``.
    """
    reps: list[int] = []
    labels = np.empty(len(points), dtype=int)
    for i, p in enumerate(points):
        if reps:
            d = np.linalg.norm(points[reps] - p, axis=-1)
            j = int(np.argmin(d))
            if d[j] <= radius:
                labels[i] = j
                if scores is not None and scores[i] < scores[reps[j]]:
                    reps[j] = i
                continue
        labels[i] = len(reps)
        reps.append(i)
    return points[reps], labels


def lexsort_rows(points: np.ndarray, decimals: int = 8) -> np.ndarray:
    """Row order sorting lexicographically on rounded coordinates."""
    key = np.round(points, decimals) + 0.0  # folds -0.0
    return np.lexsort(key.T[::-1])
