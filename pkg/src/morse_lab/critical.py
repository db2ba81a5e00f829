"""Critical-point enumeration and the fixed-point / Weyl-count certificates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateHessian, NonFiniteCrit
from .manifold import ManifoldSpec
from .morse import (TAU_CRIT, TAU_MORSE, InvariantFunction, morse_index,
                    riemannian_hessian)
from .search import dedup, newton_refine
from .symmetry import TAU_FIX, GroupActionSpec, is_fixed_point

DEDUP_RADIUS = 1e-5
MATCH_RADIUS = 1e-5


@dataclass(frozen=True)
class CriticalPoint:
    id: int
    location: np.ndarray
    value: float
    index: int
    hessian_spectrum: np.ndarray
    is_group_fixed: bool

    def as_dict(self) -> dict:
        return {"id": self.id, "location": self.location.tolist(), "value": self.value,
                "index": self.index, "spectrum": self.hessian_spectrum.tolist(),
                "is_group_fixed": self.is_group_fixed}


def enumerate_critical_points(m: ManifoldSpec, f: InvariantFunction, n_starts: int = 200,
                              seed: int = 0, spec: GroupActionSpec | None = None,
                              gtol: float = 1e-12, tau_crit: float = TAU_CRIT,
                              tau_morse: float = TAU_MORSE,
                              dedup_radius: float = DEDUP_RADIUS,
                              max_points: int = 1000) -> list[CriticalPoint]:
    """Multistart Newton search, deduplicated and sorted by ``(value, location)``.

    Projected Newton converges to critical points of every index, not just
    minima.  Starts that do not reach ``tau_crit`` are discarded.
    """
    rng = np.random.default_rng(seed)
    x = m.sample(rng, n_starts)
    x, gnorm = newton_refine(m, f, x, gtol=gtol)
    good = gnorm <= tau_crit
    if not good.any():
        return []
    reps, _ = dedup(x[good], dedup_radius, gnorm[good])
    if len(reps) > max_points:
        raise NonFiniteCrit(f"{len(reps)} distinct critical points: critical set is not finite")
    values = f.value(reps)
    order = np.lexsort(tuple(np.round(reps, 8).T[::-1]) + (np.round(values, 9),))
    out = []
    for k, i in enumerate(order):
        h = riemannian_hessian(m, f, reps[i])
        if np.min(np.abs(h.eigenvalues)) < tau_morse:
            raise DegenerateHessian(
                f"critical point with value {values[i]:.6g} has Hessian eigenvalue "
                f"{np.min(np.abs(h.eigenvalues)):.3e}")
        fixed = True if spec is None else is_fixed_point(spec, reps[i], TAU_FIX)
        out.append(CriticalPoint(k, reps[i], float(values[i]), morse_index(h),
                                 h.eigenvalues, fixed))
    return out


@dataclass
class SetMatchCertificate:
    matched: list = field(default_factory=list)         # (crit id, fixed index, distance)
    unmatched_critical: list = field(default_factory=list)
    unmatched_fixed: list = field(default_factory=list)
    radius: float = MATCH_RADIUS

    @property
    def passed(self) -> bool:
        return not self.unmatched_critical and not self.unmatched_fixed

    @property
    def max_distance(self) -> float:
        return max((d for _, _, d in self.matched), default=0.0)


def certify_cr_equals_fixed(crit: list[CriticalPoint], fixed: np.ndarray,
                            radius: float = MATCH_RADIUS) -> SetMatchCertificate:
    cert = SetMatchCertificate(radius=radius)
    fixed = np.asarray(fixed, dtype=float).reshape(-1, crit[0].location.size if crit else 1)
    used = np.zeros(len(fixed), dtype=bool)
    for c in crit:
        if len(fixed):
            d = np.linalg.norm(fixed - c.location, axis=-1)
            d[used] = np.inf
            j = int(np.argmin(d))
            if d[j] <= radius:
                used[j] = True
                cert.matched.append((c.id, j, float(d[j])))
                continue
        cert.unmatched_critical.append(c.id)
    cert.unmatched_fixed = [int(j) for j in np.nonzero(~used)[0]]
    return cert


@dataclass
class WeylCertificate:
    count: int
    weyl_order: int
    all_fixed: bool

    @property
    def passed(self) -> bool:
        return self.count == self.weyl_order and self.all_fixed


def certify_weyl_count(crit: list[CriticalPoint], weyl_order: int) -> WeylCertificate:
    return WeylCertificate(len(crit), weyl_order, all(c.is_group_fixed for c in crit))


def index_table(crit: list[CriticalPoint]) -> dict[int, int]:
    table: dict[int, int] = {}
    for c in crit:
        table[c.index] = table.get(c.index, 0) + 1
    return dict(sorted(table.items()))

