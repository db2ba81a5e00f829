"""Moduli spaces of flow lines between critical points of index gap two.

``W^u(p) ∩ W^s(q)`` is represented by its section on the unstable direction
sphere: a direction ``v`` in the negative eigenspace ``E^-(p)`` is shot as
``retract(p + eps v)`` and belongs to the moduli set when its forward limit
is ``q``.

For a torus action the negative eigenspace splits into weight planes.  The
torus rotates each plane through a character ``alpha``; the codimension one
subtorus ``K = ker(alpha)`` fixes the plane pointwise, so every shot from it
stays inside the fixed set ``M^K``.  Those shots are integrated with the
orthogonal projector onto ``Fix(K)`` applied to the vector field and to
every accepted state, which keeps trajectories that end at a saddle exactly
on its stable manifold.  When ``lambda(p) > 2`` the fate ``q`` of an index
gap two pair occupies a measure zero subset of the direction sphere, so a
generic sphere sample would miss it; the plane grids do not.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import expm, null_space, subspace_angles
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist, directed_hausdorff

from .critical import CriticalPoint
from .errors import (FramePropagationDiverged, IndexGapUnsupported,
                     ResolutionInsufficient)
from .flow import (FATE_UNDETERMINED, FlowLine, StepControl, _Field, _run,
                   classify_fates)
from .manifold import ManifoldSpec, _project, retract_batch
from .morse import InvariantFunction, lagrange_derivatives, riemannian_hessian
from .symmetry import (GroupActionSpec, act, fixed_subspace_projector,
                       sample_element, stabilizer_subspace)

EPSILON = 1e-4
N_DIRECTIONS = 720
N_GENERIC = 32
MIN_MEMBERS = 12
GAP_FACTOR = 3.0
TAU_ORBIT = 1e-2 * np.pi
TAU_ANGLE = 1e-3
TAU_STAB = 1e-4
TAU_TRANSV = 1e-3
SHOOT_CONTROL = StepControl(rtol=1e-9, atol=1e-12)


@dataclass
class ShootingGroup:
    kind: str                      # "plane", "sphere" or "generic"
    basis: np.ndarray              # (N, k) orthonormal, inside E^-(p)
    weights: np.ndarray            # (d,) torus character of a plane; zeros otherwise
    proj: np.ndarray | None        # projector onto Fix(K), or None
    directions: np.ndarray         # (M, N) ambient unit vectors
    params: np.ndarray             # (M,) grid angles for planes, nan otherwise
    spacing: float
    fates: np.ndarray = field(default=None)
    times: np.ndarray = field(default=None)


@dataclass
class UnstableSphereSample:
    p_id: int
    p_location: np.ndarray
    eneg: np.ndarray               # (N, lambda) orthonormal E^-(p)
    epsilon: float
    groups: list[ShootingGroup]

    @property
    def directions(self) -> np.ndarray:
        return np.vstack([g.directions for g in self.groups])

    @property
    def fates(self) -> np.ndarray:
        return np.concatenate([g.fates for g in self.groups])

    def fate_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.fates, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def shooting_points(self, m: ManifoldSpec, directions: np.ndarray,
                        proj: np.ndarray | None = None) -> np.ndarray:
        x, _ = retract_batch(m, self.p_location + self.epsilon * np.atleast_2d(directions))
        return x if proj is None else x @ proj


@dataclass
class ModuliComponent:
    pair: tuple[int, int]
    sample: UnstableSphereSample
    group: ShootingGroup
    members: np.ndarray            # indices into group.directions
    circle_certificate: dict | None = None
    rotation_certificate: dict | None = None
    stabilizer_certificate: dict | None = None
    transversality: dict | None = None

    @property
    def member_directions(self) -> np.ndarray:
        return self.group.directions[self.members]

    @property
    def spacing(self) -> float:
        return self.group.spacing


def negative_eigenspace(m: ManifoldSpec, f: InvariantFunction, p: CriticalPoint):
    h = riemannian_hessian(m, f, p.location)
    neg = h.eigenvalues < 0
    return h.eigenvectors[:, neg], h.eigenvalues[neg]


def _weight_subspaces(E: np.ndarray, spec: GroupActionSpec, rtol: float = 1e-6):
    """Split span(E) into isotypic subspaces of the torus action.

    Returns a list of ``(basis (N, k), weight (d,))``; the weight is the
    character of the rotation when ``k == 2`` and zeros otherwise.
    """
    d = spec.group_dim
    Bs = np.einsum("ai,dab,bj->dij", E, spec.generators, E) if d else np.zeros((0,) * 3)
    if d == 0 or np.allclose(Bs, 0.0, atol=1e-12):
        return [(E, np.zeros(d))]
    coef = 1.0 / (np.arange(d) + np.sqrt(2.0))     # fixed generic combination
    C = np.tensordot(coef, Bs, axes=1)
    w2, Q = np.linalg.eigh(C.T @ C)
    out = []
    start = 0
    scale = max(w2[-1], 1.0)
    for k in range(1, len(w2) + 1):
        if k == len(w2) or w2[k] - w2[start] > rtol * scale:
            W = E @ Q[:, start:k]
            weight = np.zeros(d)
            if W.shape[1] == 2 and w2[start] > rtol * scale:
                weight = np.einsum("a,dab,b->d", W[:, 1], spec.generators, W[:, 0])
            out.append((W, weight))
            start = k
    return out


def sample_unstable_sphere(m: ManifoldSpec, f: InvariantFunction, p: CriticalPoint,
                           crit: list[CriticalPoint], spec: GroupActionSpec,
                           n_directions: int = N_DIRECTIONS, n_generic: int = N_GENERIC,
                           epsilon: float = EPSILON, control: StepControl = SHOOT_CONTROL,
                           seed: int = 0) -> UnstableSphereSample:
    """Shoot the unstable sphere of ``p`` and classify every forward limit."""
    if p.index < 1:
        raise ValueError("unstable sphere of a minimum is empty")
    E, _ = negative_eigenspace(m, f, p)
    rng = np.random.default_rng([seed, p.id])
    groups = []
    for W, weight in _weight_subspaces(E, spec):
        k = W.shape[1]
        proj = None
        if np.any(weight != 0):
            K = null_space(weight[None, :]).T
            proj = fixed_subspace_projector(spec, K) if len(K) else None
        if k == 2:
            phi = 2 * np.pi * np.arange(n_directions) / n_directions
            dirs = np.outer(np.cos(phi), W[:, 0]) + np.outer(np.sin(phi), W[:, 1])
            groups.append(ShootingGroup("plane", W, weight, proj, dirs, phi,
                                        2 * np.pi / n_directions))
        else:
            z = rng.standard_normal((n_directions, k))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            groups.append(ShootingGroup("sphere", W, weight, proj, z @ W.T,
                                        np.full(n_directions, np.nan),
                                        _mean_spacing(z)))
    if len(groups) > 1 and n_generic > 0:
        z = rng.standard_normal((n_generic, E.shape[1]))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        groups.append(ShootingGroup("generic", E, np.zeros(spec.group_dim), None, z @ E.T,
                                    np.full(n_generic, np.nan), _mean_spacing(z)))
    sample = UnstableSphereSample(p.id, p.location, E, epsilon, groups)
    locs = np.array([c.location for c in crit])
    for g in groups:
        x0 = sample.shooting_points(m, g.directions, g.proj)
        table = classify_fates(m, f, x0, locs, "forward", control, origin=p.id, proj=g.proj)
        g.fates, g.times = table.fates, table.times
    return sample


def _mean_spacing(z: np.ndarray) -> float:
    if len(z) < 2:
        return np.pi
    D = cdist(z, z)
    np.fill_diagonal(D, np.inf)
    return float(np.mean(D.min(axis=1)))


def moduli_components(sample: UnstableSphereSample, p: CriticalPoint, q: CriticalPoint,
                      min_members: int = MIN_MEMBERS,
                      gap_factor: float = GAP_FACTOR) -> list[ModuliComponent]:
    if p.index - q.index != 2:
        raise IndexGapUnsupported(f"index gap {p.index - q.index} (only 2 is supported)")
    comps = []
    for g in sample.groups:
        if g.kind == "generic":
            continue
        hit = g.fates == q.id
        if not hit.any():
            continue
        if g.kind == "plane":
            clusters = _cyclic_runs(hit)
        else:
            idx = np.nonzero(hit)[0]
            adj = cdist(g.directions[idx], g.directions[idx]) <= gap_factor * g.spacing
            _, lab = connected_components(adj, directed=False)
            clusters = [idx[lab == c] for c in range(lab.max() + 1)]
        for members in clusters:
            if len(members) < min_members:
                raise ResolutionInsufficient(
                    f"cluster of {len(members)} directions for pair ({p.id}, {q.id})")
            comps.append(ModuliComponent((p.id, q.id), sample, g, np.asarray(members)))
    return comps


def _cyclic_runs(hit: np.ndarray) -> list[np.ndarray]:
    """Maximal runs of consecutive True entries on a cyclic grid."""
    n = len(hit)
    if hit.all():
        return [np.arange(n)]
    start = int(np.argmin(hit))          # a non-member: runs cannot wrap past it
    order = (start + np.arange(n)) % n
    runs, cur = [], []
    for i in order:
        if hit[i]:
            cur.append(i)
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return runs


# ---------------------------------------------------------------- circle

def _plane_frame(dirs: np.ndarray) -> np.ndarray:
    """Best-fit plane through the origin of a direction cloud, (N, 2)."""
    _, _, Vh = np.linalg.svd(dirs, full_matrices=False)
    return Vh[:2].T


def _angles(dirs: np.ndarray, frame: np.ndarray) -> np.ndarray:
    c = dirs @ frame
    return np.mod(np.arctan2(c[:, 1], c[:, 0]), 2 * np.pi)


def _max_cyclic_gap(angles: np.ndarray) -> float:
    a = np.sort(np.mod(angles, 2 * np.pi))
    if len(a) == 0:
        return 2 * np.pi
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    return float(gaps.max())


def _orbit_directions(comp: ModuliComponent, spec: GroupActionSpec, m: ManifoldSpec,
                      x0: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    s = comp.sample
    out = []
    for i in range(spec.group_dim):
        for th in thetas:
            e = np.zeros(spec.group_dim)
            e[i] = th
            y = act(sample_element(spec, e), x0)
            u = s.eneg.T @ (y - s.p_location)
            out.append(s.eneg @ (u / np.linalg.norm(u)))
    return np.array(out)


def certify_circle(comp: ModuliComponent, spec: GroupActionSpec, m: ManifoldSpec,
                   n_theta: int = 720, tau_orbit: float = TAU_ORBIT,
                   gap_factor: float = GAP_FACTOR) -> dict:
    dirs = comp.member_directions
    frame = _plane_frame(dirs)
    max_gap = _max_cyclic_gap(_angles(dirs, frame))
    closed = max_gap <= gap_factor * comp.spacing
    x0 = comp.sample.shooting_points(m, dirs[0], comp.group.proj)[0]
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta
    orbit = _orbit_directions(comp, spec, m, x0, thetas)
    # the member cloud and the swept orbit both live on the unit sphere of E^-(p)
    haus = max(directed_hausdorff(orbit, dirs)[0], directed_hausdorff(dirs, orbit)[0])
    cert = {"closed": bool(closed), "max_gap": max_gap,
            "gap_threshold": gap_factor * comp.spacing,
            "orbit_match": float(haus), "orbit_threshold": tau_orbit,
            "passed": bool(closed and haus <= tau_orbit)}
    comp.circle_certificate = cert
    return cert


# -------------------------------------------------------------- rotation

class AngleMap:
    """Angular coordinate on a component circle.

    Directions are placed on the best-fit plane of the member cloud and
    their polar angle is mapped through the member parameter table by
    periodic linear interpolation.
    """

    def __init__(self, dirs: np.ndarray, params: np.ndarray | None = None):
        self.frame = _plane_frame(dirs)
        self.identity = params is None
        a = _angles(dirs, self.frame)
        p = a.copy() if params is None else np.mod(np.asarray(params, float), 2 * np.pi)
        order = np.argsort(a)
        self.a, self.p = a[order], p[order]

    def flip(self) -> None:
        self.frame = self.frame * np.array([1.0, -1.0])
        a = np.mod(-self.a, 2 * np.pi)
        order = np.argsort(a)
        self.a, self.p = a[order], np.mod(-self.p, 2 * np.pi)[order]

    def __call__(self, dirs: np.ndarray) -> np.ndarray:
        a = _angles(np.atleast_2d(dirs), self.frame)
        if self.identity:
            return a
        # unwrap the table so interpolation is continuous across 0
        p = self.a[0] + np.concatenate([[0.0], np.cumsum(_wrap(np.diff(self.p)))]) \
            + _wrap(self.p[0] - self.a[0])
        xa = np.concatenate([self.a - 2 * np.pi, self.a, self.a + 2 * np.pi])
        xp = np.concatenate([p - 2 * np.pi, p, p + 2 * np.pi])
        return np.mod(np.interp(a, xa, xp), 2 * np.pi)

    def monotone(self) -> bool:
        steps = _wrap(np.diff(np.concatenate([self.p, self.p[:1]])))
        return bool(np.all(steps > 0) or np.all(steps < 0))


def _wrap(a):
    return np.mod(np.asarray(a) + np.pi, 2 * np.pi) - np.pi


def certify_rotation_action(comp: ModuliComponent, spec: GroupActionSpec, m: ManifoldSpec,
                            n_theta: int = 64, n_base: int = 8,
                            tau_angle: float = TAU_ANGLE,
                            params: np.ndarray | None = None) -> dict:
    """Angle-shift table of every generator on the component circle.

    ``params`` overrides the member angle table (negative controls).
    """
    s = comp.sample
    dirs = comp.member_directions
    amap = AngleMap(dirs, params)
    base = dirs[np.linspace(0, len(dirs) - 1, n_base).round().astype(int)]
    x0 = s.shooting_points(m, base, comp.group.proj)
    thetas = 2 * np.pi * np.arange(n_theta) / n_theta

    def shifts():
        out = np.zeros((spec.group_dim, n_theta, n_base))
        a0 = amap(base)
        for i in range(spec.group_dim):
            for k, th in enumerate(thetas):
                e = np.zeros(spec.group_dim)
                e[i] = th
                g = sample_element(spec, e)
                y = np.array([act(g, x) for x in x0])
                u = (y - s.p_location) @ s.eneg
                v = (u / np.linalg.norm(u, axis=1, keepdims=True)) @ s.eneg.T
                out[i, k] = _wrap(amap(v) - a0)
        return out

    delta = shifts()
    small = delta[:, 1]                     # shift at the first nonzero angle
    mover = int(np.argmax(np.abs(small).max(axis=1)))
    if np.median(small[mover]) < 0:
        amap.flip()
        delta = shifts()
    winding = []
    for i in range(spec.group_dim):
        inc = _wrap(np.diff(np.concatenate([delta[i, :, 0], delta[i, :1, 0]])))
        winding.append(int(np.round(inc.sum() / (2 * np.pi))))
    spread = float(np.max(np.abs(_wrap(delta - delta[..., :1])))) if n_base > 1 else 0.0
    jj, kk = np.meshgrid(np.arange(n_theta), np.arange(n_theta), indexing="ij")
    d0 = delta[..., 0]
    homo = float(np.max(np.abs(_wrap(d0[:, (jj + kk) % n_theta] - d0[:, jj] - d0[:, kk]))))
    linear = [float(np.max(np.abs(_wrap(delta[i] - w * thetas[:, None]))))
              for i, w in enumerate(winding)]
    transitive = any(w != 0 for w in winding)
    monotone = amap.monotone()
    cert = {"transitive": transitive, "angle_map_monotone": monotone,
            "winding": winding, "homomorphism_residual": homo,
            "base_point_spread": spread, "linear_residual": linear,
            "threshold": tau_angle,
            "passed": bool(transitive and monotone and homo <= tau_angle
                           and spread <= tau_angle)}
    comp.rotation_certificate = cert
    return cert


# ------------------------------------------------------------- flow lines

def member_lines(comp: ModuliComponent, m: ManifoldSpec, f: InvariantFunction,
                 crit: list[CriticalPoint], members: np.ndarray,
                 control: StepControl = SHOOT_CONTROL, epsilon: float | None = None):
    """Recorded forward flow lines from selected member directions."""
    s = comp.sample
    dirs = comp.group.directions[members]
    eps = s.epsilon if epsilon is None else epsilon
    x0, _ = retract_batch(m, s.p_location + eps * dirs)
    if comp.group.proj is not None:
        x0 = x0 @ comp.group.proj
    locs = np.array([c.location for c in crit])
    res = _run(m, f, x0, sign=1.0, control=control, crit=locs, origin=s.p_id,
               proj=comp.group.proj, record=True)
    lines = []
    for i in range(len(dirs)):
        ts, xs, es = zip(*res.lines[i])
        dest = int(res.fate[i]) if res.fate[i] >= 0 else None
        lines.append(FlowLine(np.array(ts), np.array(xs), np.array(es), s.p_id, dest))
    return lines


def _midpoint_index(line: FlowLine, level: float) -> int:
    return int(np.argmin(np.abs(line.energy - level)))


def certify_stabilizer(comp: ModuliComponent, spec: GroupActionSpec, m: ManifoldSpec,
                       f: InvariantFunction, crit: list[CriticalPoint], n_members: int = 8,
                       tau: float = TAU_STAB, rtol: float = 1e-7) -> dict:
    n = len(comp.members)
    pick = comp.members[np.linspace(0, n - 1, min(n_members, n)).round().astype(int)]
    lines = member_lines(comp, m, f, crit, pick)
    p, q = crit[comp.pair[0]], crit[comp.pair[1]]
    level = 0.5 * (p.value + q.value)
    kernels = []
    for line in lines:
        c = line.points[_midpoint_index(line, level)]
        K, _ = stabilizer_subspace(spec, c, rtol)
        kernels.append(K)
    dims = [K.shape[1] for K in kernels]
    target = spec.group_dim - 1
    angle = 0.0
    for a in range(len(kernels)):
        for b in range(a + 1, len(kernels)):
            if kernels[a].shape[1] and kernels[a].shape[1] == kernels[b].shape[1]:
                angle = max(angle, float(np.max(subspace_angles(kernels[a], kernels[b]))))
            elif kernels[a].shape[1] != kernels[b].shape[1]:
                angle = np.pi / 2
    constant = all(dm == target for dm in dims)
    cert = {"constant_dim": bool(constant), "dims": dims,
            "codim": int(spec.group_dim - dims[0]) if dims else None,
            "max_principal_angle": angle, "threshold": tau,
            "n_members": len(lines),
            "passed": bool(constant and angle <= tau and len(lines) >= min(8, n_members))}
    comp.stabilizer_certificate = cert
    return cert


# ----------------------------------------------------------- transversality

def _propagate(m, f, line: FlowLine, frame: np.ndarray, start: int, stop: int):
    """Push a tangent frame along stored samples with ``v' = -H v``."""
    _, _, _, H = lagrange_derivatives(m, f, line.points)
    step = 1 if stop >= start else -1
    V = frame
    for k in range(start, stop, step):
        dt = line.times[k + step] - line.times[k]
        Hk = 0.5 * (H[k] + H[k + step])
        V = expm(-dt * Hk) @ V
        V = _project(m, line.points[k + step], V.T).T
        if not np.all(np.isfinite(V)):
            raise FramePropagationDiverged("frame became non-finite")
        V, R = np.linalg.qr(V)
        if np.min(np.abs(np.diag(R))) < 1e-300:
            raise FramePropagationDiverged("frame collapsed")
    return V


def transversality_check(p: CriticalPoint, q: CriticalPoint, line: FlowLine,
                         m: ManifoldSpec, f: InvariantFunction,
                         tau_transv: float = TAU_TRANSV,
                         drop_most_independent: bool = False) -> dict:
    """Principal-value test of ``T W^u(p) + T W^s(q) = T M`` at the energy midpoint.

    ``sigma_min`` is the ``n``-th singular value of ``[U V]`` with ``U`` and
    ``V`` orthonormal frames of the two tangent spaces.
    """
    n = m.intrinsic_dim
    hp = riemannian_hessian(m, f, p.location)
    hq = riemannian_hessian(m, f, q.location)
    U0 = hp.eigenvectors[:, hp.eigenvalues < 0]
    V0 = hq.eigenvectors[:, hq.eigenvalues > 0]
    mid = _midpoint_index(line, 0.5 * (p.value + q.value))
    last = len(line.times) - 1
    U0, _ = np.linalg.qr(_project(m, line.points[0], U0.T).T)
    V0, _ = np.linalg.qr(_project(m, line.points[last], V0.T).T)
    U = _propagate(m, f, line, U0, 0, mid)
    V = _propagate(m, f, line, V0, last, mid)
    if drop_most_independent and V.shape[1]:
        W = V - U @ (U.T @ V)
        _, _, Vh = np.linalg.svd(W)
        V = V @ Vh[1:].T
    sv = np.linalg.svd(np.hstack([U, V]), compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0]))
    sigma = float(sv[n - 1]) if len(sv) >= n else 0.0
    dim_identity = p.index + (n - q.index) - n
    report = {"sigma_min": sigma, "threshold": tau_transv, "rank": rank, "n": n,
              "dim_identity": dim_identity, "dim_identity_ok": dim_identity == 2,
              "transversal": bool(sigma >= tau_transv and rank == n),
              "midpoint_value": float(line.energy[mid])}
    report["passed"] = bool(report["transversal"] and report["dim_identity_ok"])
    return report


# ------------------------------------------------------------ R-action

def _line_spline(line: FlowLine, m: ManifoldSpec, f: InvariantFunction):
    field = _Field(m, f, 1.0, None, None)
    t, x = line.times, line.points
    keep = np.concatenate([[True], np.diff(t) > 0])
    t, x = t[keep], x[keep]
    v = field(x)
    return CubicHermiteSpline(t, x, v, axis=0), CubicHermiteSpline(
        t, line.energy[keep], -np.sum(v * v, axis=1))


def tube_distance(a: FlowLine, b: FlowLine, m: ManifoldSpec, f: InvariantFunction,
                  n_levels: int = 50, margin: float = 0.05) -> float:
    """Max distance between two flow lines matched on level sets of ``f``."""
    hi = min(a.energy[0], b.energy[0])
    lo = max(a.energy[-1], b.energy[-1])
    span = hi - lo
    levels = np.linspace(lo + margin * span, hi - margin * span, n_levels)
    pts = []
    for line in (a, b):
        xs, es = _line_spline(line, m, f)
        ts = []
        for lv in levels:
            k = int(np.searchsorted(-line.energy, -lv))
            t0, t1 = line.times[max(k - 1, 0)], line.times[min(k, len(line.times) - 1)]
            for _ in range(60):
                tm = 0.5 * (t0 + t1)
                if es(tm) > lv:
                    t0 = tm
                else:
                    t1 = tm
            ts.append(0.5 * (t0 + t1))
        pts.append(xs(np.array(ts)))
    return float(np.max(np.linalg.norm(pts[0] - pts[1], axis=1)))


def backward_return(comp: ModuliComponent, m: ManifoldSpec, f: InvariantFunction,
                    crit: list[CriticalPoint], lines: list[FlowLine],
                    control: StepControl = SHOOT_CONTROL) -> np.ndarray:
    """Backward limits of the energy midpoints of ``lines``."""
    p, q = crit[comp.pair[0]], crit[comp.pair[1]]
    level = 0.5 * (p.value + q.value)
    starts = np.array([ln.points[_midpoint_index(ln, level)] for ln in lines])
    locs = np.array([c.location for c in crit])
    return classify_fates(m, f, starts, locs, "backward", control,
                          proj=comp.group.proj).fates


__all__ = ["UnstableSphereSample", "ModuliComponent", "ShootingGroup", "AngleMap",
           "sample_unstable_sphere", "moduli_components", "certify_circle",
           "certify_rotation_action", "certify_stabilizer", "transversality_check",
           "member_lines", "tube_distance", "backward_return", "negative_eigenspace",
           "FATE_UNDETERMINED"]
