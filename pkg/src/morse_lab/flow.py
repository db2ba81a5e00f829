"""Negative gradient flow on a constraint manifold.

The integrator is a batched Dormand-Prince 5(4) pair.  Stages are evaluated
at unretracted ambient points (the tangent field extends smoothly to a
neighbourhood of M) and every accepted step is retracted back onto M.
Each row of a batch carries its own step size, so one call integrates
hundreds of independent trajectories.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import LimitUndetermined, OffManifold, SaddleShadowing, StepCollapse
from .manifold import ManifoldSpec, _project, retract_batch
from .morse import InvariantFunction

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4

# row status codes
RUNNING, DONE, COLLAPSED, RETRACT_FAILED, BUDGET, SHADOWING = range(6)
# sentinel fates
FATE_UNDETERMINED = -1
FATE_SHADOWING = -2


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-10
    atol: float = 1e-12
    h_init: float = 1e-2
    h_min: float = 1e-14
    h_max: float = 1.0
    safety: float = 0.9
    tau_flat: float = 1e-12
    t_max: float = 1e3
    r_cap: float = 1e-6
    capture_grad: float = 1e-7      # 10 * tau_crit
    r_dwell: float = 1e-2
    dwell_budget: float = 200.0

    def tightened(self, factor: float = 0.5) -> "StepControl":
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)


@dataclass
class FlowLine:
    times: np.ndarray
    points: np.ndarray
    energy: np.ndarray
    origin_limit: int | None = None
    dest_limit: int | None = None

    @property
    def samples(self):
        return list(zip(self.times, self.points))

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        N = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(N)] + ["phi"])
            for t, x, e in zip(self.times, self.points, self.energy):
                w.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in x] + [f"{e:.12g}"])


def metric_gradient(m: ManifoldSpec, f: InvariantFunction, x: np.ndarray,
                    weights: np.ndarray) -> np.ndarray:
    """Gradient of ``f`` on M for the ambient metric ``diag(weights)``."""
    ginv = 1.0 / weights
    J = m.jacobian(x)
    eg = f.ambient_gradient(x)
    u = ginv * eg
    JG = J * ginv[..., None, :]
    S = JG @ np.swapaxes(J, -1, -2)
    # redundant constraints make S singular; the pseudo-inverse handles it
    lam = (np.linalg.pinv(S, rcond=1e-10, hermitian=True) @ (J @ u[..., None]))[..., 0]
    return u - (np.swapaxes(JG, -1, -2) @ lam[..., None])[..., 0]


class _Field:
    def __init__(self, m, f, sign, proj, metric_weights):
        self.m, self.f, self.sign, self.proj = m, f, sign, proj
        self.w = None if metric_weights is None else np.asarray(metric_weights, float)

    def __call__(self, x):
        if self.w is None:
            g = _project(self.m, x, self.f.ambient_gradient(x))
        else:
            g = metric_gradient(self.m, self.f, x, self.w)
        v = -self.sign * g
        if self.proj is not None:
            v = v @ self.proj
        return v


@dataclass
class _BatchResult:
    x: np.ndarray
    t: np.ndarray
    status: np.ndarray
    fate: np.ndarray
    lines: list | None


def _run(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray, *, sign: float,
         control: StepControl, t_end=None, crit: np.ndarray | None = None,
         origin: int | None = None, proj: np.ndarray | None = None,
         metric_weights=None, record: bool = False) -> _BatchResult:
    """Integrate a batch of trajectories.

    With ``t_end`` (scalar or per row) rows stop at that time.  With
    ``crit`` rows stop when captured by a critical point, when they dwell
    too long near one, or when ``t_max`` is exhausted.
    """
    x = np.array(x0, dtype=float, ndmin=2)
    B = len(x)
    field = _Field(m, f, sign, proj, metric_weights)
    t = np.zeros(B)
    h = np.full(B, control.h_init)
    status = np.full(B, RUNNING)
    fate = np.full(B, FATE_UNDETERMINED)
    dwell = np.zeros(B)
    horizon = np.full(B, control.t_max) if t_end is None else \
        np.broadcast_to(np.asarray(t_end, float), (B,)).copy()
    phi = f.value(x)
    k1 = field(x)
    lines = [[(0.0, x[i].copy(), phi[i])] for i in range(B)] if record else None

    def monitor(idx, y, speed):
        if crit is None:
            return
        d = np.linalg.norm(y[:, None, :] - crit[None], axis=-1)
        j = np.argmin(d, axis=1)
        dmin = d[np.arange(len(idx)), j]
        cap = (dmin <= control.r_cap) & (speed <= control.capture_grad)
        fate[idx[cap]] = j[cap]
        status[idx[cap]] = DONE
        near = (dmin <= control.r_dwell) & ~cap
        if origin is not None:
            near &= j != origin
        dwell[idx] = np.where(near, dwell[idx] + h_used[idx], 0.0)
        shadow = (dwell[idx] > control.dwell_budget) & ~cap
        status[idx[shadow]] = SHADOWING
        fate[idx[shadow]] = FATE_SHADOWING

    h_used = np.zeros(B)
    if crit is not None:
        monitor(np.arange(B), x, np.linalg.norm(k1, axis=-1))
    done_horizon = (horizon <= 0) & (status == RUNNING)
    status[done_horizon] = DONE

    while True:
        act = np.nonzero(status == RUNNING)[0]
        if len(act) == 0:
            break
        xa, ta = x[act], t[act]
        ha = np.minimum(h[act], horizon[act] - ta)
        ks = [k1[act]]
        for s in range(1, 7):
            incr = sum(_A[s][j] * ks[j] for j in range(s) if _A[s][j] != 0.0)
            ks.append(field(xa + ha[:, None] * incr))
        y = xa + ha[:, None] * sum(_B5[j] * ks[j] for j in range(6) if _B5[j] != 0.0)
        err = ha * np.linalg.norm(sum(_E[j] * ks[j] for j in range(7)), axis=-1)
        scale = control.atol + control.rtol * np.maximum(
            np.linalg.norm(xa, axis=-1), np.linalg.norm(y, axis=-1))
        ratio = err / scale
        yr, ok = retract_batch(m, y)
        if proj is not None:
            yr = yr @ proj
        yr = np.where(ok[:, None], yr, xa)
        phi_new = f.value(yr)
        # forward flow must not raise phi, backward flow must not lower it
        rise = phi_new - phi[act] if sign > 0 else phi[act] - phi_new
        small = ratio <= 1.0
        accept = ok & small & (rise <= control.tau_flat)
        with np.errstate(divide="ignore"):
            grow = control.safety * np.where(ratio > 0, ratio, 1e-10) ** -0.2
        fac = np.where(accept, np.clip(grow, 0.2, 5.0), np.clip(grow, 0.2, 0.9))
        # retraction failure or energy violation: halve the step
        fac = np.where(~ok | (small & ~accept), 0.5, fac)
        h_new = np.minimum(ha * fac, control.h_max)
        acc = act[accept]
        if len(acc):
            k7 = field(yr[accept])  # stage 7 was evaluated before retraction
            x[acc] = yr[accept]
            t[acc] = ta[accept] + ha[accept]
            phi[acc] = phi_new[accept]
            k1[acc] = k7
            h_used[acc] = ha[accept]
            if record:
                for i in acc:
                    lines[i].append((t[i], x[i].copy(), phi[i]))
            reached = acc[t[acc] >= horizon[acc] - 1e-15]
            status[reached[status[reached] == RUNNING]] = DONE if t_end is not None else BUDGET
            monitor(acc, x[acc], np.linalg.norm(k7, axis=-1))
        h[act] = h_new
        collapse = act[(h_new < control.h_min) & (status[act] == RUNNING)]
        status[collapse] = COLLAPSED
        failed = act[~ok & (h_new < control.h_min)]
        status[failed] = RETRACT_FAILED
    return _BatchResult(x, t, status, fate, lines)


def _lines_from(res: _BatchResult, i: int) -> FlowLine:
    ts, xs, es = zip(*res.lines[i])
    return FlowLine(np.array(ts), np.array(xs), np.array(es))


def integrate_flow(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray, horizon: float,
                   control: StepControl | None = None, direction: str = "forward",
                   proj: np.ndarray | None = None, metric_weights=None) -> FlowLine:
    control = control or StepControl()
    x0 = np.asarray(x0, dtype=float)
    if np.any(m.residual(x0) > m.tau_on):
        raise OffManifold(f"start point is not on {m.name}")
    res = _run(m, f, x0[None], sign=_sign(direction), control=control, t_end=horizon,
               proj=proj, metric_weights=metric_weights, record=True)
    _raise_for(res.status[0], res.t[0])
    return _lines_from(res, 0)


def integrate_batch(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray, horizon,
                    control: StepControl | None = None, direction: str = "forward",
                    proj: np.ndarray | None = None, metric_weights=None) -> np.ndarray:
    """End points of many trajectories integrated to per-row ``horizon``."""
    res = _run(m, f, x0, sign=_sign(direction), control=control or StepControl(),
               t_end=horizon, proj=proj, metric_weights=metric_weights)
    for s, t in zip(res.status, res.t):
        _raise_for(s, t)
    return res.x


def _sign(direction: str) -> float:
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    return 1.0 if direction == "forward" else -1.0


def _raise_for(status: int, t: float) -> None:
    if status == COLLAPSED:
        raise StepCollapse(f"step size underflow at t={t:.6g}")
    if status == RETRACT_FAILED:
        raise OffManifold(f"retraction failed at t={t:.6g}")


@dataclass
class FateTable:
    fates: np.ndarray       # critical-point id, or FATE_UNDETERMINED / FATE_SHADOWING
    times: np.ndarray       # capture time (or time at which the row stopped)
    endpoints: np.ndarray


def classify_fates(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray,
                   crit_locations: np.ndarray, direction: str = "forward",
                   control: StepControl | None = None, origin: int | None = None,
                   proj: np.ndarray | None = None) -> FateTable:
    """Batched limit classification; failures are recorded, never raised."""
    res = _run(m, f, x0, sign=_sign(direction), control=control or StepControl(),
               crit=np.asarray(crit_locations, float), origin=origin, proj=proj)
    return FateTable(res.fate, res.t, res.x)


def flow_to_limit(m: ManifoldSpec, f: InvariantFunction, x0: np.ndarray,
                  direction: str, crit_locations: np.ndarray,
                  control: StepControl | None = None, proj: np.ndarray | None = None):
    """Follow one trajectory until capture; returns ``(critical id, capture time)``."""
    x0 = np.asarray(x0, dtype=float)
    if np.any(m.residual(x0) > m.tau_on):
        raise OffManifold(f"start point is not on {m.name}")
    control = control or StepControl()
    res = _run(m, f, x0[None], sign=_sign(direction), control=control,
               crit=np.asarray(crit_locations, float), proj=proj)
    s, t = res.status[0], res.t[0]
    _raise_for(s, t)
    if s == SHADOWING:
        raise SaddleShadowing(f"trajectory lingered near a critical point until t={t:.6g}")
    if res.fate[0] < 0:
        raise LimitUndetermined(f"no limit captured within t_max={control.t_max:g}")
    return int(res.fate[0]), float(t)


def equivariance_certificate(m: ManifoldSpec, f: InvariantFunction, spec, n_trials: int = 100,
                             seed: int = 0, control: StepControl | None = None,
                             t_range=(0.0, 5.0), metric_weights=None,
                             identity: bool = False) -> float:
    """Max ``|gamma_{g x}(t) - g gamma_x(t)|`` over sampled ``(g, x, t)``."""
    from .symmetry import act, identity_element, random_element

    rng = np.random.default_rng(seed)
    control = control or StepControl()
    x = m.sample(rng, n_trials)
    t = rng.uniform(*t_range, n_trials)
    gs = [identity_element(spec) if identity else random_element(spec, rng)
          for _ in range(n_trials)]
    gx = np.array([act(g, xi) for g, xi in zip(gs, x)])
    ends = integrate_batch(m, f, np.vstack([x, gx]), np.concatenate([t, t]), control,
                           metric_weights=metric_weights)
    moved = np.array([act(g, e) for g, e in zip(gs, ends[:n_trials])])
    return float(np.max(np.linalg.norm(ends[n_trials:] - moved, axis=-1)))
