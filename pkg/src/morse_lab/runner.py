"""Scenario configuration, the certification pipeline and JSON reports."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .critical import (certify_cr_equals_fixed, certify_weyl_count,
                       enumerate_critical_points)
from .errors import HYPOTHESIS_ERRORS, ConfigError, MorseLabError
from .flow import StepControl, equivariance_certificate
from .moduli import (certify_circle, certify_rotation_action, certify_stabilizer,
                     member_lines, moduli_components, sample_unstable_sphere,
                     transversality_check)
from .morse import euler_characteristic
from .scenarios import REGISTRY, Scenario, get_scenario
from .symmetry import enumerate_fixed_points, invariance_residual

TOLERANCE_DEFAULTS = {
    "tau_on": 1e-9,
    "tau_tan": 1e-8,
    "tau_retract_basin": 1e-2,
    "tau_crit": 1e-8,
    "tau_morse": 1e-6,
    "tau_fix": 1e-8,
    "tau_inv": 1e-9,
    "tau_equiv": 1e-6,
    "tau_equiv_control": 1e-3,
    "tau_match": 1e-5,
    "dedup_radius": 1e-5,
    "r_cap": 1e-6,
    "tau_flat": 1e-12,
    "tau_orbit": 1e-2 * math.pi,
    "tau_angle": 1e-3,
    "tau_stab": 1e-4,
    "tau_transv": 1e-3,
    "rtol": 1e-9,
    "atol": 1e-12,
}

RESOLUTION_DEFAULTS = {
    "n_starts": None,            # scenario default
    "n_directions": 720,
    "n_generic": 32,
    "epsilon": 1e-4,
    "n_equiv_trials": 100,
    "n_inv_samples": 200,
    "n_theta_orbit": 720,
    "n_theta_rotation": 64,
    "n_base_points": 8,
    "n_stab_members": 8,
    "t_max": 1e3,
    "dwell_budget": 200.0,
}

OUTPUT_KEYS = {"report", "dump_trajectories", "dump_directions", "dump_dir"}
TOP_KEYS = {"scenario", "seed", "tolerances", "resolution", "outputs"}


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in REGISTRY:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        for name, table, known in (("tolerances", self.tolerances, TOLERANCE_DEFAULTS),
                                   ("resolution", self.resolution, RESOLUTION_DEFAULTS),
                                   ("outputs", self.outputs, OUTPUT_KEYS)):
            if not isinstance(table, dict):
                raise ConfigError(f"{name} must be a table")
            unknown = set(table) - set(known)
            if unknown:
                raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(f"tolerance {k} must be a positive number")
        for k, v in self.resolution.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise ConfigError(f"resolution {k} must be a positive number")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in data:
            raise ConfigError("config needs a scenario")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, TOLERANCE_DEFAULTS[key]))

    def res(self, key: str, default=None):
        v = self.resolution.get(key, RESOLUTION_DEFAULTS[key])
        return default if v is None else v

    def step_control(self) -> StepControl:
        return StepControl(rtol=self.tol("rtol"), atol=self.tol("atol"),
                           tau_flat=self.tol("tau_flat"), t_max=float(self.res("t_max")),
                           r_cap=self.tol("r_cap"), capture_grad=10 * self.tol("tau_crit"),
                           dwell_budget=float(self.res("dwell_budget")))


def metric(value, threshold, op: str = "<=") -> dict:
    value = float(value) if not isinstance(value, (int, np.integer)) else int(value)
    return {"value": value, "threshold": threshold, "op": op,
            "pass": bool(_compare(value, threshold, op))}


def _compare(value, threshold, op: str) -> bool:
    return {"<=": value <= threshold, ">=": value >= threshold,
            ">": value > threshold, "==": value == threshold}[op]


def _broken_metric_weights(scenario: Scenario) -> np.ndarray:
    """Ambient metric scaled by 2 on the coordinate the group moves most."""
    motion = np.linalg.norm(scenario.group.generators, axis=1).sum(axis=0)
    w = np.ones(scenario.manifold.ambient_dim)
    w[int(np.argmax(motion))] = 2.0
    return w


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MORSE_LAB_THREADS", "1")))
    except ValueError:
        return 1


def run_scenario(cfg: ScenarioConfig, scenario: Scenario | None = None):
    """Run the full pipeline; returns ``(report, timings)``."""
    sc = scenario or get_scenario(cfg.scenario)
    m = replace(sc.manifold, tau_on=cfg.tol("tau_on"), tau_tan=cfg.tol("tau_tan"),
                tau_retract_basin=cfg.tol("tau_retract_basin"))
    f, G = sc.function, sc.group
    ctrl = cfg.step_control()
    timings: dict[str, float] = {}
    clock = time.perf_counter

    report = {
        "scenario": {**sc.describe(), "seed": cfg.seed,
                     "tolerances": {**TOLERANCE_DEFAULTS, **cfg.tolerances},
                     "resolution": {k: cfg.res(k, sc.n_starts)
                                    for k in RESOLUTION_DEFAULTS}},
        "gates": {},
        "critical_points": [],
        "certificates": {},
        "moduli": [],
        "hypothesis_failure": None,
    }
    verdicts = {k: "not-applicable" for k in (
        "invariance_gate", "flow_equivariance", "critical_equals_fixed", "weyl_count",
        "euler_characteristic", "moduli_cylinders", "rotation_action",
        "constant_stabilizer", "transversality")}

    def finish():
        report["verdicts"] = verdicts
        if report["hypothesis_failure"] is not None:
            code = 2
        elif any(v in ("fail", "conditional") for v in verdicts.values()):
            code = 1
        else:
            code = 0
        report["exit_code"] = code
        return _normalize(report), timings

    # gates
    t0 = clock()
    inv = invariance_residual(G, f, m, int(cfg.res("n_inv_samples")), cfg.seed)
    report["gates"]["invariance"] = metric(inv, cfg.tol("tau_inv"))
    timings["invariance"] = clock() - t0
    if not report["gates"]["invariance"]["pass"]:
        verdicts["invariance_gate"] = "fail"
        report["hypothesis_failure"] = "function is not invariant under the group action"
        return finish()
    verdicts["invariance_gate"] = "pass"

    t0 = clock()
    n_eq = int(cfg.res("n_equiv_trials"))
    eq = equivariance_certificate(m, f, G, n_eq, cfg.seed, ctrl)
    ctl = equivariance_certificate(m, f, G, n_eq, cfg.seed, ctrl,
                                   metric_weights=_broken_metric_weights(sc))
    report["gates"]["equivariance"] = {**metric(eq, cfg.tol("tau_equiv")), "trials": n_eq}
    report["gates"]["equivariance_negative_control"] = {
        **metric(ctl, cfg.tol("tau_equiv_control"), ">"), "trials": n_eq}
    verdicts["flow_equivariance"] = _pf(report["gates"]["equivariance"]["pass"]
                                        and report["gates"]["equivariance_negative_control"]["pass"])
    timings["equivariance"] = clock() - t0

    # critical points and fixed points
    n_starts = int(cfg.res("n_starts", sc.n_starts))
    t0 = clock()
    try:
        crit = enumerate_critical_points(m, f, n_starts, cfg.seed, G,
                                         tau_crit=cfg.tol("tau_crit"),
                                         tau_morse=cfg.tol("tau_morse"),
                                         dedup_radius=cfg.tol("dedup_radius"))
        timings["critical_points"] = clock() - t0
        t0 = clock()
        fixed = enumerate_fixed_points(G, m, n_starts, cfg.seed, cfg.tol("tau_fix"),
                                       cfg.tol("dedup_radius"))
        timings["fixed_points"] = clock() - t0
    except HYPOTHESIS_ERRORS as exc:
        report["hypothesis_failure"] = f"{type(exc).__name__}: {exc}"
        return finish()
    report["critical_points"] = [c.as_dict() for c in crit]

    match = certify_cr_equals_fixed(crit, fixed, cfg.tol("tau_match"))
    report["certificates"]["critical_equals_fixed"] = {
        "critical_count": len(crit), "fixed_count": int(len(fixed)),
        "expected_count": sc.expected_critical,
        "matched": [list(t[:2]) for t in match.matched],
        "unmatched_critical": match.unmatched_critical,
        "unmatched_fixed": match.unmatched_fixed,
        "max_distance": metric(match.max_distance, cfg.tol("tau_match")),
        "pass": match.passed}
    verdicts["critical_equals_fixed"] = _pf(match.passed)

    if sc.weyl_order is not None:
        w = certify_weyl_count(crit, sc.weyl_order)
        report["certificates"]["weyl_count"] = {
            "count": metric(w.count, w.weyl_order, "=="), "all_torus_fixed": w.all_fixed,
            "pass": w.passed}
        verdicts["weyl_count"] = _pf(w.passed)
    else:
        report["certificates"]["weyl_count"] = {"status": "not-applicable"}

    chi = euler_characteristic(c.index for c in crit)
    report["certificates"]["euler_characteristic"] = metric(chi, sc.euler_characteristic, "==")
    verdicts["euler_characteristic"] = _pf(chi == sc.euler_characteristic)

    # moduli spaces for index gap two
    t0 = clock()
    pairs = [(p, q) for p in crit for q in crit if p.index - q.index == 2]
    sources = sorted({p.id for p, _ in pairs})

    def shoot(pid):
        return sample_unstable_sphere(
            m, f, crit[pid], crit, G, int(cfg.res("n_directions")),
            int(cfg.res("n_generic")), float(cfg.res("epsilon")), ctrl, cfg.seed)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        samples = dict(zip(sources, pool.map(shoot, sources)))
    timings["shooting"] = clock() - t0

    t0 = clock()
    results = {k: [] for k in ("moduli_cylinders", "rotation_action",
                               "constant_stabilizer", "transversality")}
    for p, q in pairs:
        block, comps = _pair_block(cfg, m, f, G, crit, samples[p.id], p, q, ctrl)
        report["moduli"].append(block)
        for key, res in block["_results"].items():
            results[key].extend(res)
        del block["_results"]
        _dump(cfg, m, f, crit, p, q, comps)
    for key, res in results.items():
        if res:
            verdicts[key] = "conditional" if "conditional" in res else _pf(all(
                r is True for r in res))
    timings["moduli"] = clock() - t0
    return finish()


def _pf(ok: bool) -> str:
    return "pass" if ok else "fail"


def _pair_block(cfg, m, f, G, crit, sample, p, q, ctrl):
    n = m.intrinsic_dim
    dim_id = p.index + (n - q.index) - n
    block = {"pair": [p.id, q.id], "p_index": p.index, "q_index": q.index,
             "fate_counts": {str(k): v for k, v in sample.fate_counts().items()},
             "n_directions": int(len(sample.fates)),
             "dimension_identity": metric(dim_id, 2, "=="),
             "components": [], "status": "empty"}
    results = {"moduli_cylinders": [], "rotation_action": [], "constant_stabilizer": [],
               "transversality": []}
    block["_results"] = results
    try:
        comps = moduli_components(sample, p, q)
    except MorseLabError as exc:
        block["status"] = f"error: {type(exc).__name__}: {exc}"
        results["moduli_cylinders"].append(False)
        return block, []
    block["component_count"] = len(comps)
    for comp in comps:
        circ = certify_circle(comp, G, m, int(cfg.res("n_theta_orbit")), cfg.tol("tau_orbit"))
        rot = certify_rotation_action(comp, G, m, int(cfg.res("n_theta_rotation")),
                                      int(cfg.res("n_base_points")), cfg.tol("tau_angle"))
        stab = certify_stabilizer(comp, G, m, f, crit, int(cfg.res("n_stab_members")),
                                  cfg.tol("tau_stab"))
        entry = {"members": int(len(comp.members)),
                 "torus_weight": comp.group.weights.tolist(),
                 "circle": {"closed": circ["closed"],
                            "max_gap": metric(circ["max_gap"], circ["gap_threshold"]),
                            "orbit_match": metric(circ["orbit_match"], circ["orbit_threshold"]),
                            "pass": circ["passed"]},
                 "rotation": {"transitive": rot["transitive"],
                              "angle_map_monotone": rot["angle_map_monotone"],
                              "winding": rot["winding"],
                              "homomorphism": metric(rot["homomorphism_residual"],
                                                     rot["threshold"]),
                              "base_point": metric(rot["base_point_spread"], rot["threshold"]),
                              "linear_residual": rot["linear_residual"],
                              "pass": rot["passed"]},
                 "stabilizer": {"constant_dim": stab["constant_dim"], "dims": stab["dims"],
                                "codim": stab["codim"],
                                "principal_angle": metric(stab["max_principal_angle"],
                                                          stab["threshold"]),
                                "pass": stab["passed"]}}
        try:
            line = member_lines(comp, m, f, crit, comp.members[:1], ctrl)[0]
            tr = transversality_check(p, q, line, m, f, cfg.tol("tau_transv"))
            entry["transversality"] = {
                "sigma_min": metric(tr["sigma_min"], tr["threshold"], ">="),
                "rank": metric(tr["rank"], n, "=="),
                "dim_identity": metric(tr["dim_identity"], 2, "=="),
                "status": "verified", "pass": tr["passed"]}
            results["transversality"].append(tr["passed"])
        except MorseLabError as exc:
            entry["transversality"] = {"status": f"unverified: {type(exc).__name__}",
                                       "pass": False}
            results["transversality"].append("conditional")
        results["moduli_cylinders"].append(circ["passed"])
        results["rotation_action"].append(rot["passed"])
        results["constant_stabilizer"].append(stab["passed"])
        block["components"].append(entry)
    if comps:
        ok = all(c["circle"]["pass"] and c["rotation"]["pass"] and c["stabilizer"]["pass"]
                 and c["transversality"]["pass"] for c in block["components"])
        block["status"] = _pf(ok)
    return block, comps


def _dump(cfg, m, f, crit, p, q, comps) -> None:
    want_traj = bool(cfg.outputs.get("dump_trajectories"))
    want_dirs = bool(cfg.outputs.get("dump_directions"))
    if not comps or not (want_traj or want_dirs):
        return
    base = Path(cfg.outputs.get("dump_dir") or _default_dump_dir(cfg))
    base.mkdir(parents=True, exist_ok=True)
    for k, comp in enumerate(comps):
        stem = f"pair_{p.id}_{q.id}_comp_{k}"
        if want_traj:
            member_lines(comp, m, f, crit, comp.members[:1], cfg.step_control())[0].to_csv(
                base / f"{stem}_trajectory.csv")
        if want_dirs:
            with open(base / f"{stem}_directions.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                N = comp.member_directions.shape[1]
                w.writerow(["angle"] + [f"d{i + 1}" for i in range(N)])
                for a, d in zip(comp.group.params[comp.members], comp.member_directions):
                    w.writerow([f"{a:.12g}"] + [f"{v:.12g}" for v in d])


def _default_dump_dir(cfg) -> Path:
    report = cfg.outputs.get("report")
    if report:
        return Path(report).with_suffix("").with_name(Path(report).stem + "_dumps")
    return Path(f"{cfg.scenario}_dumps")


def _normalize(obj):
    """Round floats to 12 significant digits and convert numpy scalars."""
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(f"{float(obj):.12g}")
        return 0.0 if x == 0 else x
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_report(report: dict, timings: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(report), encoding="utf-8")
    tpath = path.with_name(path.stem + ".timings.json")
    tpath.write_text(json.dumps({k: round(v, 3) for k, v in timings.items()},
                                sort_keys=True, indent=2) + "\n")
    return path


def check_report(report: dict) -> tuple[int, list[str]]:
    """Re-validate every ``{value, threshold, op, pass}`` entry of a report.

    Returns ``(exit code, problems)``: 3 if the report is malformed or an
    entry's stored verdict disagrees with its own threshold, otherwise the
    exit code implied by the verdicts.
    """
    problems: list[str] = []

    def walk(node, path):
        if isinstance(node, dict):
            if {"value", "threshold", "op", "pass"} <= set(node):
                try:
                    ok = _compare(node["value"], node["threshold"], node["op"])
                except (KeyError, TypeError):
                    problems.append(f"{path}: unreadable comparison")
                    return
                if ok != node["pass"]:
                    problems.append(f"{path}: stored pass={node['pass']} but recomputed {ok}")
            for k, v in node.items():
                walk(v, f"{path}.{k}")
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, f"{path}[{i}]")

    if not isinstance(report, dict) or "verdicts" not in report or "exit_code" not in report:
        return 3, ["report lacks verdicts or exit_code"]
    walk(report, "$")
    if problems:
        return 3, problems
    verdicts = report["verdicts"]
    if report.get("hypothesis_failure"):
        expected = 2
    elif any(v in ("fail", "conditional") for v in verdicts.values()):
        expected = 1
    else:
        expected = 0
    if expected != report["exit_code"]:
        return 3, [f"exit_code {report['exit_code']} but verdicts imply {expected}"]
    return expected, []
