"""Command line entry point: ``morse-lab run | list | check``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .runner import ScenarioConfig, check_report, run_scenario, write_report
from .scenarios import REGISTRY, list_scenarios


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="morse-lab",
                                 description="Certify equivariant Morse theory on built-in scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write a JSON report")
    run.add_argument("--scenario", choices=sorted(REGISTRY))
    run.add_argument("--seed", type=int)
    run.add_argument("--config", type=Path, help="JSON config (strictly parsed)")
    run.add_argument("--out", type=Path, help="report path (default <scenario>.json)")
    run.add_argument("--dump-trajectories", action="store_true")
    run.add_argument("--dump-directions", action="store_true")

    sub.add_parser("list", help="list built-in scenarios")

    chk = sub.add_parser("check", help="re-validate a report against its own thresholds")
    chk.add_argument("--report", type=Path, required=True)
    return ap


def _config(args) -> ScenarioConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if args.scenario is not None:
        data["scenario"] = args.scenario
    if args.seed is not None:
        data["seed"] = args.seed
    outputs = dict(data.get("outputs", {}))
    if args.out is not None:
        outputs["report"] = str(args.out)
    if args.dump_trajectories:
        outputs["dump_trajectories"] = True
    if args.dump_directions:
        outputs["dump_directions"] = True
    data["outputs"] = outputs
    return ScenarioConfig.from_dict(data)


def cmd_run(args) -> int:
    try:
        cfg = _config(args)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    report, timings = run_scenario(cfg)
    out = Path(cfg.outputs.get("report") or f"{cfg.scenario}.json")
    write_report(report, timings, out)
    for name, verdict in report["verdicts"].items():
        print(f"{name:24s} {verdict}")
    if report["hypothesis_failure"]:
        print(f"hypothesis failure: {report['hypothesis_failure']}")
    print(f"report: {out}  exit {report['exit_code']}")
    return report["exit_code"]


def cmd_list(args) -> int:
    rows = list_scenarios()
    print(f"{'name':15s} {'manifold':24s} {'dim':>3s}  {'group':20s} {'critical':>8s}")
    for r in rows:
        print(f"{r['name']:15s} {r['manifold']:24s} {r['dimension']:3d}  "
              f"{r['group']:20s} {r['expected_critical']:8d}")
    return 0


def cmd_check(args) -> int:
    try:
        report = json.loads(args.report.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read report: {exc}", file=sys.stderr)
        return 3
    code, problems = check_report(report)
    for p in problems:
        print(p)
    print(f"{args.report}: exit {code}")
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return {"run": cmd_run, "list": cmd_list, "check": cmd_check}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
