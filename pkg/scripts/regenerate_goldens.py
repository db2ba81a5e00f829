"""Regenerate the frozen per-scenario reports in tests/golden/.

Usage: python scripts/regenerate_goldens.py [scenario ...]

The goldens pin component counts per index-gap-2 pair and the full report
text at seed 0.  Regenerate only after a deliberate change to the pipeline.
"""
import argparse
from pathlib import Path

from morse_lab.runner import ScenarioConfig, run_scenario, write_report
from morse_lab.scenarios import REGISTRY

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenarios", nargs="*", default=sorted(REGISTRY))
    args = ap.parse_args()
    for name in args.scenarios:
        report, timings = run_scenario(ScenarioConfig(name, 0))
        path = write_report(report, timings, GOLDEN / f"{name}.json")
        path.with_name(path.stem + ".timings.json").unlink()
        counts = {tuple(b["pair"]): len(b["components"]) for b in report["moduli"]}
        print(f"{name:15s} exit {report['exit_code']}  components {counts}")


if __name__ == "__main__":
    main()
