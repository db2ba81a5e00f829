import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from morse_lab.runner import ScenarioConfig, dumps_report, run_scenario  # noqa: E402
from morse_lab.scenarios import get_scenario  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"
SCENARIOS = ["sphere-height", "cp2-torus", "flag-su2", "flag-su3"]

_reports: dict = {}
ACCEPTANCE_LINES: list[str] = []


def cached_report(name: str, seed: int = 0, tolerances=None, resolution=None):
    """Run a scenario once per session and keyword set; returns (report, text)."""
    key = (name, seed, json.dumps(tolerances, sort_keys=True),
           json.dumps(resolution, sort_keys=True))
    if key not in _reports:
        cfg = ScenarioConfig(name, seed, dict(tolerances or {}), dict(resolution or {}))
        report, _ = run_scenario(cfg)
        _reports[key] = (report, dumps_report(report))
    return _reports[key]


@pytest.fixture(scope="session")
def oracle():
    return json.loads((GOLDEN / "oracles.json").read_text())


@pytest.fixture(scope="session")
def scenario_objs():
    return {name: get_scenario(name) for name in SCENARIOS}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
