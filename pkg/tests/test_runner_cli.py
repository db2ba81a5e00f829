import json
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import GOLDEN, SCENARIOS, cached_report
from morse_lab.cli import main
from morse_lab.errors import ConfigError
from morse_lab.runner import ScenarioConfig, check_report, run_scenario
from morse_lab.scenarios import flag_su3


@pytest.mark.parametrize("data", [
    {"scenario": "sphere-height", "colour": 1},
    {"scenario": "sphere-height", "tolerances": {"tau_bogus": 1e-3}},
    {"scenario": "sphere-height", "tolerances": {"tau_crit": -1e-8}},
    {"scenario": "sphere-height", "tolerances": {"tau_crit": 0}},
    {"scenario": "sphere-height", "resolution": {"n_directions": -4}},
    {"scenario": "sphere-height", "seed": "zero"},
    {"scenario": "torus-of-doom"},
    {"seed": 0},
])
def test_config_is_strict(data):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(data)


def test_bad_config_file_exits_3(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "sphere-height", "tolerances": {"tau_on": -1}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 3
    assert not (tmp_path / "r.json").exists()
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg)]) == 3


def test_list_prints_every_scenario(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    rows = {line.split()[0]: line.split() for line in out.splitlines()[1:]}
    assert set(rows) == set(SCENARIOS)
    assert rows["flag-su3"][2] == "6" and rows["flag-su3"][-1] == "6"
    assert rows["cp2-torus"][2] == "4" and rows["cp2-torus"][-1] == "3"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "morse_lab", "list"], capture_output=True,
                         text=True, check=True)
    assert "sphere-height" in res.stdout


def test_run_and_check_roundtrip(tmp_path, capsys):
    out = tmp_path / "sphere.json"
    code = main(["run", "--scenario", "sphere-height", "--seed", "0", "--out", str(out),
                 "--dump-trajectories", "--dump-directions"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["exit_code"] == 0
    assert set(report["verdicts"].values()) <= {"pass", "not-applicable"}
    assert (tmp_path / "sphere.timings.json").exists()
    assert "timings" not in out.read_text()
    assert main(["check", "--report", str(out)]) == 0

    dumps = tmp_path / "sphere_dumps"
    traj = (dumps / "pair_1_0_comp_0_trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,x1,x2,x3,phi"
    phi = [float(r.split(",")[-1]) for r in traj[1:]]
    assert all(b <= a for a, b in zip(phi, phi[1:]))   # 12-digit CSV rounding
    assert phi[0] > 0.99 and phi[-1] < -0.99
    dirs = (dumps / "pair_1_0_comp_0_directions.csv").read_text().splitlines()
    assert dirs[0] == "angle,d1,d2,d3" and len(dirs) == 721


def test_tampered_report_exits_3(tmp_path):
    report, text = cached_report("sphere-height")
    bad = json.loads(text)
    bad["gates"]["invariance"]["value"] = 1.0          # now exceeds its threshold
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["check", "--report", str(path)]) == 3
    bad = json.loads(text)
    bad["exit_code"] = 1
    assert check_report(bad)[0] == 3
    assert check_report({"verdicts": {}})[0] == 3


def test_invariance_gate_forced_failure(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "flag-su3", "tolerances": {"tau_inv": 1e-17}}))
    out = tmp_path / "r.json"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    report = json.loads(out.read_text())
    assert report["verdicts"]["invariance_gate"] == "fail"
    assert report["hypothesis_failure"]
    assert report["critical_points"] == []
    assert check_report(report)[0] == 2


def test_degenerate_function_is_a_hypothesis_failure():
    sc = flag_su3(D=(0.0, 0.0, 1.0), check_generic=False)
    cfg = ScenarioConfig("flag-su3", 0, resolution={"n_equiv_trials": 10, "n_starts": 200})
    report, _ = run_scenario(cfg, sc)
    assert report["exit_code"] == 2
    assert "DegenerateHessian" in report["hypothesis_failure"]
    with pytest.raises(ValueError):
        flag_su3(D=(0.0, 0.0, 1.0))


@pytest.mark.parametrize("name", SCENARIOS)
def test_goldens_pass_their_own_check(name):
    report = json.loads((GOLDEN / f"{name}.json").read_text())
    assert check_report(report) == (0, [])


def test_report_floats_are_rounded():
    _, text = cached_report("sphere-height")

    def walk(node):
        if isinstance(node, float):
            assert float(f"{node:.12g}") == node
        elif isinstance(node, dict):
            for v in node.values():
                walk(v)
        elif isinstance(node, list):
            for v in node:
                walk(v)

    walk(json.loads(text))
