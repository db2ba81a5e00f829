import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_lab.critical import enumerate_critical_points
from morse_lab.errors import LimitUndetermined, OffManifold, StepCollapse
from morse_lab.flow import (StepControl, classify_fates, equivariance_certificate,
                            flow_to_limit, integrate_batch, integrate_flow)
from morse_lab.manifold import to_matrix
from morse_lab.scenarios import get_scenario

TIGHT = StepControl(rtol=1e-11, atol=1e-13)


def strictly_decreasing(line, tau_flat=1e-12):
    """Energy drops between samples until it is within tau_flat of its limit."""
    e = line.energy
    live = e[:-1] - e[-1] > tau_flat
    return bool(np.all(np.diff(e)[live] < 0))


@pytest.fixture(scope="module")
def sphere():
    return get_scenario("sphere-height")


@pytest.fixture(scope="module")
def flag():
    sc = get_scenario("flag-su3")
    crit = enumerate_critical_points(sc.manifold, sc.function, 400, 0, sc.group)
    return sc, crit


def test_flow_reaches_south_pole(sphere):
    x0 = np.array([np.sin(0.1), 0.0, np.cos(0.1)])
    line = integrate_flow(sphere.manifold, sphere.function, x0, 40.0)
    np.testing.assert_allclose(line.points[-1], [0, 0, -1], atol=1e-8)
    assert strictly_decreasing(line)
    assert np.all(sphere.manifold.residual(line.points) <= sphere.manifold.tau_on)


def test_flow_from_critical_point_is_constant(sphere):
    line = integrate_flow(sphere.manifold, sphere.function, np.array([0, 0, 1.0]), 5.0)
    np.testing.assert_allclose(line.points, np.broadcast_to([0, 0, 1.0], line.points.shape))


def test_integrate_flow_rejects_off_manifold_start(sphere):
    with pytest.raises(OffManifold):
        integrate_flow(sphere.manifold, sphere.function, np.array([0, 0, 2.0]), 1.0)


def test_flow_to_limit_both_directions(sphere):
    crit = np.array([[0, 0, -1.0], [0, 0, 1.0]])
    for th in (0.1, 0.7, 1.4):
        x0 = np.array([np.sin(th) * np.cos(2 * th), np.sin(th) * np.sin(2 * th), np.cos(th)])
        assert flow_to_limit(sphere.manifold, sphere.function, x0, "forward", crit)[0] == 0
        assert flow_to_limit(sphere.manifold, sphere.function, x0, "backward", crit)[0] == 1


def test_backward_shot_from_north_returns_north(sphere):
    crit = np.array([[0, 0, -1.0], [0, 0, 1.0]])
    x0 = np.array([1e-4, 0, np.sqrt(1 - 1e-8)])
    assert flow_to_limit(sphere.manifold, sphere.function, x0, "backward", crit)[0] == 1


def test_budget_exhaustion_is_reported(sphere):
    crit = np.array([[0, 0, -1.0], [0, 0, 1.0]])
    x0 = np.array([np.sin(0.1), 0.0, np.cos(0.1)])
    with pytest.raises(LimitUndetermined):
        flow_to_limit(sphere.manifold, sphere.function, x0, "forward", crit,
                      StepControl(t_max=1.0))
    table = classify_fates(sphere.manifold, sphere.function, x0[None], crit,
                           control=StepControl(t_max=1.0))
    assert table.fates[0] == -1


def test_step_collapse_is_raised(sphere):
    x0 = np.array([np.sin(0.5), 0.0, np.cos(0.5)])
    with pytest.raises(StepCollapse):
        integrate_flow(sphere.manifold, sphere.function, x0, 1.0,
                       StepControl(rtol=1e-30, atol=1e-30, h_min=1e-3))


def test_flag_random_points_end_at_fixed_points(flag):
    sc, crit = flag
    locs = np.array([c.location for c in crit])
    x0 = sc.manifold.sample(np.random.default_rng(1), 20)
    table = classify_fates(sc.manifold, sc.function, x0, locs)
    assert np.all(table.fates >= 0)
    # generic points flow to the minimum
    assert set(table.fates.tolist()) == {0}


def test_low_energy_start_flows_to_minimum(flag):
    sc, crit = flag
    locs = np.array([c.location for c in crit])
    second = min(c.value for c in crit if c.index > 0)
    x = sc.manifold.sample(np.random.default_rng(2), 200)
    x = x[sc.function.value(x) < second][:5]
    assert len(x) > 0
    for xi in x:
        assert crit[flow_to_limit(sc.manifold, sc.function, xi, "forward", locs)[0]].index == 0


@settings(max_examples=8, deadline=None)
@given(t=st.floats(0.0, 2.0), s=st.floats(0.0, 2.0), seed=st.integers(0, 1000))
def test_semigroup_property(t, s, seed):
    sc = get_scenario("cp2-torus")
    m, f = sc.manifold, sc.function
    x = m.sample(np.random.default_rng(seed), 1)
    direct = integrate_batch(m, f, x, t + s, TIGHT)
    stepwise = integrate_batch(m, f, integrate_batch(m, f, x, t, TIGHT), s, TIGHT)
    assert np.linalg.norm(direct - stepwise) <= 1e-8


@pytest.mark.parametrize("name", ["sphere-height", "flag-su3"])
def test_lyapunov_decrease_on_random_lines(name):
    sc = get_scenario(name)
    for x in sc.manifold.sample(np.random.default_rng(3), 4):
        assert strictly_decreasing(integrate_flow(sc.manifold, sc.function, x, 10.0))


def test_equivariance_examples(sphere):
    m, f, G = sphere.manifold, sphere.function, sphere.group
    assert equivariance_certificate(m, f, G, 30, identity=True) <= 1e-12
    assert equivariance_certificate(m, f, G, 100, control=StepControl().tightened()) <= 1e-8
    broken = equivariance_certificate(m, f, G, 100, metric_weights=[2.0, 1.0, 1.0])
    assert broken > 1e-3


def test_classification_stable_under_halved_tolerances(flag):
    sc, crit = flag
    locs = np.array([c.location for c in crit])
    x0 = sc.manifold.sample(np.random.default_rng(8), 30)
    base = StepControl(rtol=1e-9)
    a = classify_fates(sc.manifold, sc.function, x0, locs, control=base).fates
    b = classify_fates(sc.manifold, sc.function, x0, locs, control=base.tightened()).fates
    np.testing.assert_array_equal(a, b)


def test_csv_dump_columns(tmp_path, sphere):
    line = integrate_flow(sphere.manifold, sphere.function,
                          np.array([np.sin(0.3), 0.0, np.cos(0.3)]), 2.0)
    path = tmp_path / "line.csv"
    line.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "x3", "phi"]
    assert len(rows) == len(line.times) + 1
    assert float(rows[-1][0]) == pytest.approx(2.0)


def test_flag_flow_keeps_spectrum(flag):
    sc, _ = flag
    x = sc.manifold.sample(np.random.default_rng(4), 1)[0]
    end = integrate_flow(sc.manifold, sc.function, x, 3.0).points[-1]
    np.testing.assert_allclose(np.linalg.eigvalsh(to_matrix(end, 3)), [0, 1, 2], atol=1e-9)
