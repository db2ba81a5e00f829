import numpy as np
import pytest

from morse_lab.critical import (CriticalPoint, certify_cr_equals_fixed, certify_weyl_count,
                                enumerate_critical_points, index_table)
from morse_lab.errors import DegenerateHessian, FixedSetNotFinite
from morse_lab.morse import riemannian_gradient
from morse_lab.scenarios import flag_su3, get_scenario
from morse_lab.symmetry import enumerate_fixed_points, is_fixed_point, linear_action

NAMES = ["sphere-height", "cp2-torus", "flag-su2", "flag-su3"]


@pytest.fixture(scope="module")
def tables():
    out = {}
    for name in NAMES:
        sc = get_scenario(name)
        out[name] = (sc, enumerate_critical_points(sc.manifold, sc.function, sc.n_starts, 0,
                                                   sc.group))
    return out


@pytest.mark.parametrize("name", NAMES)
def test_critical_table_matches_oracle(name, tables, oracle):
    sc, crit = tables[name]
    expected = oracle[name]["critical"]
    assert len(crit) == len(expected) == sc.expected_critical
    for c, row in zip(crit, expected):
        assert c.value == pytest.approx(row["value"], abs=1e-9)
        assert c.index == row["index"]
        np.testing.assert_allclose(c.hessian_spectrum, row["spectrum"], atol=1e-4)
        assert np.linalg.norm(c.location - row["location"]) <= 1e-5
        assert np.linalg.norm(riemannian_gradient(sc.manifold, sc.function, c.location)) <= 1e-8
        assert c.is_group_fixed


def test_flag_su3_index_multiset(tables):
    _, crit = tables["flag-su3"]
    assert index_table(crit) == {0: 1, 2: 2, 4: 2, 6: 1}


def test_ids_follow_value_order(tables):
    _, crit = tables["flag-su3"]
    assert [c.id for c in crit] == list(range(6))
    vals = [round(c.value, 9) for c in crit]
    assert vals == sorted(vals)


@pytest.mark.parametrize("name", ["sphere-height", "cp2-torus", "flag-su2"])
def test_critical_set_stable_under_seed_and_doubling(name, tables):
    sc, crit = tables[name]
    other = enumerate_critical_points(sc.manifold, sc.function, 2 * sc.n_starts, 17, sc.group)
    a = np.array([c.location for c in crit])
    b = np.array([c.location for c in other])
    assert a.shape == b.shape
    assert np.max(np.linalg.norm(a - b, axis=1)) <= 1e-5


@pytest.mark.parametrize("name", NAMES)
def test_random_points_are_not_fixed(name, tables):
    sc, _ = tables[name]
    x = sc.manifold.sample(np.random.default_rng(12), 100)
    assert not any(is_fixed_point(sc.group, xi) for xi in x)


def test_cp2_morse_inequalities_are_equalities(tables):
    _, crit = tables["cp2-torus"]
    counts = index_table(crit)
    betti = {0: 1, 1: 0, 2: 1, 3: 0, 4: 1}
    assert all(counts.get(k, 0) == b for k, b in betti.items())


@pytest.mark.parametrize("name", NAMES)
def test_cr_equals_fixed(name, tables):
    sc, crit = tables[name]
    fixed = enumerate_fixed_points(sc.group, sc.manifold, sc.n_starts, 0)
    cert = certify_cr_equals_fixed(crit, fixed)
    assert cert.passed and len(cert.matched) == sc.expected_critical


def test_cr_equals_fixed_reports_leftovers(tables):
    _, crit = tables["sphere-height"]
    cert = certify_cr_equals_fixed(crit, np.array([[0, 0, 1.0], [1.0, 0, 0]]))
    assert not cert.passed
    assert cert.unmatched_critical == [0] and cert.unmatched_fixed == [1]


def test_trivial_group_is_a_hypothesis_failure():
    with pytest.raises(FixedSetNotFinite):
        enumerate_fixed_points(linear_action("e", np.zeros((1, 3, 3))),
                               get_scenario("sphere-height").manifold, 50, 0)


def test_weyl_examples(tables):
    assert certify_weyl_count(tables["flag-su2"][1], 2).passed
    assert certify_weyl_count(tables["flag-su3"][1], 6).passed
    assert not certify_weyl_count(tables["flag-su3"][1][:5], 6).passed
    c = tables["flag-su2"][1][0]
    moved = CriticalPoint(c.id, c.location, c.value, c.index, c.hessian_spectrum, False)
    assert not certify_weyl_count([moved, tables["flag-su2"][1][1]], 2).passed


def test_non_generic_function_is_degenerate():
    bad = flag_su3(D=(0.0, 0.0, 1.0), check_generic=False)
    with pytest.raises(DegenerateHessian):
        enumerate_critical_points(bad.manifold, bad.function, 200, 0)
    with pytest.raises(ValueError):
        flag_su3(D=(0.0, 0.0, 1.0))
