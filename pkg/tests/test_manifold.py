import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_lab.errors import OffManifold, RankDeficient, RetractionDiverged
from morse_lab.manifold import (ManifoldSpec, _project_jacobian, herm_basis, isospectral,
                                on_manifold, project_to_tangent, projective_space, retract,
                                sphere, tangent_frames, tangent_residual, to_matrix,
                                to_vector)

FAMILIES = {
    "sphere": lambda: sphere(2),
    "cp2": lambda: projective_space(3),
    "flag2": lambda: isospectral([-1.0, 1.0]),
    "flag3": lambda: isospectral([0.0, 1.0, 2.0]),
}
seeds = st.integers(0, 2**31 - 1)


def test_sphere_projection_examples():
    S = sphere()
    np.testing.assert_allclose(project_to_tangent(S, [0, 0, 1.0], [1, 2, 5.0]), [1, 2, 0])
    np.testing.assert_allclose(project_to_tangent(S, [1.0, 0, 0], [3.0, 0, 0]), [0, 0, 0],
                               atol=1e-15)


def test_projection_requires_on_manifold_point():
    with pytest.raises(OffManifold):
        project_to_tangent(sphere(), [0, 0, 2.0], [1, 0, 0])


def test_rank_deficient_constraint_is_reported():
    # (|x|^2 - 1)^2 has the unit sphere as zero set but a vanishing Jacobian there
    def c(x):
        return ((np.sum(x * x, axis=-1) - 1.0) ** 2)[..., None]

    def J(x):
        return (4 * (np.sum(x * x, axis=-1) - 1.0))[..., None, None] * x[..., None, :]

    bad = ManifoldSpec("degenerate-S2", 3, 2, c, J, None, lambda x: x, None)
    with pytest.raises(RankDeficient):
        project_to_tangent(bad, np.array([0, 0, 1.0]), np.array([1.0, 0, 0]))
    assert not on_manifold(bad, np.array([0, 0, 1.0]))


@pytest.mark.parametrize("name", FAMILIES)
@settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_projection_idempotent_and_self_adjoint(name, seed):
    m = FAMILIES[name]()
    rng = np.random.default_rng(seed)
    x = m.sample(rng, 1)[0]
    v, w = rng.standard_normal((2, m.ambient_dim))
    Pv = project_to_tangent(m, x, v)
    Pw = project_to_tangent(m, x, w)
    scale = np.linalg.norm(v) * np.linalg.norm(w)
    np.testing.assert_allclose(project_to_tangent(m, x, Pv), Pv, atol=1e-10 * np.linalg.norm(v))
    assert abs(Pv @ w - v @ Pw) <= 1e-10 * scale
    assert tangent_residual(m, x, Pv) <= m.tau_tan


@pytest.mark.parametrize("name", FAMILIES)
def test_fast_projector_matches_jacobian_projector(name):
    m = FAMILIES[name]()
    rng = np.random.default_rng(1)
    x = m.sample(rng, 50)
    v = rng.standard_normal(x.shape)
    np.testing.assert_allclose(m.projector(x, v), _project_jacobian(m, x, v), atol=1e-12)


@pytest.mark.parametrize("name", FAMILIES)
def test_intrinsic_dimension_is_projector_rank(name):
    m = FAMILIES[name]()
    x = m.sample(np.random.default_rng(2), 100)
    _, T, _ = tangent_frames(m, x)
    P = np.swapaxes(T, -1, -2) @ T
    ranks = np.linalg.matrix_rank(P, tol=1e-8)
    assert np.all(ranks == m.intrinsic_dim)
    assert all(on_manifold(m, xi) for xi in x[:10])


def test_retract_examples():
    S = sphere()
    np.testing.assert_allclose(retract(S, [0, 0, 2.0]), [0, 0, 1])
    x = S.sample(np.random.default_rng(0), 1)[0]
    np.testing.assert_allclose(retract(S, x), x, atol=S.tau_on)
    with pytest.raises(RetractionDiverged):
        retract(S, np.zeros(3))


def test_cp2_retraction_matches_bruteforce(oracle):
    cp = projective_space(3)
    case = oracle["cp2-retraction"]
    y = retract(cp, np.array(case["input"]))
    np.testing.assert_allclose(y, case["nearest"], atol=1e-6)


@pytest.mark.parametrize("name", FAMILIES)
@settings(max_examples=15, deadline=None)
@given(seed=seeds)
def test_retraction_idempotent_near_manifold(name, seed):
    m = FAMILIES[name]()
    rng = np.random.default_rng(seed)
    x = m.sample(rng, 1)[0] + 1e-3 * rng.standard_normal(m.ambient_dim)
    y = retract(m, x)
    assert m.residual(y) <= m.tau_on
    np.testing.assert_allclose(retract(m, y), y, atol=m.tau_on)


def test_on_manifold_examples():
    S = sphere()
    assert on_manifold(S, [1.0, 0, 0])
    assert not on_manifold(S, [2.0, 0, 0])
    assert on_manifold(projective_space(3), to_vector(np.diag([1.0, 0, 0]).astype(complex)))
    assert not on_manifold(S, [np.nan, 0, 1.0])


def test_hermitian_basis_is_orthonormal_and_roundtrips():
    B = herm_basis(3)
    G = np.einsum("aij,bji->ab", B, B).real
    np.testing.assert_allclose(G, np.eye(9), atol=1e-14)
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    H = Z + Z.conj().T
    np.testing.assert_allclose(to_matrix(to_vector(H), 3), H, atol=1e-14)
    # Frobenius inner product becomes the Euclidean one
    K = Z @ Z.conj().T
    assert abs(np.trace(H @ K).real - to_vector(H) @ to_vector(K)) < 1e-12
