import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from mafe.exceptions import ValidationError
from mafe.fields import (
    DELTA,
    FAMILIES,
    FieldModel,
    FieldObjective,
    attraction_energy,
    equilibrium_distance,
    pair_force,
    probabilistic_embedding_weights,
    repulsion_energy,
    total_energy,
    total_gradient,
)

from conftest import central_difference, make_graph, random_instance, relative_error

MAFE = ("mafe-br", "mafe-ur", "mafee", "mafeh")


# -- unit evaluations ------------------------------------------------------

def test_attraction_examples():
    f = FieldModel("mafe-br", xi_a=1.0, p=2)
    assert attraction_energy(2.0, f) == 4.0
    assert 0.5 * attraction_energy(2.0, f) == 2.0
    assert attraction_energy(0.0, f) == 0.0
    assert attraction_energy(3.0, FieldModel("mafe-ur", xi_a=0.03, p=1)) == pytest.approx(0.09)


def test_repulsion_examples():
    br = FieldModel("mafe-br", xi_r=1.0, q=2, sigma=1.0)
    assert repulsion_energy(1.0, br) == pytest.approx(np.exp(-1))
    assert repulsion_energy(0.0, FieldModel("mafe-br", xi_r=2e-4, sigma=3.0)) == 2e-4 * 3.0
    ur = FieldModel.default("mafe-ur", q=2)
    vals = repulsion_energy(np.array([1e-2, 1e-4, 1e-8, 0.0]), ur)
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] == ur.xi_r / DELTA**2


def test_repulsion_decreasing_and_bounded():
    d = np.linspace(0, 5, 200)
    for fam in MAFE:
        f = FieldModel.default(fam)
        r = repulsion_energy(d[1:], f)
        assert np.all(np.diff(r) < 0)
    br = FieldModel.default("mafe-br")
    assert repulsion_energy(d, br).max() <= br.xi_r * br.sigma


def test_negative_distance_rejected():
    with pytest.raises(ValidationError):
        attraction_energy(-1.0, FieldModel())


def test_invalid_parameters():
    with pytest.raises(ValidationError):
        FieldModel("mafe-br", xi_a=0.0)
    with pytest.raises(ValidationError):
        FieldModel("mafe-br", p=0.5)
    with pytest.raises(ValidationError):
        FieldModel("nope")


def test_defaults():
    br = FieldModel.default("mafe-br")
    assert (br.xi_a, br.xi_r, br.p, br.q) == (0.4, 1e-4, 2, 2)
    ur = FieldModel.default("mafe-ur")
    assert (ur.xi_a, ur.xi_r, ur.p, ur.q) == (0.03, 1e-5, 2, 1)


# -- forces ---------------------------------------------------------------

def test_pure_attraction_force():
    f = FieldModel("mafe-br", xi_a=0.4, xi_r=0.0)
    zi, zj = np.array([1.0, 2.0]), np.array([-1.0, 0.5])
    F = pair_force(zi, zj, 0.7, f)
    assert np.allclose(F, -0.7 * f.attraction_coef(np.linalg.norm(zi - zj)) * (zi - zj))
    assert np.dot(F, zj - zi) > 0


def test_force_zero_at_equilibrium():
    f = FieldModel.default("mafe-br")
    w = 1e-4
    eps = equilibrium_distance(w, f)
    # closed form: xi_a w = xi_r exp(-d^2/sigma)
    assert eps == pytest.approx(np.sqrt(-f.sigma * np.log(f.xi_a * w / f.xi_r)), abs=1e-9)
    F = pair_force(np.array([eps, 0.0]), np.zeros(2), w, f)
    assert np.abs(F).max() <= 1e-12


def test_pair_force_rejects_nonfinite():
    with pytest.raises(ValidationError):
        pair_force([np.nan, 0], [0, 0], 1.0, FieldModel())


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(FAMILIES),
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.floats(0, 1),
)
def test_oddness(family, a, b, w):
    f = FieldModel.default(family)
    a, b = np.array(a), np.array(b)
    assert np.array_equal(pair_force(a, b, w, f), -pair_force(b, a, w, f))


def test_equilibrium_none_without_repulsion():
    assert equilibrium_distance(0.5, FieldModel.default("le")) is None
    assert equilibrium_distance(0.5, FieldModel("mafe-br", xi_r=0.0)) is None


def test_equilibrium_boundary_case():
    f = FieldModel("mafe-br", xi_a=0.4, xi_r=1e-4)
    assert equilibrium_distance(1e-4 / 0.4, f) == f.delta


def test_equilibrium_ur_grid_oracle():
    f = FieldModel.default("mafe-ur")
    eps = equilibrium_distance(1.0, f)
    grid = np.linspace(1e-3, 10, 2_000_001)
    coef = f.radial_coefficient(grid, 1.0)
    k = np.flatnonzero(np.diff(np.sign(coef)))[0]
    # refine the bracketing cell linearly
    root = grid[k] - coef[k] * (grid[k + 1] - grid[k]) / (coef[k + 1] - coef[k])
    assert eps == pytest.approx(root, abs=1e-6)
    # closed form for p=2, q=1: 2 xi_a w = xi_r / d^3
    assert eps == pytest.approx((f.xi_r / (2 * f.xi_a)) ** (1 / 3), abs=1e-9)


@pytest.mark.parametrize("family", MAFE)
def test_sign_regimes(family):
    f = FieldModel.default(family)
    for w in (0.05, 0.3, 1.0):
        eps = equilibrium_distance(w, f)
        if eps is None:
            continue
        d = np.geomspace(1e-6, 1e3, 3000)
        coef = f.radial_coefficient(d, w)
        assert np.all(coef[d < eps * (1 - 1e-6)] > 0)
        assert np.all(coef[d > eps * (1 + 1e-6)] < 0)


# -- energy ---------------------------------------------------------------

def loop_energy(Z, W, f):
    n = len(Z)
    total = 0.0
    for i, j in itertools.combinations(range(n), 2):
        d = np.sqrt(np.sum((Z[i] - Z[j]) ** 2))
        total += W[i, j] * f.attraction(d) + f.repulsion(d)
    return total


def test_energy_three_point_loop_oracle(rng):
    Z = rng.normal(size=(3, 2))
    W = np.array([[0, 0.3, 0.1], [0.3, 0, 0.6], [0.1, 0.6, 0]])
    for fam in MAFE + ("le",):
        f = FieldModel.default(fam)
        assert total_energy(Z, make_graph(W), f) == pytest.approx(loop_energy(Z, W, f), rel=1e-12)


def test_energy_three_point_hand_sum():
    Z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    W = np.array([[0, 0.5, 0.25], [0.5, 0, 0.0], [0.25, 0.0, 0]])
    f = FieldModel("mafe-br", xi_a=0.4, xi_r=1e-4, sigma=1.0)
    d2 = np.array([1.0, 4.0, 5.0])
    expected = 0.4 * (0.5 * 1 + 0.25 * 4) + 1e-4 * np.exp(-d2).sum()
    assert total_energy(Z, make_graph(W), f) == pytest.approx(expected, rel=1e-14)


def test_kl_energy_matches_loop(rng):
    Z = rng.normal(size=(5, 2))
    W = rng.uniform(size=(5, 5))
    W = (W + W.T) / 2
    np.fill_diagonal(W, 0)
    W /= W.sum()
    for fam, kernel in (("sne", lambda d2: np.exp(-d2)), ("tsne", lambda d2: 1 / (1 + d2))):
        total = 0.0
        for i in range(5):
            norm = sum(kernel(np.sum((Z[i] - Z[r]) ** 2)) for r in range(5) if r != i)
            for j in range(5):
                if j != i:
                    q = kernel(np.sum((Z[i] - Z[j]) ** 2)) / norm
                    total -= W[i, j] * np.log(q)
        assert total_energy(Z, make_graph(W), FieldModel.default(fam)) == pytest.approx(total, rel=1e-12)


def test_coincident_ur_energy_finite_and_huge():
    Z = np.zeros((3, 2))
    E = total_energy(Z, make_graph(np.ones((3, 3))), FieldModel.default("mafe-ur"))
    assert np.isfinite(E) and E > 1e6


def test_empty_field_energy_zero(rng):
    f = FieldModel("le", xi_a=0.0, xi_r=0.0)
    assert total_energy(rng.normal(size=(4, 2)), make_graph(np.ones((4, 4))), f) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(0, 10_000))
def test_translation_invariance(family, seed):
    rng = np.random.default_rng(seed)
    Z, g = random_instance(rng, family)
    c = rng.normal(0, 10, size=(1, Z.shape[1]))
    E0, E1 = total_energy(Z, g, FieldModel.default(family)), total_energy(Z + c, g, FieldModel.default(family))
    assert E1 == pytest.approx(E0, rel=1e-9, abs=1e-12)


# -- gradient -------------------------------------------------------------

def test_two_point_gradient_hand_oracle():
    f = FieldModel.default("mafe-br")
    z1, z2, w = np.array([0.3, -0.2]), np.array([-0.5, 0.4]), 0.6
    G = total_gradient(np.vstack([z1, z2]), make_graph([[0, w], [w, 0]]), f)
    delta = z1 - z2
    expected = 2 * delta * (f.xi_a * w - f.xi_r * np.exp(-delta @ delta / f.sigma))
    assert np.allclose(G[0], expected, rtol=1e-13)
    assert np.allclose(G[1], -expected, rtol=1e-13)


def test_coincident_pair_zero_gradient():
    G = total_gradient(np.zeros((2, 2)), make_graph(np.zeros((2, 2))), FieldModel.default("mafe-br"))
    assert np.array_equal(G, np.zeros((2, 2)))


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_finite_differences(family):
    # two maps give an identically zero SNE/tSNE gradient, where relative
    # error only measures finite-difference noise, so start at three
    rng = np.random.default_rng(FAMILIES.index(family))
    f = FieldModel.default(family)
    for _ in range(20):
        Z, g = random_instance(rng, family, n=int(rng.integers(3, 11)))
        obj = FieldObjective(g, f)
        fd = central_difference(obj.energy, Z)
        assert relative_error(obj.gradient(Z), fd) <= 1e-5


@pytest.mark.parametrize("family", MAFE + ("le",))
def test_force_decomposition(family, rng):
    f = FieldModel.default(family)
    Z, g = random_instance(rng, family, n=7, m=2)
    W = g.dense()
    G = total_gradient(Z, g, f)
    for i in range(7):
        resultant = sum(pair_force(Z[i], Z[j], W[i, j], f) for j in range(7) if j != i)
        assert np.allclose(G[i], -resultant, rtol=0, atol=1e-12 * max(1, np.abs(G).max()))


def test_gradient_sums_to_zero(rng):
    for fam in FAMILIES:
        Z, g = random_instance(rng, fam)
        G = total_gradient(Z, g, FieldModel.default(fam))
        assert np.allclose(G.sum(0), 0, atol=1e-10 * max(1, np.abs(G).max()))


def test_zero_repulsion_collapse_numerical_minimizer(rng):
    W = np.array([[0, 0.5, 0.2], [0.5, 0, 0.9], [0.2, 0.9, 0]])
    g = make_graph(W)
    f = FieldModel("mafe-br", xi_a=0.4, xi_r=0.0)
    obj = FieldObjective(g, f)
    res = minimize(lambda x: obj.energy(x.reshape(3, 2)), rng.normal(size=6),
                   jac=lambda x: obj.gradient(x.reshape(3, 2)).ravel(), method="BFGS", tol=1e-14)
    Z = res.x.reshape(3, 2)
    assert np.max(np.linalg.norm(Z[:, None] - Z[None], axis=-1)) <= 1e-4


# -- probabilistic weights --------------------------------------------------

def test_probabilistic_weights(rng):
    two = probabilistic_embedding_weights(rng.normal(size=(2, 2)), "tsne").values
    assert np.array_equal(two, [[0, 1], [1, 0]])
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    for kind in ("sne", "tsne"):
        W = probabilistic_embedding_weights(tri, kind).values
        assert np.allclose(W[~np.eye(3, dtype=bool)], 0.5)
        W5 = probabilistic_embedding_weights(rng.normal(size=(5, 3)), kind).values
        assert np.allclose(W5.sum(1), 1, atol=1e-12)
        assert np.all(np.diag(W5) == 0)
