import itertools

import numpy as np
import pytest

from mafe.datasets import toy_scene
from mafe.engine import (
    CONVERGED,
    MAX_ITER,
    EngineConfig,
    adapt_learning_rate,
    init_embedding,
    initial_state,
    learned_embedding_weights,
    run,
    step,
)
from mafe.exceptions import DivergenceError, NumericalError, ValidationError
from mafe.fields import FieldModel, FieldObjective
from mafe.graph import bilateral_graph

from conftest import make_graph


@pytest.fixture(scope="module")
def toy():
    data = toy_scene(seed=0)
    return data, bilateral_graph(data, k=4)


def loop_energy(Z, W, f):
    total = 0.0
    for i, j in itertools.combinations(range(len(Z)), 2):
        d = np.linalg.norm(Z[i] - Z[j])
        total += W[i, j] * f.attraction(d) + f.repulsion(d)
    return total


# -- initialisation and learning rate ---------------------------------------

def test_init_deterministic_and_shaped():
    a, b = init_embedding(10, 2, seed=4), init_embedding(10, 2, seed=4)
    assert a.shape == (10, 2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, init_embedding(10, 2, seed=5))


def test_init_variance():
    Z = init_embedding(10_000, 2, seed=0)
    assert np.all((Z.var(axis=0) >= 40) & (Z.var(axis=0) <= 60))


def test_init_rejects_empty():
    with pytest.raises(ValidationError):
        init_embedding(0, 2)


def test_learning_rate_rules(rng):
    G = rng.normal(size=(4, 2))
    zero = np.zeros_like(G)
    assert adapt_learning_rate(0.1, zero, zero, zero, 1e-4, 1e-5) == 0.1
    aligned = adapt_learning_rate(0.1, G, G, G, 1e-4, 1e-5)
    assert aligned == pytest.approx(0.1 + 1.1e-4 * np.sum(G * G))
    opposed = adapt_learning_rate(0.1, -G, G, zero, 1e-4, 1e-5)
    assert opposed == pytest.approx(0.1 - 1e-4 * np.sum(G * G))
    assert adapt_learning_rate(0.1, -G, G, zero, 1.0, 0.0) == 1e-6
    assert adapt_learning_rate(0.9, G, G, G, 1.0, 0.0) == 1.0
    with pytest.raises(ValidationError):
        adapt_learning_rate(0.1, G, G[:2], G, 1e-4, 1e-5)


# -- single steps -------------------------------------------------------------

def test_zero_gradient_step_keeps_Z():
    g = make_graph(np.zeros((2, 2)))
    obj = FieldObjective(g, FieldModel("le", xi_a=1.0, xi_r=0.0))
    state = initial_state(np.array([[0.0, 1.0], [2.0, 3.0]]), obj, EngineConfig())
    nxt = step(state, obj)
    assert np.array_equal(nxt.Z, state.Z)
    assert nxt.converged and nxt.t == 1


def test_single_pair_attraction_shrinks_distance():
    g = make_graph([[0, 1.0], [1.0, 0]])
    obj = FieldObjective(g, FieldModel("mafe-br", xi_a=0.4, xi_r=0.0))
    config = EngineConfig(alpha=1e-3, backtracking=False)
    state = initial_state(np.array([[0.0, 0.0], [3.0, 4.0]]), obj, config)
    dist = [5.0]
    for _ in range(20):
        state = step(state, obj, config)
        dist.append(np.linalg.norm(state.Z[0] - state.Z[1]))
    assert np.all(np.diff(dist) < 0)


def test_nonfinite_gradient_reports_iteration():
    class Broken:
        n = 2

        def energy(self, Z):
            return 0.0

        def energy_and_gradient(self, Z, need_grad=True):
            return 0.0, np.full_like(Z, np.nan)

    cfg = EngineConfig()
    good = initial_state(np.zeros((2, 1)), FieldObjective(make_graph(np.zeros((2, 2))), FieldModel("le")), cfg)
    with pytest.raises(NumericalError, match="iteration 1"):
        step(good, Broken(), cfg)


# -- runs --------------------------------------------------------------------

def test_toy_descent_with_oracle_energies(toy):
    _, g = toy
    f = FieldModel.default("mafe-br")
    result = run(g, f, EngineConfig(max_iter=100, seed=3))
    W = g.dense()
    energies = [loop_energy(s.Z, W, f) for s in result.trajectory.snapshots]
    assert np.allclose(energies, result.trajectory.energies, rtol=1e-10)
    assert np.all(np.diff(energies) <= 1e-12 * np.abs(energies[:-1]))


def test_no_guard_small_alpha_descends(toy):
    _, g = toy
    for fam in ("mafe-br", "mafe-ur", "le"):
        result = run(g, FieldModel.default(fam), EngineConfig(alpha=1e-4, gamma1=0, gamma2=0, max_iter=100, backtracking=False))
        E = result.trajectory.energies
        assert np.all(np.diff(E) <= 1e-12 * np.abs(E[:-1]))


def test_already_converged_returns_immediately():
    g = make_graph(np.zeros((3, 3)))
    result = run(g, FieldModel("le"), EngineConfig(), Z0=np.arange(6.0).reshape(3, 2))
    assert result.n_iter == 0
    assert len(result.trajectory) == 1
    assert result.reason == CONVERGED


def test_toy_mafe_br_converges(toy):
    _, g = toy
    result = run(g, FieldModel.default("mafe-br"), EngineConfig(eps=1e-5, seed=1))
    assert result.reason == CONVERGED
    assert result.grad_norm <= 1e-5


def test_max_iter_reason(toy):
    _, g = toy
    result = run(g, FieldModel.default("mafe-ur"), EngineConfig(max_iter=7))
    assert result.reason == MAX_ITER and result.n_iter == 7


def test_local_stability_rerun(toy):
    _, g = toy
    f = FieldModel.default("mafe-br")
    cfg = EngineConfig(eps=1e-9, max_iter=20_000, seed=2)
    first = run(g, f, cfg)
    assert first.reason == CONVERGED
    perturbed = first.Z + 1e-8 * np.random.default_rng(0).normal(size=first.Z.shape)
    second = run(g, f, cfg, Z0=perturbed)
    assert np.abs(second.Z - first.Z).max() <= 1e-6


def test_determinism(toy):
    _, g = toy
    f = FieldModel.default("tsne")
    a = run(g, f, EngineConfig(max_iter=50, seed=9))
    b = run(g, f, EngineConfig(max_iter=50, seed=9))
    assert len(a.trajectory) == len(b.trajectory)
    for sa, sb in zip(a.trajectory.snapshots, b.trajectory.snapshots):
        assert np.array_equal(sa.Z, sb.Z) and sa.energy == sb.energy and sa.alpha == sb.alpha


def test_centroid_drift(toy):
    _, g = toy
    for fam in ("mafe-br", "mafe-ur", "sne", "tsne"):
        result = run(g, FieldModel.default(fam), EngineConfig(max_iter=60))
        snaps = result.trajectory.snapshots
        for prev, cur in zip(snaps, snaps[1:]):
            drift = np.linalg.norm(cur.Z.mean(0) - prev.Z.mean(0))
            assert drift <= 1e-10 * np.linalg.norm(prev.Z)


def test_snapshot_cadence(toy):
    _, g = toy
    result = run(g, FieldModel.default("mafe-ur"), EngineConfig(max_iter=30, snapshot_every=4))
    t = result.trajectory.iterations
    assert t[0] == 0 and np.all(np.diff(t) == 4)
    small = run(g, FieldModel.default("mafe-ur"), EngineConfig(max_iter=5))
    assert list(small.trajectory.iterations) == [0, 1, 2, 3, 4, 5]
    assert EngineConfig().cadence(101) == 10


def test_ur_crowding_resistance(toy):
    _, g = toy
    result = run(g, FieldModel.default("mafe-ur"), EngineConfig(seed=0))
    Z = result.Z
    d = np.linalg.norm(Z[:, None] - Z[None], axis=-1)[np.triu_indices(len(Z), 1)]
    assert d.min() > 10 * 1e-12


def test_divergence_detected():
    W = np.ones((4, 4))
    f = FieldModel("le", xi_a=1e3, xi_r=0.0)
    cfg = EngineConfig(alpha=1.0, gamma1=0, gamma2=0, backtracking=False)
    with pytest.raises(DivergenceError, match="diverged"):
        run(make_graph(W), f, cfg)


def test_graph_size_mismatch():
    with pytest.raises(ValidationError):
        run(make_graph(np.ones((3, 3))), FieldModel(), Z0=np.zeros((4, 2)))


def test_config_validation():
    with pytest.raises(ValidationError):
        EngineConfig(eps=0)
    with pytest.raises(ValidationError):
        EngineConfig(alpha_min=2.0)


# -- learned weights --------------------------------------------------------

def test_learned_weights_limits():
    Z = np.array([[0.0, 0.0], [0.1, 0.0], [1e4, 0.0]])
    W = np.array([[0, 0, 0.5], [0, 0, 0], [0.5, 0, 0]])
    br = FieldModel.default("mafe-br")
    L = learned_embedding_weights(Z, make_graph(W), br).values
    assert L[0, 1] < 0
    assert L[0, 2] == pytest.approx(br.xi_a * 0.5, rel=1e-12)
    assert np.array_equal(L, L.T)
    expected = br.xi_a * 0 - br.xi_r * np.exp(-0.01 / br.sigma)
    assert L[0, 1] == pytest.approx(expected)


def test_learned_weights_ur_closed_form():
    ur = FieldModel.default("mafe-ur", q=2)
    Z = np.array([[0.0], [0.5]])
    L = learned_embedding_weights(Z, make_graph([[0, 0.2], [0.2, 0]]), ur)
    assert L.kind == "learned-ur"
    assert L.values[0, 1] == pytest.approx(ur.xi_a * 0.2 - ur.xi_r / 0.5**4)


def test_learned_weights_unsupported():
    with pytest.raises(ValidationError):
        learned_embedding_weights(np.zeros((2, 2)), make_graph(np.ones((2, 2))), FieldModel.default("tsne"))
    with pytest.raises(ValidationError):
        learned_embedding_weights(np.zeros((2, 2)), make_graph(np.ones((2, 2))), FieldModel.default("mafe-br", p=1))


def test_learned_weights_signs_on_toy(toy):
    data, g = toy
    f = FieldModel.default("mafe-br")
    result = run(g, f, EngineConfig(seed=1))
    L = learned_embedding_weights(result.Z, g, f).values
    W = g.dense()
    same = data.labels[:, None] == data.labels[None, :]
    off = ~np.eye(len(W), dtype=bool)
    # clusters collapse, so an edge stays positive exactly when xi_a w beats xi_r
    strong = W * f.xi_a > f.xi_r
    assert np.all(L[same & strong] > 0)
    assert np.mean(L[same & (W > 0)] > 0) >= 0.9
    assert np.all(L[~same & (W == 0) & off] < 0)
    assert np.any(L[~same] < 0)
