"""Adaptive-learning-rate gradient descent on a field energy.

Each iteration moves every map along the negative energy gradient, then
updates the common learning rate from the inner products of the three most
recent gradients::

    alpha <- alpha + gamma1 <g_{t-1}, g_t> + gamma2 <g_{t-2}, g_{t-1}>

An optional backtracking guard halves a step that would raise the energy, so
the recorded energy sequence is non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .exceptions import DivergenceError, NumericalError, ValidationError
from .fields import DELTA, FieldObjective

logger = logging.getLogger(__name__)

CONVERGED = "gradient-norm"
MAX_ITER = "max-iter"


@dataclass(frozen=True)
class EngineConfig:
    alpha: float = 0.1
    gamma1: float = 1e-4
    gamma2: float = 1e-5
    alpha_min: float = 1e-6
    alpha_max: float = 1.0
    eps: float = 1e-5
    max_iter: int = 1000
    seed: int = 0
    snapshot_every: int | None = None
    backtracking: bool = True
    max_halvings: int = 20
    divergence_factor: float = 1e12

    def __post_init__(self):
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValidationError("need 0 < alpha_min <= alpha_max")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValidationError("gamma1 and gamma2 must be non-negative")
        if not self.eps > 0:
            raise ValidationError("eps must be positive")
        if self.max_iter < 0:
            raise ValidationError("max_iter must be non-negative")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValidationError("snapshot_every must be >= 1")

    def cadence(self, n):
        if self.snapshot_every is not None:
            return self.snapshot_every
        return 1 if n <= 100 else 10


@dataclass(frozen=True)
class EmbeddingState:
    """Optimizer state at iteration t; ``grad`` is the gradient at ``Z``."""

    Z: np.ndarray
    alpha: float
    gamma1: float
    gamma2: float
    grad: np.ndarray
    grad_prev: np.ndarray
    grad_prev2: np.ndarray
    energy: float
    t: int = 0
    eps: float = 1e-5
    max_iter: int = 1000

    @property
    def grad_norm(self):
        return float(np.linalg.norm(self.grad))

    @property
    def converged(self):
        return self.grad_norm <= self.eps


@dataclass(frozen=True)
class Snapshot:
    t: int
    Z: np.ndarray
    energy: float
    grad_norm: float
    alpha: float


@dataclass
class Trajectory:
    every: int = 1
    snapshots: list = dc_field(default_factory=list)

    def record(self, state):
        self.snapshots.append(
            Snapshot(state.t, state.Z.copy(), state.energy, state.grad_norm, state.alpha)
        )

    @property
    def iterations(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def energies(self):
        return np.array([s.energy for s in self.snapshots])

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]


@dataclass(frozen=True)
class EmbeddingResult:
    Z: np.ndarray
    trajectory: Trajectory
    reason: str
    n_iter: int
    energy: float
    grad_norm: float


def init_embedding(n, m, seed=0, variance=50.0):
    """Initial maps drawn i.i.d. from N(0, variance * I)."""
    if n < 1 or m < 1:
        raise ValidationError("need n >= 1 and m >= 1")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(variance), size=(int(n), int(m)))


def adapt_learning_rate(alpha, g_t, g_t1, g_t2, gamma1, gamma2, alpha_min=1e-6, alpha_max=1.0):
    """Gradient-correlation learning-rate update, clamped to [alpha_min, alpha_max]."""
    g_t, g_t1, g_t2 = (np.asarray(g, dtype=np.float64) for g in (g_t, g_t1, g_t2))
    if not g_t.shape == g_t1.shape == g_t2.shape:
        raise ValidationError("gradient matrices must share a shape")
    new = alpha + gamma1 * np.vdot(g_t1, g_t) + gamma2 * np.vdot(g_t2, g_t1)
    return float(np.clip(new, alpha_min, alpha_max))


def initial_state(Z, objective, config):
    Z = np.array(Z, dtype=np.float64)
    energy, grad = objective.energy_and_gradient(Z)
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite gradient at iteration 0")
    zeros = np.zeros_like(Z)
    return EmbeddingState(
        Z, float(config.alpha), config.gamma1, config.gamma2, grad, zeros, zeros,
        float(energy), 0, config.eps, config.max_iter,
    )


def step(state, objective, config=EngineConfig()):
    """One descent iteration; returns the next state.

    ``objective`` is a :class:`FieldObjective` (or anything with
    ``energy`` and ``energy_and_gradient``).
    """
    g = state.grad
    alpha = state.alpha
    Z_new = state.Z - alpha * g
    energy_new = objective.energy(Z_new)
    if config.backtracking:
        tol = 1e-12 * max(1.0, abs(state.energy))
        halvings = 0
        while not (energy_new <= state.energy + tol) and halvings < config.max_halvings:
            alpha /= 2.0
            halvings += 1
            Z_new = state.Z - alpha * g
            energy_new = objective.energy(Z_new)
        if not (energy_new <= state.energy + tol):
            # no descent even at the smallest step: stay put
            Z_new, energy_new = state.Z, state.energy
    energy_new, g_new = objective.energy_and_gradient(Z_new)
    if not np.isfinite(g_new).all():
        raise NumericalError(f"non-finite gradient at iteration {state.t + 1}")
    new_alpha = adapt_learning_rate(
        alpha, g, state.grad_prev, state.grad_prev2, state.gamma1, state.gamma2,
        config.alpha_min, config.alpha_max,
    )
    return replace(
        state, Z=Z_new, alpha=new_alpha, grad=g_new, grad_prev=g,
        grad_prev2=state.grad_prev, energy=float(energy_new), t=state.t + 1,
    )


def run(graph, field, config=EngineConfig(), Z0=None, m=2):
    """Iterate until the gradient norm drops to ``eps`` or ``max_iter`` is hit."""
    objective = FieldObjective(graph, field)
    if Z0 is None:
        Z0 = init_embedding(objective.n, m, config.seed)
    elif np.shape(Z0)[0] != objective.n:
        raise ValidationError(f"Z0 has {np.shape(Z0)[0]} rows, graph has {objective.n} vertices")
    state = initial_state(Z0, objective, config)
    every = config.cadence(objective.n)
    trajectory = Trajectory(every)
    trajectory.record(state)
    limit = config.divergence_factor * max(abs(state.energy), 1.0)

    while not state.converged and state.t < config.max_iter:
        state = step(state, objective, config)
        if not np.isfinite(state.energy) or state.energy > limit:
            raise DivergenceError(f"diverged at iteration {state.t} (energy {state.energy:.3g})")
        if state.t % every == 0:
            trajectory.record(state)

    reason = CONVERGED if state.converged else MAX_ITER
    logger.debug("stopped after %d iterations (%s), |grad|=%.3g", state.t, reason, state.grad_norm)
    return EmbeddingResult(state.Z, trajectory, reason, state.t, state.energy, state.grad_norm)


def learned_embedding_weights(Z, graph, field):
    """Embedding-space weights implied by the balance of forces.

    Half the radial coefficient ``w F_a - F_r``; for MAFE-BR (p=q=2) this is
    ``xi_a w - xi_r exp(-d^2 / sigma)`` and for MAFE-UR (p=2, q=2)
    ``xi_a w - xi_r / d^4``.  Entries may be negative.
    """
    from .fields import EmbeddingGraphWeights, _weight_matrix

    if field.family not in ("mafe-br", "mafe-ur") or field.p != 2:
        raise ValidationError("learned weights are defined for MAFE-BR/MAFE-UR with p=2")
    if field.family == "mafe-br" and field.q != 2:
        raise ValidationError("learned MAFE-BR weights need q=2")
    Z = np.asarray(Z, dtype=np.float64)
    W = _weight_matrix(graph, Z.shape[0])
    W = (W + W.T) / 2
    D = np.maximum(squareform(pdist(Z)), DELTA)
    values = 0.5 * (W * field.attraction_coef(D) - field.repulsion_coef(D))
    np.fill_diagonal(values, 0.0)
    kind = "learned-br" if field.family == "mafe-br" else "learned-ur"
    return EmbeddingGraphWeights(values, kind)
