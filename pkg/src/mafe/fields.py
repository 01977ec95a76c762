"""Pairwise attraction/repulsion force fields and the total graph energy.

Every family is described by two radial potentials, ``U_att(d)`` (weighted by
the edge weight) and ``U_rep(d)`` (acting between all pairs), and their
coefficient functions::

    F_a(d) =  U_att'(d) / d        F_r(d) = -U_rep'(d) / d

so the force that pair (i, j) exerts on map i is
``(z_i - z_j) * (F_r - w_ij F_a)`` -- positive pushes apart.

For the MAFE families and LE the energy sums every unordered pair once::

    U(Z) = sum_{i<j} [ w_ij U_att(|z_i - z_j|) + U_rep(|z_i - z_j|) ]

with the repulsion entering as a barrier.  SNE and tSNE use the KL objective
with the data-entropy constant dropped (attraction term plus log-sum term).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy import sparse
from scipy.spatial.distance import pdist, squareform
from scipy.special import logsumexp

from .exceptions import NumericalError, ValidationError

DELTA = 1e-12
D_MAX = 1e3

FAMILIES = ("mafe-br", "mafe-ur", "mafee", "mafeh", "sne", "tsne", "le")
MAFE_FAMILIES = ("mafe-br", "mafe-ur", "mafee", "mafeh")

_DEFAULTS = {
    "mafe-br": dict(xi_a=0.4, xi_r=1e-4, p=2.0, q=2.0),
    "mafe-ur": dict(xi_a=0.03, xi_r=1e-5, p=2.0, q=1.0),
    "mafee": dict(xi_a=0.4, xi_r=1e-4, p=2.0, q=2.0, sigma_a=10.0, sigma_r=1.0),
    "mafeh": dict(xi_a=0.03, xi_r=1e-5, p=1.0, q=2.0),
    "sne": dict(xi_a=1.0, xi_r=1.0, p=2.0, q=2.0),
    "tsne": dict(xi_a=1.0, xi_r=1.0, p=2.0, q=2.0),
    "le": dict(xi_a=1.0, xi_r=0.0, p=2.0, q=2.0),
}


def _normalize_family(family):
    name = str(family).lower().replace("_", "-")
    aliases = {"mafebr": "mafe-br", "mafeur": "mafe-ur", "t-sne": "tsne", "mafe-e": "mafee",
               "mafe-h": "mafeh"}
    name = aliases.get(name, name)
    if name not in FAMILIES:
        raise ValidationError(f"unknown field family {family!r}; choose from {FAMILIES}")
    return name


@dataclass(frozen=True)
class FieldModel:
    """A potential family and its parameters.

    Parameters that a family does not use are carried but ignored.  Use
    :meth:`default` to get the reference settings of a family.
    """

    family: str = "mafe-br"
    xi_a: float = 0.4
    xi_r: float = 1e-4
    p: float = 2.0
    q: float = 2.0
    sigma: float = 1.0
    sigma_a: float = 10.0
    sigma_r: float = 1.0
    delta: float = dc_field(default=DELTA, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", _normalize_family(self.family))
        if self.family in MAFE_FAMILIES and not self.xi_a > 0:
            raise ValidationError("xi_a must be positive")
        if self.xi_a < 0:
            raise ValidationError("xi_a must be non-negative")
        if self.xi_r < 0:
            raise ValidationError("xi_r must be non-negative")
        if self.p < 1 or self.q < 1:
            raise ValidationError("exponents p and q must be >= 1")
        for name in ("sigma", "sigma_a", "sigma_r", "delta"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")

    @classmethod
    def default(cls, family, **overrides):
        family = _normalize_family(family)
        params = dict(_DEFAULTS[family])
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(family=family, **params)

    def with_params(self, **changes):
        return replace(self, **changes)

    # -- radial profiles -------------------------------------------------
    def attraction(self, d):
        d = np.asarray(d, dtype=np.float64)
        f = self.family
        if f in ("mafe-br", "mafe-ur"):
            return self.xi_a * d**self.p
        if f == "mafee":
            return self.xi_a * self.sigma_a * -np.expm1(-(d**self.p) / self.sigma_a)
        if f == "mafeh":
            return -self.xi_a / np.maximum(d, self.delta) ** self.p
        if f == "tsne":
            return np.log1p(d * d)
        if f == "sne":
            return d * d
        return self.xi_a * d * d

    def attraction_coef(self, d):
        d = np.maximum(np.asarray(d, dtype=np.float64), self.delta)
        f, p = self.family, self.p
        if f in ("mafe-br", "mafe-ur"):
            return self.xi_a * p * d ** (p - 2)
        if f == "mafee":
            return self.xi_a * p * d ** (p - 2) * np.exp(-(d**p) / self.sigma_a)
        if f == "mafeh":
            return self.xi_a * p * d ** (-p - 2)
        if f == "tsne":
            return 2.0 / (1.0 + d * d)
        if f == "sne":
            return 2.0 * np.ones_like(d)
        return 2.0 * self.xi_a * np.ones_like(d)

    def repulsion(self, d):
        d = np.asarray(d, dtype=np.float64)
        f, q = self.family, self.q
        if f == "mafe-br":
            return self.xi_r * self.sigma * np.exp(-(d**q) / self.sigma)
        if f == "mafee":
            return self.xi_r * self.sigma_r * np.exp(-(d**q) / self.sigma_r)
        if f in ("mafe-ur", "mafeh"):
            return self.xi_r / np.maximum(d, self.delta) ** q
        return np.zeros_like(d)

    def repulsion_coef(self, d, normalizer=1.0):
        d = np.maximum(np.asarray(d, dtype=np.float64), self.delta)
        f, q = self.family, self.q
        if f == "mafe-br":
            return self.xi_r * q * d ** (q - 2) * np.exp(-(d**q) / self.sigma)
        if f == "mafee":
            return self.xi_r * q * d ** (q - 2) * np.exp(-(d**q) / self.sigma_r)
        if f in ("mafe-ur", "mafeh"):
            return self.xi_r * q * d ** (-q - 2)
        if f == "sne":
            return 2.0 * np.exp(-d * d) / normalizer
        if f == "tsne":
            return 2.0 / (1.0 + d * d) ** 2 / normalizer
        return np.zeros_like(d)

    def radial_coefficient(self, d, w, normalizer=1.0):
        """F_r(d) - w F_a(d): positive means the pair pushes apart."""
        return self.repulsion_coef(d, normalizer) - w * self.attraction_coef(d)


def attraction_energy(d, field):
    """Attraction potential of one pair at distance d (edge weight not applied)."""
    if np.any(np.asarray(d) < 0):
        raise ValidationError("distance must be non-negative")
    return field.attraction(d)


def repulsion_energy(d, field):
    """Repulsion potential of one pair at distance d."""
    if np.any(np.asarray(d) < 0):
        raise ValidationError("distance must be non-negative")
    return field.repulsion(d)


def pair_force(z_i, z_j, w_ij, field, normalizer=1.0):
    """Force exerted on map i by map j.

    For SNE/tSNE the repulsive part depends on the row normaliser of the
    embedding kernel, passed as ``normalizer``.
    """
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if not (np.isfinite(z_i).all() and np.isfinite(z_j).all()):
        raise ValidationError("pair_force received non-finite coordinates")
    delta = z_i - z_j
    dist = np.sqrt(delta @ delta)
    return delta * field.radial_coefficient(dist, w_ij, normalizer)


def equilibrium_distance(w_ij, field, d_max=D_MAX, tol=1e-10):
    """Distance where attraction and repulsion balance for a pair, or None.

    Bisection on the radial coefficient over ``(delta, d_max]``.  A balance
    already at the floor (e.g. ``xi_a w = xi_r`` for MAFE-BR with p=q=2) is
    reported as ``delta``.
    """
    if field.xi_r == 0:
        return None
    lo, hi = field.delta, float(d_max)

    def coef(d):
        return float(field.radial_coefficient(d, w_ij))

    c_lo, c_hi = coef(lo), coef(hi)
    scale = float(field.repulsion_coef(lo)) + abs(w_ij) * float(field.attraction_coef(lo))
    if abs(c_lo) <= 1e-12 * scale:
        return lo
    if not (c_lo > 0 and c_hi < 0):
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if coef(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _weight_matrix(graph, n=None):
    W = graph.weights if hasattr(graph, "weights") else graph
    if hasattr(W, "kind") and hasattr(W, "values"):
        W = W.values
    W = W.toarray() if sparse.issparse(W) else np.array(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError("graph weights must be a square matrix")
    if n is not None and W.shape[0] != n:
        raise ValidationError(f"graph has {W.shape[0]} vertices but Z has {n} rows")
    W = W.astype(np.float64, copy=True)
    np.fill_diagonal(W, 0.0)
    return W


class FieldObjective:
    """Energy and gradient of a field on a fixed graph.

    Caches the dense weight matrix; the engine evaluates this repeatedly.
    """

    def __init__(self, graph, field):
        self.field = field
        self.W = _weight_matrix(graph)
        self.n = self.W.shape[0]
        self.W_sym = (self.W + self.W.T) / 2
        self._w_condensed = squareform(self.W_sym, checks=False)
        self.row_mass = self.W.sum(axis=1)

    def _check(self, Z):
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[0] != self.n:
            raise ValidationError(f"Z must have shape ({self.n}, m), got {Z.shape}")
        if not np.isfinite(Z).all():
            raise ValidationError("Z contains non-finite values")
        return Z

    def energy(self, Z):
        return self.energy_and_gradient(Z, need_grad=False)[0]

    def gradient(self, Z):
        return self.energy_and_gradient(Z)[1]

    def energy_and_gradient(self, Z, need_grad=True):
        Z = self._check(Z)
        f = self.field
        if self.n < 2:
            return 0.0, np.zeros_like(Z)
        if f.family in ("sne", "tsne"):
            return self._kl(Z, need_grad)
        d2 = pdist(Z, "sqeuclidean")
        d = np.sqrt(d2)
        w = self._w_condensed
        energy = float(np.sum(w * f.attraction(d)) + np.sum(f.repulsion(d)))
        if not need_grad:
            return energy, None
        coef = w * f.attraction_coef(d) - f.repulsion_coef(d)
        return energy, _apply_coefficients(squareform(coef), Z)

    def _kl(self, Z, need_grad):
        f = self.field
        n = self.n
        D2 = squareform(pdist(Z, "sqeuclidean"))
        off = ~np.eye(n, dtype=bool)
        if f.family == "sne":
            logits = np.where(off, -D2, -np.inf)
            attract = np.sum(self.W * D2)
            kernel_scale = None
        else:
            kernel = np.where(off, 1.0 / (1.0 + D2), 0.0)
            with np.errstate(divide="ignore"):
                logits = np.where(off, np.log(kernel), -np.inf)
            attract = np.sum(self.W * np.log1p(D2))
            kernel_scale = kernel
        lse = logsumexp(logits, axis=1)
        energy = float(attract + self.row_mass @ lse)
        if not need_grad:
            return energy, None
        Q = np.exp(logits - lse[:, None])  # row-normalised embedding weights
        a = self.row_mass
        C = (self.W + self.W.T) - (a[:, None] * Q + (a[:, None] * Q).T)
        C = 2.0 * C
        if kernel_scale is not None:
            C = C * kernel_scale
        return energy, _apply_coefficients(C, Z)


def _apply_coefficients(C, Z):
    """Row i of the result is sum_j C_ij (z_i - z_j)."""
    return C.sum(axis=1)[:, None] * Z - C @ Z


def total_energy(Z, graph, field):
    return FieldObjective(graph, field).energy(Z)


def total_gradient(Z, graph, field):
    grad = FieldObjective(graph, field).gradient(Z)
    if not np.isfinite(grad).all():
        raise NumericalError("gradient is not finite")
    return grad


def probabilistic_embedding_weights(Z, kind="sne"):
    """Row-normalised embedding kernel (Gaussian for SNE, Student-t for tSNE)."""
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if n < 2:
        raise ValidationError("need at least 2 maps")
    kind = _normalize_family(kind)
    D2 = squareform(pdist(Z, "sqeuclidean"))
    off = ~np.eye(n, dtype=bool)
    if kind == "sne":
        logits = np.where(off, -D2, -np.inf)
    elif kind == "tsne":
        logits = np.where(off, -np.log1p(D2), -np.inf)
    else:
        raise ValidationError("kind must be 'sne' or 'tsne'")
    return EmbeddingGraphWeights(np.exp(logits - logsumexp(logits, axis=1)[:, None]), "probabilistic")


@dataclass(frozen=True)
class EmbeddingGraphWeights:
    """Weights between embedded maps; learned MAFE weights may be negative."""

    values: np.ndarray
    kind: str
