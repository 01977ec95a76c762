"""scikit-learn style wrapper around graph construction and the engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .datasets import PixelDataset
from .engine import EngineConfig, run
from .exceptions import ValidationError
from .fields import FieldModel
from .graph import bilateral_graph, gaussian_perplexity_graph, pca_reduce


class MAFE(TransformerMixin, BaseEstimator):
    """Artificial-field embedding of spectra (optionally with pixel coordinates).

    Parameters
    ----------
    n_components : int
        Embedding dimension m.
    model : str
        Field family: mafe-br, mafe-ur, mafee, mafeh, sne, tsne or le.
    kernel : {"bilateral", "gaussian"}
        Graph construction.  The bilateral kernel needs ``coords`` in
        :meth:`fit`.
    n_neighbors : int
        k of the neighbourhood graph.
    sigma_s, n_rotations : optional
        Bilateral bandwidth and SMT rotation budget; None picks the
        data-driven defaults.
    pca_components : int or None
        Reduce spectra before building the graph.
    xi_a, xi_r, p, q, sigma : optional
        Field parameters; None keeps the family defaults.
    alpha, gamma1, gamma2, eps, max_iter, backtracking : engine settings.
    random_state : int
        Seed for the initial maps.

    Attributes
    ----------
    embedding_ : ndarray (N, m)
    graph_ : NeighborhoodGraph
    field_ : FieldModel
    trajectory_ : Trajectory
    n_iter_ : int
    termination_reason_ : str
    """

    def __init__(
        self,
        n_components=2,
        model="mafe-br",
        kernel="bilateral",
        n_neighbors=15,
        sigma_s=None,
        n_rotations=None,
        pca_components=None,
        xi_a=None,
        xi_r=None,
        p=None,
        q=None,
        sigma=None,
        alpha=0.1,
        gamma1=1e-4,
        gamma2=1e-5,
        eps=1e-5,
        max_iter=1000,
        backtracking=True,
        random_state=0,
    ):
        self.n_components = n_components
        self.model = model
        self.kernel = kernel
        self.n_neighbors = n_neighbors
        self.sigma_s = sigma_s
        self.n_rotations = n_rotations
        self.pca_components = pca_components
        self.xi_a = xi_a
        self.xi_r = xi_r
        self.p = p
        self.q = q
        self.sigma = sigma
        self.alpha = alpha
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.eps = eps
        self.max_iter = max_iter
        self.backtracking = backtracking
        self.random_state = random_state

    def _build_graph(self, X, coords):
        if self.kernel == "bilateral":
            if coords is None:
                raise ValidationError("the bilateral kernel needs pixel coordinates")
            data = PixelDataset(coords, X)
            if self.pca_components is not None:
                data = pca_reduce(data, self.pca_components)
            return bilateral_graph(data, self.n_neighbors, self.sigma_s, self.n_rotations)
        if self.kernel == "gaussian":
            data = X if self.pca_components is None else pca_reduce(X, self.pca_components)
            return gaussian_perplexity_graph(data, self.n_neighbors)
        raise ValidationError(f"unknown kernel {self.kernel!r}")

    def fit(self, X, y=None, coords=None):
        X = check_array(X, dtype=np.float64)
        if self.n_components < 1:
            raise ValidationError("n_components must be >= 1")
        self.field_ = FieldModel.default(
            self.model, xi_a=self.xi_a, xi_r=self.xi_r, p=self.p, q=self.q, sigma=self.sigma
        )
        config = EngineConfig(
            alpha=self.alpha, gamma1=self.gamma1, gamma2=self.gamma2, eps=self.eps,
            max_iter=self.max_iter, seed=self.random_state, backtracking=self.backtracking,
        )
        self.n_features_in_ = X.shape[1]
        self.graph_ = self._build_graph(X, coords)
        result = run(self.graph_, self.field_, config, m=self.n_components)
        self.embedding_ = result.Z
        self.trajectory_ = result.trajectory
        self.n_iter_ = result.n_iter
        self.termination_reason_ = result.reason
        return self

    def fit_transform(self, X, y=None, coords=None):
        return self.fit(X, y, coords=coords).embedding_

    def transform(self, X):
        """Embedding of the training data; the method is transductive."""
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[0] != self.embedding_.shape[0]:
            raise ValidationError("MAFE is transductive: transform only accepts the fitted data")
        return self.embedding_
