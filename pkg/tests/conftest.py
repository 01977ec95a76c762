import numpy as np
import pytest
from scipy import sparse

from mafe.graph import NeighborhoodGraph


def make_graph(W, kind="test", k=None):
    W = np.asarray(W, dtype=np.float64)
    W = (W + W.T) / 2
    np.fill_diagonal(W, 0.0)
    return NeighborhoodGraph(sparse.csr_matrix(W), k or W.shape[0] - 1, kind)


def random_instance(rng, family, n=None, m=None):
    """Random (Z, graph) with well separated points and no empty rows."""
    n = n or int(rng.integers(3, 13))
    m = m or int(rng.integers(1, 4))
    Z = rng.normal(0, 1.5, size=(n, m))
    W = rng.uniform(0.05, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    W = (W + W.T) / 2
    np.fill_diagonal(W, 0.0)
    for i in range(n):
        if W[i].sum() == 0:
            j = (i + 1) % n
            W[i, j] = W[j, i] = 0.5
    if family in ("sne", "tsne"):
        W = W / W.sum()
    return Z, make_graph(W)


def central_difference(f, Z, h=1e-6):
    G = np.zeros_like(Z)
    for idx in np.ndindex(*Z.shape):
        Zp, Zm = Z.copy(), Z.copy()
        Zp[idx] += h
        Zm[idx] -= h
        G[idx] = (f(Zp) - f(Zm)) / (2 * h)
    return G


def relative_error(g, fd):
    scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    return np.linalg.norm(g - fd) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
