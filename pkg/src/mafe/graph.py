"""High-dimensional neighbourhood graphs.

Two constructions are provided: the Gaussian-perplexity graph used by the
SNE family, and the bilateral spatial-spectral kernel whose photometric part
is a Mahalanobis term with the covariance estimated by a sparse matrix
transform (a greedy sequence of Givens rotations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from .datasets import PixelDataset
from .exceptions import NumericalError, ValidationError


@dataclass(frozen=True)
class CovarianceModel:
    """Sample covariance ``S`` and its SMT factorisation ``S ~ E diag(lam) E^T``."""

    S: np.ndarray
    E_hat: np.ndarray
    Lambda_hat: np.ndarray
    n_rotations: int
    objective_trace: np.ndarray | None = None

    @property
    def precision(self):
        """Sigma^-1 = E diag(1/lam) E^T."""
        return (self.E_hat / self.Lambda_hat) @ self.E_hat.T

    def whiten(self, Y):
        """Map spectra so that Euclidean distance equals Mahalanobis distance."""
        return (np.asarray(Y, dtype=np.float64) @ self.E_hat) / np.sqrt(self.Lambda_hat)


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Sparse symmetric edge weights with zero diagonal."""

    weights: sparse.csr_matrix
    k: int
    kind: str
    sigma_i: np.ndarray | None = None
    sigma_s: float | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def dense(self):
        return self.weights.toarray()

    def edges(self):
        """(i, j, w) triples with i < j, sorted lexicographically."""
        upper = sparse.triu(self.weights, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]


def _as_dataset(data):
    if isinstance(data, PixelDataset):
        return data
    Y = np.asarray(data, dtype=np.float64)
    if Y.ndim != 2:
        raise ValidationError("expected a PixelDataset or an (N, d) array")
    return PixelDataset(np.zeros((Y.shape[0], 2)), Y)


def pca_reduce(data, target_dim):
    """Project centred spectra onto the leading ``target_dim`` principal axes.

    Components are ordered by decreasing eigenvalue; each axis is sign-fixed so
    its largest-magnitude loading is positive, which makes the projection
    deterministic.
    """
    data = _as_dataset(data)
    n, d = data.spectra.shape
    if n < 2:
        raise ValidationError("pca_reduce needs at least 2 pixels")
    if not 1 <= target_dim <= d:
        raise ValidationError(f"target_dim must be in [1, {d}], got {target_dim}")
    Yc = data.spectra - data.spectra.mean(axis=0)
    S = Yc.T @ Yc / n
    evals, evecs = np.linalg.eigh(S)
    if evals[-1] <= 0 or not np.any(Yc):
        raise ValidationError("zero variance: all spectra are identical")
    order = np.argsort(evals)[::-1][:target_dim]
    V = evecs[:, order]
    flip = np.sign(V[np.abs(V).argmax(axis=0), np.arange(target_dim)])
    V = V * np.where(flip == 0, 1.0, flip)
    return data.with_spectra(Yc @ V)


def sample_covariance(data):
    """Biased (1/N) sample covariance of the spectra."""
    Y = _as_dataset(data).spectra
    if Y.shape[0] < 2:
        raise ValidationError("sample_covariance needs at least 2 pixels")
    Yc = Y - Y.mean(axis=0)
    S = Yc.T @ Yc / Y.shape[0]
    return (S + S.T) / 2


def _max_correlation(S):
    diag = np.diag(S)
    denom = np.sqrt(np.outer(diag, diag))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(denom > 0, S**2 / np.where(denom > 0, denom, 1.0) ** 2, 0.0)
    np.fill_diagonal(corr, -1.0)
    flat = int(np.argmax(corr))
    i, j = divmod(flat, S.shape[0])
    return corr[i, j], i, j


def _givens_rotate(S, E, i, j):
    """Rotate coordinates i, j so that S[i, j] becomes zero (in place)."""
    sii, sjj, sij = S[i, i], S[j, j], S[i, j]
    tau = (sjj - sii) / (2.0 * sij)
    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    # S <- G^T S G with G = I except G[i,i]=G[j,j]=c, G[i,j]=s, G[j,i]=-s
    col_i, col_j = S[:, i].copy(), S[:, j].copy()
    S[:, i] = c * col_i - s * col_j
    S[:, j] = s * col_i + c * col_j
    row_i, row_j = S[i, :].copy(), S[j, :].copy()
    S[i, :] = c * row_i - s * row_j
    S[j, :] = s * row_i + c * row_j
    S[i, j] = S[j, i] = 0.0
    e_i, e_j = E[:, i].copy(), E[:, j].copy()
    E[:, i] = c * e_i - s * e_j
    E[:, j] = s * e_i + c * e_j


def smt_estimate(S, n_rotations=None, max_sweeps=50, tol=1e-8, floor=1e-10):
    """Sparse matrix transform estimate of a covariance.

    Each rotation picks the coordinate pair with the largest normalised
    squared correlation ``S_ij^2 / (S_ii S_jj)`` (the largest likelihood
    gain) and annihilates it with a Givens rotation.  The product of the
    diagonal entries never increases.  Rotation stops early once the largest
    absolute correlation drops below ``tol``.

    ``n_rotations=None`` means the default budget of ``2 d`` rotations; pass
    a large number to run to convergence.  Budgets above
    ``d (d - 1) / 2 * max_sweeps`` are rejected.
    """
    S = np.array(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError("S must be square")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValidationError("S must be symmetric")
    d = S.shape[0]
    budget = d * (d - 1) // 2 * max_sweeps
    if n_rotations is None:
        n_rotations = min(2 * d, budget)
    if n_rotations < 0:
        raise ValidationError("n_rotations must be non-negative")
    if n_rotations > budget:
        raise ValidationError(
            f"rotation budget exceeded: {n_rotations} > {budget} (d={d}, max_sweeps={max_sweeps})"
        )

    S = (S + S.T) / 2
    work = S.copy()
    E = np.eye(d)
    objective = [float(np.prod(np.diag(work)))]
    done = 0
    while done < n_rotations:
        corr2, i, j = _max_correlation(work)
        if corr2 < tol * tol:
            break
        _givens_rotate(work, E, i, j)
        done += 1
        objective.append(float(np.prod(np.diag(work))))

    lam = np.diag(E.T @ S @ E).copy()
    lam = np.maximum(lam, floor * max(lam.max(), 0.0))
    if not np.all(lam > 0):
        # all-zero covariance: fall back to unit scales
        lam = np.ones(d)
    return CovarianceModel(S, E, lam, done, np.asarray(objective))


def photometric_weight(y_i, y_j, cov):
    """exp(-1/2 (E^T dy)^T diag(lam)^-1 (E^T dy))."""
    delta = cov.E_hat.T @ (np.asarray(y_i, dtype=np.float64) - np.asarray(y_j, dtype=np.float64))
    return float(np.exp(-0.5 * np.sum(delta * delta / cov.Lambda_hat)))


def bilateral_weight(s_i, s_j, y_i, y_j, sigma_s, cov):
    """Spatial Gaussian times photometric Mahalanobis similarity."""
    if not sigma_s > 0:
        raise ValidationError(f"sigma_s must be positive, got {sigma_s}")
    ds = np.asarray(s_i, dtype=np.float64) - np.asarray(s_j, dtype=np.float64)
    return float(np.exp(-(ds @ ds) / sigma_s**2)) * photometric_weight(y_i, y_j, cov)


def _symmetrize(W):
    W = sparse.csr_matrix(W)
    W = (W + W.T) / 2
    W.eliminate_zeros()
    W.sort_indices()
    return W.tocsr()


def _top_k_rows(rows, cols, vals, n, k):
    """Keep the k largest values per row; ties go to the lower column index."""
    order = np.lexsort((cols, -vals, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    starts = np.searchsorted(rows, np.arange(n))
    rank = np.arange(rows.size) - starts[rows]
    keep = rank < k
    return rows[keep], cols[keep], vals[keep]


def knn_sparsify_and_symmetrize(dense_weights, k, kind="knn"):
    """Keep the top-k entries of every row, then average with the transpose."""
    W = np.asarray(dense_weights, dtype=np.float64)
    n = W.shape[0]
    if W.shape != (n, n):
        raise ValidationError("dense_weights must be square")
    if not 1 <= k < n:
        raise ValidationError(f"k must satisfy 1 <= k < N={n}, got {k}")
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    r, c, v = _top_k_rows(rows, cols, W[rows, cols], n, k)
    kept = sparse.csr_matrix((v, (r, c)), shape=(n, n))
    return NeighborhoodGraph(_symmetrize(kept), k, kind)


def _row_entropy(d2_row, beta):
    """Shannon entropy (nats) and probabilities of exp(-beta * d2) normalised."""
    logits = -beta * d2_row
    log_z = logsumexp(logits)
    p = np.exp(logits - log_z)
    return log_z + beta * float(p @ d2_row), p


def calibrate_row(d2_row, k, tol=1e-5, max_iter=200, base=np.e):
    """Binary search for the precision beta giving entropy log_base(k).

    ``d2_row`` holds squared distances to every other point.  Returns
    ``(beta, probabilities, entropy_in_base)``; raises if the target is not
    reached within ``max_iter`` halvings/doublings.
    """
    target = np.log(k)
    scale = np.log(base)
    d2_row = d2_row - d2_row.min()  # shift-invariant; keeps logits bounded
    beta, lo, hi = 1.0, 0.0, np.inf
    if d2_row.max() > 0:
        beta = 1.0 / np.median(d2_row[d2_row > 0])
    for _ in range(max_iter):
        h, p = _row_entropy(d2_row, beta)
        diff = (h - target) / scale
        if abs(diff) <= tol:
            return beta, p, h / scale
        if diff > 0:  # too flat: sharpen
            lo = beta
            beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
        else:
            hi = beta
            beta = (beta + lo) / 2.0
    return beta, p, h / scale


def gaussian_perplexity_graph(data, k, tol=1e-5, accept=1e-3, max_iter=200, entropy_base="e"):
    """Row-normalised Gaussian weights calibrated to effective neighbour count k.

    For each point the bandwidth sigma_i (weights ``exp(-|dy|^2 / (2 sigma_i))``)
    is found by binary search so that the entropy of the row distribution
    equals ``log k``.  Rows are normalised over all j != i, then the matrix is
    symmetrised as ``(W + W^T) / 2``.
    """
    data = _as_dataset(data)
    Y = data.spectra
    n = Y.shape[0]
    if not 2 <= k < n:
        raise ValidationError(f"k must satisfy 2 <= k < N={n}, got {k}")
    base = {"e": np.e, "2": 2.0, 2: 2.0}.get(entropy_base, entropy_base)
    sq = np.sum(Y * Y, axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T, 0.0)

    P = np.zeros((n, n))
    sigma = np.empty(n)
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = D2[i, others[i]]
        beta, p, h = calibrate_row(row, k, tol=tol, max_iter=max_iter, base=base)
        if not abs(h - np.log(k) / np.log(base)) <= accept:
            raise NumericalError(
                f"perplexity calibration failed to bracket for point {i} "
                f"(entropy {h:.6g}, target {np.log(k) / np.log(base):.6g})"
            )
        P[i, others[i]] = p
        sigma[i] = 1.0 / (2.0 * beta)
    return NeighborhoodGraph(_symmetrize(P), k, "gaussian-perplexity", sigma_i=sigma)


def default_sigma_s(coords, k):
    """Median non-zero distance from each pixel to its k spatial neighbours."""
    coords = np.asarray(coords, dtype=np.float64)
    kk = min(k + 1, coords.shape[0])
    dist, _ = cKDTree(coords).query(coords, k=kk)
    dist = np.atleast_2d(dist)[:, 1:]
    nz = dist[dist > 0]
    return float(np.median(nz)) if nz.size else 1.0


def bilateral_graph(data, k=15, sigma_s=None, n_rotations=None, cov=None, normalize="row"):
    """Sparse bilateral-kernel graph.

    Candidates for row i are the pixels within a spatial radius of
    ``3 sigma_s`` plus the k nearest neighbours in whitened spectral space;
    the k heaviest candidates are kept.  With ``normalize="row"`` the kept
    weights of each row are rescaled to sum to one (computed in log space so
    that very small kernels do not underflow); ``"none"`` keeps raw kernel
    values.  The result is symmetrised as ``(W + W^T) / 2``.
    """
    if not isinstance(data, PixelDataset):
        raise ValidationError("bilateral_graph needs a PixelDataset with coordinates")
    n = data.n_pixels
    if not 1 <= k < n:
        raise ValidationError(f"k must satisfy 1 <= k < N={n}, got {k}")
    if normalize not in ("row", "none"):
        raise ValidationError(f"normalize must be 'row' or 'none', got {normalize!r}")
    if sigma_s is None:
        sigma_s = default_sigma_s(data.coords, k)
    if not sigma_s > 0:
        raise ValidationError(f"sigma_s must be positive, got {sigma_s}")
    if cov is None:
        cov = smt_estimate(sample_covariance(data), n_rotations)

    Yw = cov.whiten(data.spectra)
    S = data.coords
    spatial = cKDTree(S).query_ball_point(S, r=3.0 * sigma_s)
    _, spectral = cKDTree(Yw).query(Yw, k=min(k + 1, n))
    spectral = np.atleast_2d(spectral)

    rows, cols = [], []
    for i in range(n):
        cand = np.union1d(np.asarray(spatial[i], dtype=np.int64), spectral[i])
        cand = cand[cand != i]
        rows.append(np.full(cand.size, i))
        cols.append(cand)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    ds = S[rows] - S[cols]
    dy = Yw[rows] - Yw[cols]
    logw = -np.sum(ds * ds, axis=1) / sigma_s**2 - 0.5 * np.sum(dy * dy, axis=1)
    rows, cols, logw = _top_k_rows(rows, cols, logw, n, k)
    if normalize == "row":
        row_lse = np.full(n, -np.inf)
        np.logaddexp.at(row_lse, rows, logw)
        logw = logw - row_lse[rows]
    kept = sparse.csr_matrix((np.exp(logw), (rows, cols)), shape=(n, n))
    return NeighborhoodGraph(_symmetrize(kept), k, "bilateral", sigma_s=float(sigma_s))

