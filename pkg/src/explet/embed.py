"""Discriminant learning over expressionlets via partially connected graphs.

Nodes are the N*K training expressionlets (node m = i*K + p for video i,
mode p). The intrinsic graph links same-mode pairs with equal labels, the
penalty graph same-mode pairs with different labels; the projection V
maximizes the penalty/intrinsic Rayleigh quotient through the generalized
eigenproblem of the two graph-Laplacian scatter matrices.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DimMismatch, IllConditioned, SingleClass, TooFewSamples, WrongCount
from .stfeat import PcaModel

RIDGE_SCALE = 1e-6
RESIDUAL_TOL = 1e-6


@dataclass
class PairGraphs:
    """Intrinsic (same label) and penalty (different label) 0/1 adjacency."""

    W_w: sp.csr_matrix
    W_b: sp.csr_matrix
    n_videos: int
    K: int


def node_index(i, p, K):
    """Graph node of mode p on video i."""
    return i * K + p


def build_graphs(labels, K):
    """Same-mode pairwise graphs over all N*K expressionlets.

    W_w(m, n) = 1 iff the two expressionlets come from the same mode of
    different same-label videos; W_b likewise for different labels.
    """
    labels = np.asarray(labels)
    N = labels.size
    if N < 2:
        raise TooFewSamples("graph embedding needs >= 2 videos")
    if np.unique(labels).size < 2:
        raise SingleClass("graph embedding needs >= 2 classes")

    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]

    def expand(pair_mask):
        vi, vj = np.nonzero(pair_mask)
        p = np.arange(K)
        rows = (vi[:, None] * K + p[None, :]).ravel()
        cols = (vj[:, None] * K + p[None, :]).ravel()
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(N * K, N * K))

    return PairGraphs(W_w=expand(same), W_b=expand(diff), n_videos=N, K=K)


def scatter_laplacians(graphs):
    """Graph Laplacians L = D - W of the intrinsic and penalty graphs."""
    def lap(W):
        deg = np.asarray(W.sum(axis=1)).ravel()
        return (sp.diags(deg) - W).tocsr()

    return lap(graphs.W_w), lap(graphs.W_b)


def solve_generalized(A, B, l):
    """Top-l generalized eigenpairs of A v = lambda B v (A, B symmetric, B PD).

    Descending eigenvalues; each eigenvector normalized to v^T B v = 1 and
    signed so its largest-magnitude entry is positive. Residuals are
    verified against RESIDUAL_TOL before returning.
    """
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    dim = A.shape[0]
    if not 1 <= l <= dim:
        raise ValueError(f"need 1 <= l <= {dim}, got {l}")
    try:
        eigvals, eigvecs = scipy.linalg.eigh(A, B)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise IllConditioned(f"generalized eigensolve failed: {exc}") from exc

    eigvals = eigvals[::-1][:l].copy()
    V = eigvecs[:, ::-1][:, :l].copy()
    signs = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(l)])
    signs[signs == 0] = 1.0
    V *= signs

    AV = A @ V
    resid = AV - B @ V * eigvals[None, :]
    scale = np.maximum(np.linalg.norm(AV, axis=0), 1e-12 * np.linalg.norm(A, "fro"))
    worst = (np.linalg.norm(resid, axis=0) / scale).max()
    if worst > RESIDUAL_TOL:
        raise IllConditioned(f"eigenpair residual {worst:.3e} above {RESIDUAL_TOL}")
    return eigvals, V


def solve_projection(X, L_w, L_b, l, ridge_scale=RIDGE_SCALE):
    """Projection from PCA-reduced log-vectors arranged as columns of X.

    A = X L_b X^T, B = X L_w X^T plus a trace-proportional ridge (the
    within scatter is guaranteed singular whenever N*K < dim). Returns
    (V, eigvals) with V of shape (dim, l).
    """
    X = np.asarray(X, dtype=np.float64)
    dim = X.shape[0]
    if not 1 <= l <= dim:
        raise ValueError(f"need 1 <= l <= dim={dim}, got {l}")
    A = X @ (L_b @ X.T)
    B = X @ (L_w @ X.T)
    tr = float(np.trace(B))
    if tr <= 0.0:
        raise IllConditioned("within-class scatter has zero trace")
    B = B + (ridge_scale * tr / dim) * np.eye(dim)
    return solve_generalized(A, B, l)


@dataclass
class EmbeddingModel:
    """PCA basis plus the discriminant projection applied after it."""

    pca: PcaModel
    V: np.ndarray
    eigvals: np.ndarray

    @property
    def dim_out(self):
        return self.V.shape[1]

    def transform(self, log_vecs):
        Z = np.atleast_2d(np.asarray(log_vecs, dtype=np.float64))
        if Z.shape[1] != self.pca.basis.shape[0]:
            raise DimMismatch(f"log-vector dim {Z.shape[1]} != {self.pca.basis.shape[0]}")
        return self.pca.project(Z) @ self.V


def embed_vec(model, log_vec):
    """One expressionlet log-vector through PCA and the projection."""
    return model.transform(np.asarray(log_vec)[None, :])[0]


def concat_video(embedded, K, l):
    """Mode-order concatenation of K embedded expressionlets into one vector."""
    if len(embedded) != K:
        raise WrongCount(f"expected {K} mode vectors, got {len(embedded)}")
    out = []
    for v in embedded:
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.size != l:
            raise WrongCount(f"mode vector length {v.size} != {l}")
        out.append(v)
    return np.concatenate(out)
