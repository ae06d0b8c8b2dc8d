"""Expressionlets: covariance pooling of local modes on the SPD manifold.

Each instantiated mode becomes the (regularized) covariance matrix of its
member feature vectors; the matrix logarithm maps it into a flat vector
space where PCA and the discriminant embedding apply. With T members and
d_c dims, T <= d_c makes the raw covariance rank-deficient, so the ridge
(eps * mean-diagonal) is required for the log map to exist at all.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotSpd
from .stfeat import PcaModel, fit_pca

COV_EPS = 1e-5


@dataclass
class Expressionlet:
    mode_index: int
    cov: np.ndarray
    log_vec: np.ndarray


def covariance_from_members(M, eps=COV_EPS):
    """Regularized unbiased covariance of member rows.

    Returns (cov, degenerate): modes with < 2 members or zero total variance
    get eps * I and degenerate=True. Rows are put in canonical order first,
    so the result is bitwise invariant to member permutation.
    """
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[1]
    if M.shape[0] < 2:
        return eps * np.eye(d), True
    M = M[np.lexsort(M.T[::-1])]
    X = M - M.mean(axis=0)
    C = (X.T @ X) / (M.shape[0] - 1)
    C = 0.5 * (C + C.T)
    tr = float(np.trace(C))
    if tr <= 0.0:
        return eps * np.eye(d), True
    return C + (eps * tr / d) * np.eye(d), False


def mode_covariance(stm, mode, use_loc=False, eps=COV_EPS):
    """Covariance of one local mode's member features (appearance dims by default)."""
    vecs = stm.features[mode.indices]
    if not use_loc:
        vecs = vecs[:, :stm.d_appearance]
    return covariance_from_members(vecs, eps)


def spd_log(C):
    """Matrix logarithm of an SPD matrix via symmetric eigendecomposition."""
    C = np.asarray(C, dtype=np.float64)
    w, U = np.linalg.eigh(0.5 * (C + C.T))
    if w.min() <= 0.0:
        raise NotSpd(f"min eigenvalue {w.min():.3e} <= 0; regularization missing upstream")
    L = (U * np.log(w)) @ U.T
    return 0.5 * (L + L.T)


def spd_exp(M):
    """Matrix exponential of a symmetric matrix (inverse of spd_log)."""
    M = np.asarray(M, dtype=np.float64)
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    E = (U * np.exp(w)) @ U.T
    return 0.5 * (E + E.T)


def vectorize(M, kind="full"):
    """Flatten a symmetric matrix: full row-major, or upper-triangle with
    off-diagonals scaled by sqrt(2) (same inner products, half the size)."""
    M = np.asarray(M, dtype=np.float64)
    if kind == "full":
        return M.ravel().copy()
    if kind == "tri":
        d = M.shape[0]
        iu = np.triu_indices(d, 1)
        return np.concatenate([np.diag(M), np.sqrt(2.0) * M[iu]])
    raise ValueError(f"unknown vectorization kind {kind!r}")


def vec_length(d, kind="full"):
    return d * d if kind == "full" else d * (d + 1) // 2


def _vectorize_batch(mats, kind):
    """Flatten a (K, d, d) symmetric stack to (K, veclen) rows."""
    K, d, _ = mats.shape
    if kind == "full":
        return mats.reshape(K, d * d).copy()
    if kind == "tri":
        iu, ju = np.triu_indices(d, 1)
        diag = np.arange(d)
        return np.concatenate([mats[:, diag, diag],
                               np.sqrt(2.0) * mats[:, iu, ju]], axis=1)
    raise ValueError(f"unknown vectorization kind {kind!r}")


def build_explets(stm, aligned, use_loc=False, vec_kind="full", eps=COV_EPS):
    """All K expressionlets of one clip.

    Returns (explets, log_vecs, n_degenerate): log_vecs is the (K, veclen)
    matrix fed to PCA/embedding; n_degenerate counts modes that fell back
    to eps * I (fewer than 2 members or zero variance).
    """
    covs = []
    n_degenerate = 0
    for mode in aligned.modes:
        C, degenerate = mode_covariance(stm, mode, use_loc=use_loc, eps=eps)
        n_degenerate += int(degenerate)
        covs.append(C)
    stack = np.stack(covs)
    w, U = np.linalg.eigh(stack)
    if w.min() <= 0.0:
        raise NotSpd(f"{stm.video_id}: covariance with eigenvalue {w.min():.3e}")
    logs = np.matmul(U * np.log(w)[:, None, :], np.transpose(U, (0, 2, 1)))
    logs = 0.5 * (logs + np.transpose(logs, (0, 2, 1)))
    vecs = _vectorize_batch(logs, vec_kind)
    explets = [Expressionlet(mode.mode_index, covs[k], vecs[k])
               for k, mode in enumerate(aligned.modes)]
    return explets, vecs, n_degenerate


def _tri_index_maps(d):
    diag = np.arange(d) * d + np.arange(d)
    iu, ju = np.triu_indices(d, 1)
    upper = iu * d + ju
    lower = ju * d + iu
    return diag, upper, lower


def _full_to_tri(A, d):
    """Isometric coordinates of full-flatten symmetric rows (off-diag averaged)."""
    diag, upper, lower = _tri_index_maps(d)
    off = (A[:, upper] + A[:, lower]) / np.sqrt(2.0)
    return np.concatenate([A[:, diag], off], axis=1)


def _tri_basis_to_full(Btri, d):
    """Map tri-space basis columns back to full-flatten coordinates (isometry)."""
    diag, upper, lower = _tri_index_maps(d)
    out = np.zeros((d * d, Btri.shape[1]))
    out[diag] = Btri[:d]
    off = Btri[d:] / np.sqrt(2.0)
    out[upper] = off
    out[lower] = off
    return out


def reduce_explets(log_vecs, energy=None, n_components=None, sym_dim=None):
    """Shared PCA over training log-vectors (one basis for all modes).

    When the vectors are full flattens of symmetric sym_dim x sym_dim
    matrices, the fit runs in the d(d+1)/2-dim triangular parameterization
    (an inner-product isometry containing all the data) and the basis is
    mapped back, which is exact and much faster than eigh on d^2 dims.

    Returns (PcaModel in the input coordinates, reduced training vectors).
    """
    A = np.asarray(log_vecs, dtype=np.float64)
    if sym_dim is not None and A.shape[1] == sym_dim * sym_dim:
        T = _full_to_tri(A, sym_dim)
        pca_tri = fit_pca(T, n_components=n_components, energy=energy)
        basis = _tri_basis_to_full(pca_tri.basis, sym_dim)
        mean = _tri_basis_to_full(pca_tri.mean[:, None], sym_dim)[:, 0]
        signs = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(basis.shape[1])])
        signs[signs == 0] = 1.0
        basis = basis * signs
        pca = PcaModel(mean=mean, basis=basis, eigvals=pca_tri.eigvals,
                       retained_energy=pca_tri.retained_energy)
    else:
        pca = fit_pca(A, n_components=n_components, energy=energy)
    return pca, pca.project(A)
