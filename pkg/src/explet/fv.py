"""Improved Fisher vector baseline over the shared mixture model.

Per component: a first-order block (mean-normalized residual) and a
second-order block (variance residual), scaled by the component weight,
then signed square root and global L2 normalization. Encoding runs on the
same standardized feature space the mixture was trained in.
"""

import numpy as np

from .errors import DimMismatch, EmptyStm

RESP_FLOOR = 1e-12


def fisher_dim(model):
    return 2 * model.d * model.K


def encode_fv(features, model, normalized=True):
    """Fisher vector of one clip's features under the mixture.

    Layout: per component k, first-order block then second-order block,
    each model.d wide. Rows are put in canonical order first so the
    encoding is bitwise invariant to feature permutation. With
    normalized=False the raw (pre sign-sqrt, pre L2) statistics vector is
    returned, which is the form the closed-form identities hold in.
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 1:
        raise EmptyStm("cannot encode an empty feature set")
    if F.shape[1] != model.d:
        raise DimMismatch(f"feature dim {F.shape[1]} != model dim {model.d}")
    F = F[np.lexsort(F.T[::-1])]
    B = F.shape[0]

    logj = model.log_densities(F)
    m = logj.max(axis=1)
    gamma = np.exp(logj - m[:, None])
    gamma /= gamma.sum(axis=1)[:, None]

    S = model.standardize(F)
    g_sum = gamma.sum(axis=0)
    GX = gamma.T @ S
    GX2 = gamma.T @ (S ** 2)

    mu = model.means
    if model.is_isotropic:
        sig = np.repeat(model.sigmas[:, None], model.d, axis=1)
    else:
        sig = model.sigmas

    first = (GX - g_sum[:, None] * mu) / sig
    second = (GX2 - 2.0 * mu * GX + g_sum[:, None] * mu ** 2) / sig ** 2 \
        - g_sum[:, None]

    w = model.weights
    first = first / (B * np.sqrt(w)[:, None])
    second = second / (B * np.sqrt(2.0 * w)[:, None])

    dead = g_sum < RESP_FLOOR
    first[dead] = 0.0
    second[dead] = 0.0

    out = np.concatenate([np.concatenate([first[k], second[k]]) for k in range(model.K)])
    if not normalized:
        return out
    out = np.sign(out) * np.sqrt(np.abs(out))
    norm = np.linalg.norm(out)
    return out / norm if norm > 1e-12 else np.zeros_like(out)
