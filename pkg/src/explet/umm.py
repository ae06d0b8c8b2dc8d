"""Universal manifold model: a K-component GMM over augmented block features.

The mixture is trained once on pooled training features and acts as a bank
of shared local spatio-temporal modes. A clip is "aligned" to the bank by
instantiating each mode, either softly (top-T features per component by
weighted density, features may repeat across modes) or hard (argmax
partition), with a fixed 4x4-spatial rigid partition as the baseline.

Appearance dims are z-scored with training statistics stored inside the
model; location dims stay in [0, 1]. All densities are evaluated in this
standardized space, in the log domain.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadK, ConfigError, DimMismatch, EmptyStm, TooFewSamples
from .stfeat import N_LOC_DIMS

LOG_2PI = math.log(2.0 * math.pi)
SIGMA_FLOOR = 1e-4
COLLAPSE_WEIGHT = 1e-8


@dataclass
class UmmModel:
    weights: np.ndarray
    means: np.ndarray          # (K, d), standardized space
    sigmas: np.ndarray         # (K,) isotropic or (K, d) diagonal
    std_mean: np.ndarray
    std_scale: np.ndarray
    ll_history: np.ndarray = None
    n_reseeds: int = 0

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    @property
    def is_isotropic(self):
        return self.sigmas.ndim == 1

    @property
    def means_raw(self):
        """Component means mapped back to the un-standardized feature space."""
        return self.means * self.std_scale + self.std_mean

    def standardize(self, F):
        return (np.asarray(F, dtype=np.float64) - self.std_mean) / self.std_scale

    def log_densities(self, F):
        """(B, K) matrix of log(w_k G(f | mu_k, sigma_k^2 I)) for raw features."""
        F = np.atleast_2d(np.asarray(F, dtype=np.float64))
        if F.shape[1] != self.d:
            raise DimMismatch(f"feature dim {F.shape[1]} != model dim {self.d}")
        S = self.standardize(F)
        return _log_joint(S, self.weights, self.means, self.sigmas)

    def marginal(self, n_dims):
        """Model restricted to the first n_dims dimensions.

        Exact for both covariance shapes: marginals of an axis-aligned
        Gaussian mixture keep the weights and drop coordinates.
        """
        if not 1 <= n_dims <= self.d:
            raise DimMismatch(f"cannot marginalize {self.d}-dim model to {n_dims}")
        sigmas = self.sigmas if self.is_isotropic else self.sigmas[:, :n_dims].copy()
        return UmmModel(weights=self.weights.copy(), means=self.means[:, :n_dims].copy(),
                        sigmas=sigmas.copy(), std_mean=self.std_mean[:n_dims].copy(),
                        std_scale=self.std_scale[:n_dims].copy())


def component_log_density(model, f, k):
    """log of the weighted component density w_k G(f | mu_k, sigma_k^2 I)."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != model.d:
        raise DimMismatch(f"feature dim {f.shape} != model dim {model.d}")
    return float(model.log_densities(f[None, :])[0, k])


def component_density(model, f, k):
    """Weighted component density; exponentiates the log form, so it can
    underflow/overflow for extreme dimensions — ranking code stays in logs."""
    return math.exp(component_log_density(model, f, k))


def _log_joint(S, weights, means, sigmas):
    """(B, K) log joint for standardized features; GEMM-based expansion."""
    d = S.shape[1]
    logw = np.log(weights)
    if sigmas.ndim == 1:
        sq = np.einsum("ij,ij->i", S, S)
        cross = S @ means.T
        d2 = np.clip(sq[:, None] - 2.0 * cross + np.einsum("ij,ij->i", means, means)[None, :],
                     0.0, None)
        lognorm = -0.5 * d * LOG_2PI - d * np.log(sigmas)
        return logw[None, :] + lognorm[None, :] - d2 / (2.0 * sigmas ** 2)[None, :]
    inv_var = 1.0 / (sigmas ** 2)
    quad = (S ** 2) @ inv_var.T - 2.0 * (S @ (means * inv_var).T) \
        + np.einsum("ij,ij->i", means ** 2, inv_var)[None, :]
    lognorm = -0.5 * d * LOG_2PI - np.sum(np.log(sigmas), axis=1)
    return logw[None, :] + lognorm[None, :] - 0.5 * np.clip(quad, 0.0, None)


def _logsumexp_rows(M):
    m = M.max(axis=1)
    return m + np.log(np.exp(M - m[:, None]).sum(axis=1))


@dataclass(frozen=True)
class EmConfig:
    cov: str = "iso"
    seed: int = 0
    max_iters: int = 200
    tol: float = 1e-6
    sigma_floor: float = SIGMA_FLOOR
    standardize: bool = True
    loc_dims: int = N_LOC_DIMS
    max_samples: int = 100_000
    init_subsample: int = 100_000


def _canonical_order(F):
    """Row order independent of input permutation: full-column lexsort."""
    return np.lexsort(F.T[::-1])


def _kmeanspp_init(S, K, rng):
    """Standard k-means++ seeding; returns K rows of S as initial means."""
    n = S.shape[0]
    centers = np.empty((K, S.shape[1]))
    centers[0] = S[rng.integers(n)]
    d2 = np.square(S - centers[0]).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            centers[k] = S[rng.integers(n)]
            continue
        centers[k] = S[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.square(S - centers[k]).sum(axis=1))
    return centers


def train_em(features, K, config=EmConfig()):
    """Fit the UMM by EM on pooled block features.

    The feature rows are put into a canonical (lexicographic) order before
    seeding and before the sufficient-statistics reductions, so the result
    is bitwise invariant to input permutation at a fixed seed. ll_history
    records the per-feature mean log-likelihood before each M-step; it is
    non-decreasing except across component reseeds (counted in n_reseeds).
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2:
        raise TooFewSamples("features must be a 2-D matrix")
    B, d = F.shape
    if B < K:
        raise TooFewSamples(f"{B} features < K={K}")
    if config.cov not in ("iso", "diag"):
        raise ConfigError(f"unknown covariance kind {config.cov!r}")

    F = F[_canonical_order(F)]

    n_app = d - config.loc_dims
    std_mean = np.zeros(d)
    std_scale = np.ones(d)
    if config.standardize and n_app > 0:
        std_mean[:n_app] = F[:, :n_app].mean(axis=0)
        std_scale[:n_app] = np.maximum(F[:, :n_app].std(axis=0), 1e-12)
    S = (F - std_mean) / std_scale

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    if config.max_samples and B > config.max_samples:
        pick = np.sort(rng.choice(B, size=config.max_samples, replace=False))
        S = S[pick]
        B = S.shape[0]

    if config.init_subsample and B > config.init_subsample:
        sub = S[np.sort(rng.choice(B, size=config.init_subsample, replace=False))]
    else:
        sub = S
    means = _kmeanspp_init(sub, K, rng)

    global_sigma = max(math.sqrt(max(S.var(axis=0).mean(), 0.0)), config.sigma_floor)
    if config.cov == "iso":
        sigmas = np.full(K, global_sigma)
    else:
        sigmas = np.full((K, d), global_sigma)
    weights = np.full(K, 1.0 / K)

    sq = np.einsum("ij,ij->i", S, S)
    ll_history = []
    n_reseeds = 0
    reseeded_last = False
    for _ in range(config.max_iters):
        logj = _log_joint(S, weights, means, sigmas)
        lse = _logsumexp_rows(logj)
        ll = float(lse.mean())
        if ll_history and not reseeded_last and ll < ll_history[-1] - 1e-9:
            raise AssertionError(
                f"EM log-likelihood decreased: {ll_history[-1]} -> {ll}")
        converged = bool(ll_history) and not reseeded_last and \
            abs(ll - ll_history[-1]) <= config.tol * max(1.0, abs(ll))
        ll_history.append(ll)
        if converged:
            break

        R = np.exp(logj - lse[:, None])
        Nk = R.sum(axis=0)
        reseeded_last = False
        new_w = Nk / B
        collapsed = np.flatnonzero(new_w < COLLAPSE_WEIGHT)
        if collapsed.size:
            # Re-seed dead components at the feature the mixture explains worst.
            worst = np.argsort(logj.max(axis=1), kind="stable")
            for j, k in enumerate(collapsed):
                means[k] = S[worst[j % B]]
                if config.cov == "iso":
                    sigmas[k] = global_sigma
                else:
                    sigmas[k] = global_sigma
                new_w[k] = 1.0 / B
            weights = new_w / new_w.sum()
            n_reseeds += collapsed.size
            reseeded_last = True
            continue

        weights = new_w
        means = (R.T @ S) / Nk[:, None]
        if config.cov == "iso":
            var = (R.T @ sq - Nk * np.einsum("ij,ij->i", means, means)) / (d * Nk)
            sigmas = np.maximum(np.sqrt(np.clip(var, 0.0, None)), config.sigma_floor)
        else:
            ex2 = (R.T @ (S ** 2)) / Nk[:, None]
            var = np.clip(ex2 - means ** 2, 0.0, None)
            sigmas = np.maximum(np.sqrt(var), config.sigma_floor)

    return UmmModel(weights=weights, means=means, sigmas=sigmas,
                    std_mean=std_mean, std_scale=std_scale,
                    ll_history=np.asarray(ll_history), n_reseeds=n_reseeds)


@dataclass
class LocalMode:
    """One mode instantiated on one clip: feature-row indices ranked by density."""

    mode_index: int
    indices: np.ndarray
    log_probs: np.ndarray

    @property
    def size(self):
        return self.indices.size


@dataclass
class AlignedStm:
    video_id: str
    subject_id: str
    label: int
    modes: list

    @property
    def K(self):
        return len(self.modes)


def fit_soft(stm, model, T):
    """Top-T features per component by weighted density (shared across modes)."""
    if T < 2:
        raise ConfigError(f"soft assignment needs T >= 2, got {T}")
    if stm.count < 1:
        raise EmptyStm(stm.video_id)
    logd = model.log_densities(stm.features)
    take = min(T, stm.count)
    modes = []
    for k in range(model.K):
        order = np.argsort(-logd[:, k], kind="stable")[:take]
        modes.append(LocalMode(k, order.astype(np.int64), logd[order, k]))
    return AlignedStm(stm.video_id, stm.subject_id, stm.label, modes)


def fit_hard(stm, model):
    """Argmax partition of features across components; modes may be empty."""
    if stm.count < 1:
        raise EmptyStm(stm.video_id)
    logd = model.log_densities(stm.features)
    assign = np.argmax(logd, axis=1)
    modes = []
    for k in range(model.K):
        members = np.flatnonzero(assign == k)
        order = members[np.argsort(-logd[members, k], kind="stable")]
        modes.append(LocalMode(k, order.astype(np.int64), logd[order, k]))
    return AlignedStm(stm.video_id, stm.subject_id, stm.label, modes)


def rigid_blocks(stm, K):
    """Fixed 4x4-spatial x (K/16)-temporal partition of the normalized loc cube.

    The baseline alignment: no learning, features land in cells by location.
    Mode order is t-major, then y, then x. Member log-probs are 0 (uniform).
    """
    if K % 16 != 0 or K < 16:
        raise BadK(f"rigid blocking needs K divisible by 16, got {K}")
    tparts = K // 16
    if stm.grid_counts is not None:
        lstar = stm.grid_counts[2]
    else:
        lstar = np.unique(stm.loc[:, 2]).size
    if tparts > lstar:
        raise BadK(f"K/16={tparts} temporal partitions > {lstar} temporal blocks")
    if stm.count < 1:
        raise EmptyStm(stm.video_id)

    loc = stm.loc
    xc = np.minimum((loc[:, 0] * 4).astype(np.int64), 3)
    yc = np.minimum((loc[:, 1] * 4).astype(np.int64), 3)
    tc = np.minimum((loc[:, 2] * tparts).astype(np.int64), tparts - 1)
    mode_of = tc * 16 + yc * 4 + xc
    modes = []
    for k in range(K):
        members = np.flatnonzero(mode_of == k).astype(np.int64)
        modes.append(LocalMode(k, members, np.zeros(members.size)))
    return AlignedStm(stm.video_id, stm.subject_id, stm.label, modes)
