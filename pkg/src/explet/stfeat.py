"""Dense spatio-temporal block features.

A clip is scanned with a strided 3-D block grid; each block yields an
appearance descriptor (upright dense SIFT on the center frame, or a
2x2x2-cell oriented-gradient histogram over 4 frames), optionally
PCA-reduced, and augmented with the block's normalized grid coordinates.
The augmented vectors are what every later stage consumes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (BadBlockShape, DataError, DegenerateData, EmptyGrid,
                     IndexOutOfGrid, TooFewSamples)

SIFT_DIM = 128
HOG_DIM = 64
HOG_FRAMES = 4
N_LOC_DIMS = 3


@dataclass
class FrameSequence:
    """A clip: (L, H, W) grayscale frames with intensities in [0, 1]."""

    video_id: str
    subject_id: str
    label: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise DataError(f"{self.video_id}: frames must be a non-empty (L, H, W) stack")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise DataError(f"{self.video_id}: intensities outside [0, 1]")

    @property
    def shape(self):
        return self.frames.shape


@dataclass(frozen=True)
class BlockSpec:
    """Block geometry: w x h pixels, l frames, strides in pixels/frames."""

    w: int
    h: int
    l: int
    stride_xy: int
    stride_t: int = 1

    def __post_init__(self):
        if min(self.w, self.h, self.l) < 1 or min(self.stride_xy, self.stride_t) < 1:
            raise DataError("block dims and strides must be >= 1")


@dataclass(frozen=True)
class BlockFeature:
    """One appearance descriptor plus its normalized grid location."""

    appearance: np.ndarray
    loc: tuple
    grid_index: tuple

    @property
    def vector(self):
        return np.concatenate([self.appearance, np.asarray(self.loc)])


@dataclass
class StmFeatureSet:
    """All augmented block features of one clip (rows = appearance | loc)."""

    video_id: str
    subject_id: str
    label: int
    features: np.ndarray
    grid_counts: tuple = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError(f"{self.video_id}: feature set empty")

    @property
    def count(self):
        return self.features.shape[0]

    @property
    def d_total(self):
        return self.features.shape[1]

    @property
    def d_appearance(self):
        return self.features.shape[1] - N_LOC_DIMS

    @property
    def appearance(self):
        return self.features[:, :self.d_appearance]

    @property
    def loc(self):
        return self.features[:, self.d_appearance:]


def grid_counts(shape, spec):
    """Number of stride-aligned block positions (w*, h*, l*) in an (L, H, W) volume."""
    L, H, W = shape
    if spec.w > W or spec.h > H or spec.l > L:
        raise EmptyGrid(f"block {spec.w}x{spec.h}x{spec.l} exceeds volume {W}x{H}x{L}")
    wstar = (W - spec.w) // spec.stride_xy + 1
    hstar = (H - spec.h) // spec.stride_xy + 1
    lstar = (L - spec.l) // spec.stride_t + 1
    return wstar, hstar, lstar


def sample_blocks(seq, spec):
    """Every stride-aligned block of a clip, row-major in (t, y, x).

    Yields (volume, grid_index) with volume an (l, h, w) view into the clip
    and grid_index the integer (x, y, t) grid position.
    """
    wstar, hstar, lstar = grid_counts(seq.frames.shape, spec)
    frames = seq.frames
    out = []
    for ti in range(lstar):
        t0 = ti * spec.stride_t
        for yi in range(hstar):
            y0 = yi * spec.stride_xy
            for xi in range(wstar):
                x0 = xi * spec.stride_xy
                vol = frames[t0:t0 + spec.l, y0:y0 + spec.h, x0:x0 + spec.w]
                out.append((vol, (xi, yi, ti)))
    return out


def sift2d_descriptor(patch):
    """Upright fixed-scale SIFT of one patch: 4x4 cells x 8 bins = 128 dims.

    Gaussian-weighted magnitude votes (sigma = w/2 around the patch center),
    L2-normalized, clamped at 0.2 and renormalized. A gradient-free patch
    maps to the zero vector.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2:
        raise BadBlockShape(f"sift patch must be 2-D, got shape {patch.shape}")
    h, w = patch.shape
    if h % 4 or w % 4 or h < 4 or w < 4:
        raise BadBlockShape(f"sift patch dims must be divisible by 4, got {h}x{w}")
    hist = kernels.sift_hist(patch, sigma=w / 2.0)
    v = hist.ravel()
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return np.zeros(SIFT_DIM)
    v = v / norm
    np.minimum(v, 0.2, out=v)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return np.zeros(SIFT_DIM)
    return v / norm


def hog3d_descriptor(block):
    """2x2x2-cell oriented-gradient histogram of an (l=4, h, w) block: 64 dims.

    Spatial gradients per frame; frame pairs {0,1} and {2,3} form the two
    temporal cells. Each of the 8 cell histograms is L2-normalized on its
    own (zero-gradient cells stay zero) and concatenated in (t, y, x) order.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 3 or block.shape[0] != HOG_FRAMES:
        raise BadBlockShape(f"hog block must be (4, h, w), got shape {block.shape}")
    h, w = block.shape[1:]
    if h % 2 or w % 2:
        raise BadBlockShape(f"hog block dims must be even, got {h}x{w}")
    acc = np.zeros((2, 2, 2, 8))
    for f in range(HOG_FRAMES):
        acc[f // 2] += kernels.hog_frame_hist(block[f])
    flat_cells = acc.reshape(-1, 8)
    norms = np.linalg.norm(flat_cells, axis=1)
    safe = np.where(norms < 1e-12, 1.0, norms)
    flat_cells = flat_cells / safe[:, None]
    flat_cells[norms < 1e-12] = 0.0
    return flat_cells.ravel()


@dataclass
class PcaModel:
    """Orthonormal PCA basis with a fixed sign convention."""

    mean: np.ndarray
    basis: np.ndarray
    eigvals: np.ndarray
    retained_energy: float

    @property
    def dim_out(self):
        return self.basis.shape[1]

    def project(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.basis

    def reconstruct(self, Z):
        return np.asarray(Z, dtype=np.float64) @ self.basis.T + self.mean


def fit_pca(samples, n_components=None, energy=None):
    """PCA by eigendecomposition of the sample covariance.

    Exactly one of n_components / energy picks the output dimension; an
    energy fraction e keeps the smallest k whose eigenvalue mass reaches e.
    Basis vectors are ordered by descending eigenvalue and signed so their
    largest-magnitude entry is positive.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise TooFewSamples("PCA needs at least 2 samples")
    if (n_components is None) == (energy is None):
        raise ValueError("specify exactly one of n_components / energy")

    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals[::-1], 0.0, None)
    eigvecs = eigvecs[:, ::-1]

    total = eigvals.sum()
    if total <= 0.0:
        raise DegenerateData("zero-rank data: all eigenvalues vanish")

    if energy is not None:
        if not 0.0 < energy <= 1.0:
            raise ValueError(f"energy fraction must be in (0, 1], got {energy}")
        cum = np.cumsum(eigvals) / total
        k = int(np.searchsorted(cum, energy - 1e-12) + 1)
        k = min(k, len(eigvals))
    else:
        k = min(int(n_components), len(eigvals))
        if k < 1:
            raise ValueError("n_components must be >= 1")

    basis = eigvecs[:, :k].copy()
    signs = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(k)])
    signs[signs == 0] = 1.0
    basis *= signs
    retained = float(eigvals[:k].sum() / total)
    return PcaModel(mean=mean, basis=basis, eigvals=eigvals[:k].copy(),
                    retained_energy=retained)


def augment(appearance, grid_index, counts):
    """Append normalized grid coordinates (x/w*, y/h*, t/l*) to a descriptor."""
    gi = tuple(int(v) for v in grid_index)
    cts = tuple(int(v) for v in counts)
    if any(not 0 <= gi[a] < cts[a] for a in range(3)):
        raise IndexOutOfGrid(f"grid index {gi} outside counts {cts}")
    loc = tuple(gi[a] / cts[a] for a in range(3))
    return BlockFeature(appearance=np.asarray(appearance, dtype=np.float64),
                        loc=loc, grid_index=gi)


def augment_matrix(appearance, grid_indices, counts):
    """Vectorized augment: (B, d_a) descriptors -> (B, d_a + 3) feature rows."""
    A = np.asarray(appearance, dtype=np.float64)
    gi = np.asarray(grid_indices, dtype=np.int64)
    cts = np.asarray(counts, dtype=np.float64)
    if gi.min() < 0 or (gi >= cts[None, :]).any():
        raise IndexOutOfGrid("grid index outside counts")
    return np.hstack([A, gi / cts[None, :]])


def block_spec_for(desc, patch, stride_frac=0.5, stride_t=1):
    """BlockSpec for a descriptor kind: SIFT blocks are 1 frame, HOG blocks 4."""
    if desc not in ("sift", "hog"):
        raise ValueError(f"unknown descriptor kind {desc!r}")
    stride = max(1, int(round(patch * stride_frac)))
    l = 1 if desc == "sift" else HOG_FRAMES
    return BlockSpec(w=patch, h=patch, l=l, stride_xy=stride, stride_t=stride_t)


def extract_raw(seq, spec, desc):
    """Raw (un-reduced) descriptors of every block of a clip.

    Returns (D, grid_indices, counts): D is (B, 128) for SIFT or (B, 64)
    for HOG, rows in the (t, y, x) block order of sample_blocks.
    """
    counts = grid_counts(seq.frames.shape, spec)
    blocks = sample_blocks(seq, spec)
    if desc == "sift":
        descs = [sift2d_descriptor(vol[0]) for vol, _ in blocks]
    elif desc == "hog":
        descs = [hog3d_descriptor(vol) for vol, _ in blocks]
    else:
        raise ValueError(f"unknown descriptor kind {desc!r}")
    D = np.vstack(descs)
    gi = np.array([g for _, g in blocks], dtype=np.int64)
    return D, gi, counts
