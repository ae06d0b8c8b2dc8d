"""Numpy reference implementations of the hot kernels.

These are the fallback selected at import when the compiled extension is
missing (or when EXPLET_PURE_PYTHON is set). The compiled module
``explet._native`` implements the same three entry points with identical
semantics; parity between the two is covered by tests.

Gradient convention shared by both backends: central differences with
replicate padding, i.e. g = 0.5 * (next - prev) with clamped neighbor
indices, so border gradients are half forward/backward differences.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def spatial_gradients(img):
    """Per-pixel (gy, gx) of a 2-D image, central differences, edge-replicated."""
    img = np.asarray(img, dtype=np.float64)
    p = np.pad(img, 1, mode="edge")
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    return gy, gx


def _orientation_votes(gy, gx, n_bins):
    """Split each pixel's orientation linearly across the two nearest bin centers.

    Bins tile [0, 2pi) with boundaries at k*(2pi/n) and centers at
    (k+1/2)*(2pi/n); an angle on a boundary votes half into each adjacent bin.
    """
    ang = np.arctan2(gy, gx)
    ang = np.where(ang < 0, ang + TWO_PI, ang)
    t = ang * (n_bins / TWO_PI) - 0.5
    b0 = np.floor(t)
    frac = t - b0
    b0 = b0.astype(np.int64) % n_bins
    b1 = (b0 + 1) % n_bins
    return b0, b1, frac


def sift_hist(patch, sigma, n_cells=4, n_bins=8):
    """Raw (n_cells, n_cells, n_bins) gradient histogram of one 2-D patch.

    Pixels vote with Gaussian-weighted gradient magnitude (sigma around the
    patch center) into their containing spatial cell, orientation split
    linearly between the two nearest bin centers. Normalization is the
    caller's job.
    """
    patch = np.asarray(patch, dtype=np.float64)
    h, w = patch.shape
    gy, gx = spatial_gradients(patch)
    mag = np.hypot(gx, gy)

    ys, xs = np.mgrid[0:h, 0:w]
    cy = 0.5 * (h - 1)
    cx = 0.5 * (w - 1)
    weight = mag * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))

    cell_y = ys // (h // n_cells)
    cell_x = xs // (w // n_cells)
    b0, b1, frac = _orientation_votes(gy, gx, n_bins)

    hist = np.zeros((n_cells, n_cells, n_bins))
    flat_cell = (cell_y * n_cells + cell_x).ravel()
    np.add.at(hist.reshape(-1, n_bins), (flat_cell, b0.ravel()),
              (weight * (1.0 - frac)).ravel())
    np.add.at(hist.reshape(-1, n_bins), (flat_cell, b1.ravel()),
              (weight * frac).ravel())
    return hist


def hog_frame_hist(frame, n_cells=2, n_bins=8):
    """Raw (n_cells, n_cells, n_bins) histogram of one frame, magnitude votes."""
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    gy, gx = spatial_gradients(frame)
    mag = np.hypot(gx, gy)

    ys, xs = np.mgrid[0:h, 0:w]
    cell_y = ys // (h // n_cells)
    cell_x = xs // (w // n_cells)
    b0, b1, frac = _orientation_votes(gy, gx, n_bins)

    hist = np.zeros((n_cells, n_cells, n_bins))
    flat_cell = (cell_y * n_cells + cell_x).ravel()
    np.add.at(hist.reshape(-1, n_bins), (flat_cell, b0.ravel()),
              (mag * (1.0 - frac)).ravel())
    np.add.at(hist.reshape(-1, n_bins), (flat_cell, b1.ravel()),
              (mag * frac).ravel())
    return hist


def svm_dual_cd(X, y, C, max_epochs, gap_rel_tol):
    """Dual coordinate descent for the L2-regularized squared-hinge SVM.

    Cyclic coordinate order, no shuffling, so the solve is deterministic.
    Stops when the duality gap drops below gap_rel_tol * primal.

    Returns (w, alpha, dual_history, gap) where dual_history holds the dual
    objective after each epoch.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    dd = 1.0 / (2.0 * C)
    qii = np.einsum("ij,ij->i", X, X) + dd

    alpha = np.zeros(n)
    w = np.zeros(d)
    dual_hist = []
    gap = np.inf
    for _ in range(max_epochs):
        for i in range(n):
            g = y[i] * np.dot(w, X[i]) - 1.0 + dd * alpha[i]
            if alpha[i] == 0.0 and g >= 0.0:
                continue
            new = alpha[i] - g / qii[i]
            if new < 0.0:
                new = 0.0
            delta = new - alpha[i]
            if delta != 0.0:
                alpha[i] = new
                w += (delta * y[i]) * X[i]
        dual = alpha.sum() - 0.5 * np.dot(w, w) - 0.5 * dd * np.dot(alpha, alpha)
        dual_hist.append(dual)
        margins = 1.0 - y * (X @ w)
        primal = 0.5 * np.dot(w, w) + C * np.sum(np.square(np.clip(margins, 0.0, None)))
        gap = primal - dual
        if gap <= gap_rel_tol * max(primal, 1e-12):
            break
    return w, alpha, np.asarray(dual_hist), gap
