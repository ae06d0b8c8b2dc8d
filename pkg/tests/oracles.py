"""Independent oracle implementations used by the test suite.

Everything here is deliberately written the slow, literal way (scalar
loops, textbook formulas, library drivers different from the production
path) so tests compare two genuinely different routes to the same answer.
"""

import math

import numpy as np
import scipy.linalg


def gradients_loops(img):
    """Central differences with replicate padding, scalar loops."""
    h, w = img.shape
    gy = np.zeros((h, w))
    gx = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            xm, xp = max(x - 1, 0), min(x + 1, w - 1)
            ym, yp = max(y - 1, 0), min(y + 1, h - 1)
            gx[y, x] = 0.5 * (img[y, xp] - img[y, xm])
            gy[y, x] = 0.5 * (img[yp, x] - img[ym, x])
    return gy, gx


def orientation_hist_loops(img, n_bins=8, weights=None):
    """Per-pixel linear-interpolated orientation histogram of a whole image.

    weights defaults to gradient magnitude (the unweighted-by-Gaussian form
    used to check where descriptor mass should concentrate).
    """
    gy, gx = gradients_loops(np.asarray(img, dtype=np.float64))
    h, w = img.shape
    hist = np.zeros(n_bins)
    for y in range(h):
        for x in range(w):
            mag = math.hypot(gx[y, x], gy[y, x])
            ang = math.atan2(gy[y, x], gx[y, x])
            if ang < 0:
                ang += 2 * math.pi
            t = ang * n_bins / (2 * math.pi) - 0.5
            b0 = math.floor(t)
            frac = t - b0
            b0 = int(b0) % n_bins
            wgt = mag if weights is None else weights[y, x]
            hist[b0] += wgt * (1 - frac)
            hist[(b0 + 1) % n_bins] += wgt * frac
    return hist


def sift_cell_hist_loops(patch, sigma, n_cells=4, n_bins=8):
    """Scalar-loop twin of the SIFT voting kernel (pre-normalization)."""
    patch = np.asarray(patch, dtype=np.float64)
    h, w = patch.shape
    gy, gx = gradients_loops(patch)
    cy, cx = 0.5 * (h - 1), 0.5 * (w - 1)
    hist = np.zeros((n_cells, n_cells, n_bins))
    for y in range(h):
        for x in range(w):
            mag = math.hypot(gx[y, x], gy[y, x])
            ang = math.atan2(gy[y, x], gx[y, x])
            if ang < 0:
                ang += 2 * math.pi
            t = ang * n_bins / (2 * math.pi) - 0.5
            b0 = math.floor(t)
            frac = t - b0
            b0 = int(b0) % n_bins
            wgt = mag * math.exp(-((x - cx) ** 2 + (y - cy) ** 2)
                                 / (2 * sigma * sigma))
            hist[y // (h // n_cells), x // (w // n_cells), b0] += wgt * (1 - frac)
            hist[y // (h // n_cells), x // (w // n_cells),
                 (b0 + 1) % n_bins] += wgt * frac
    return hist


def enumerate_offsets(full, size, stride):
    """All valid block offsets along one axis, by brute enumeration."""
    return [o for o in range(0, full + 1) if o % stride == 0 and o + size <= full]


def pca_via_svd(X):
    """PCA spectrum through an SVD route (vs the production eigh-of-covariance)."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    s = np.linalg.svd(Xc, compute_uv=False)
    eig = np.zeros(X.shape[1])
    k = min(len(s), X.shape[1])
    eig[:k] = s[:k] ** 2 / (X.shape[0] - 1)
    return eig


def density_product_of_univariates(f, mu, sigma, weight):
    """Weighted isotropic Gaussian density as a product of 1-D normal pdfs."""
    p = weight
    for j in range(len(f)):
        p *= math.exp(-0.5 * ((f[j] - mu[j]) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    return p


def two_pass_covariance(M):
    """Textbook two-pass unbiased covariance, scalar accumulation."""
    M = np.asarray(M, dtype=np.float64)
    n, d = M.shape
    mean = np.zeros(d)
    for row in M:
        mean += row
    mean /= n
    C = np.zeros((d, d))
    for row in M:
        diff = row - mean
        C += np.outer(diff, diff)
    return C / (n - 1)


def cholesky_whitening_geig(A, B):
    """Generalized symmetric eigenproblem via explicit Cholesky whitening.

    Returns (eigvals, eigvecs) in descending order with v^T B v = 1, the
    independent route checked against the production LAPACK driver.
    """
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    R = np.linalg.cholesky(B)
    Y = scipy.linalg.solve_triangular(R, A, lower=True)
    M = scipy.linalg.solve_triangular(R, Y.T, lower=True).T
    M = 0.5 * (M + M.T)
    w, U = np.linalg.eigh(M)
    V = scipy.linalg.solve_triangular(R.T, U, lower=False)
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def graph_edges_bruteforce(labels, K):
    """All (m, n, same_label) pairs by the literal double loop over nodes."""
    N = len(labels)
    ww = np.zeros((N * K, N * K))
    wb = np.zeros((N * K, N * K))
    for i in range(N):
        for p in range(K):
            m = i * K + p
            for j in range(N):
                for q in range(K):
                    n = j * K + q
                    if m == n or p != q:
                        continue
                    if labels[i] == labels[j]:
                        ww[m, n] = 1
                    else:
                        wb[m, n] = 1
    return ww, wb


def laplacian_quadratic_form(W, x):
    """Sum over unordered edges of (x_m - x_n)^2."""
    W = np.asarray(W)
    total = 0.0
    n = W.shape[0]
    for m in range(n):
        for q in range(m + 1, n):
            if W[m, q]:
                total += (x[m] - x[q]) ** 2
    return total


def fisher_vector_naive(F, model):
    """Literal per-feature accumulation of the FV statistics (no GEMM).

    Mirrors: gamma from weighted densities, then first/second order blocks
    per component, laid out [phi1_k, phi2_k] for k = 0..K-1, followed by
    signed square root and L2 normalization.
    """
    F = np.asarray(F, dtype=np.float64)
    B, d = F.shape
    K = model.K
    S = (F - model.std_mean) / model.std_scale
    out = np.zeros(2 * d * K)
    logs = np.zeros(K)
    for b in range(B):
        for k in range(K):
            sig = model.sigmas[k] if model.is_isotropic else None
            quad = 0.0
            norm = 0.0
            for j in range(d):
                s = sig if sig is not None else model.sigmas[k, j]
                quad += ((S[b, j] - model.means[k, j]) / s) ** 2
                norm += math.log(2 * math.pi * s * s)
            logs[k] = math.log(model.weights[k]) - 0.5 * (norm + quad)
        m = logs.max()
        gamma = np.exp(logs - m)
        gamma /= gamma.sum()
        for k in range(K):
            for j in range(d):
                s = model.sigmas[k] if model.is_isotropic else model.sigmas[k, j]
                u = (S[b, j] - model.means[k, j]) / s
                out[2 * d * k + j] += gamma[k] * u
                out[2 * d * k + d + j] += gamma[k] * (u * u - 1.0)
    for k in range(K):
        out[2 * d * k: 2 * d * k + d] /= B * math.sqrt(model.weights[k])
        out[2 * d * k + d: 2 * d * (k + 1)] /= B * math.sqrt(2 * model.weights[k])
    out = np.sign(out) * np.sqrt(np.abs(out))
    n = np.linalg.norm(out)
    return out / n if n > 1e-12 else out * 0.0


def svm_primal_gd(X, y, C, iters=200_000, lr=None):
    """Gradient descent on the smooth squared-hinge primal.

    P(w) = 0.5 ||w||^2 + C sum max(0, 1 - y w.x)^2 is differentiable; a
    small fixed step converges to the optimum on the tiny instances the
    tests use. Returns (w, P(w)).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if lr is None:
        lipschitz = 1.0 + 2.0 * C * np.linalg.norm(X, 2) ** 2
        lr = 1.0 / lipschitz
    w = np.zeros(d)
    for _ in range(iters):
        margins = 1.0 - y * (X @ w)
        active = margins > 0
        grad = w - 2.0 * C * ((y * margins * active) @ X)
        w -= lr * grad
    margins = np.clip(1.0 - y * (X @ w), 0.0, None)
    return w, 0.5 * w @ w + C * np.sum(margins ** 2)


def centroid_classifier_accuracy(train_frames, train_labels, test_frames, test_labels):
    """Mean-frame nearest-centroid classifier: the separability floor."""
    classes = sorted(set(train_labels))
    centroids = {}
    for c in classes:
        stack = [f.mean(axis=0).ravel() for f, l in zip(train_frames, train_labels) if l == c]
        centroids[c] = np.mean(stack, axis=0)
    correct = 0
    for f, l in zip(test_frames, test_labels):
        v = f.mean(axis=0).ravel()
        pred = min(classes, key=lambda c: np.linalg.norm(v - centroids[c]))
        correct += int(pred == l)
    return 100.0 * correct / len(test_labels)
