# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: descriptor voting and the SVM dual solver.

Drop-in twin of explet._pykernels; see that module for the shared
conventions (gradient stencil, orientation binning, solver order).
"""

import numpy as np

from libc.math cimport INFINITY, atan2, exp, floor, hypot

cdef double TWO_PI = 6.283185307179586476925286766559


def sift_hist(patch, double sigma, int n_cells=4, int n_bins=8):
    cdef double[:, ::1] p = np.ascontiguousarray(patch, dtype=np.float64)
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1]
    out = np.zeros((n_cells, n_cells, n_bins))
    cdef double[:, :, ::1] hist = out
    cdef Py_ssize_t x, y, xm, xp, ym, yp, cell_h = h // n_cells, cell_w = w // n_cells
    cdef int b0
    cdef double gx, gy, mag, ang, t, frac, wgt, dx, dy
    cdef double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1)
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef double bins_per_rad = n_bins / TWO_PI

    for y in range(h):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < h - 1 else h - 1
        dy = y - cy
        for x in range(w):
            xm = x - 1 if x > 0 else 0
            xp = x + 1 if x < w - 1 else w - 1
            gx = 0.5 * (p[y, xp] - p[y, xm])
            gy = 0.5 * (p[yp, x] - p[ym, x])
            mag = hypot(gx, gy)
            ang = atan2(gy, gx)
            if ang < 0.0:
                ang += TWO_PI
            t = ang * bins_per_rad - 0.5
            frac = t - floor(t)
            b0 = <int>floor(t)
            if b0 < 0:
                b0 += n_bins
            dx = x - cx
            wgt = mag * exp(-(dx * dx + dy * dy) * inv2s2)
            hist[y // cell_h, x // cell_w, b0] += wgt * (1.0 - frac)
            hist[y // cell_h, x // cell_w, (b0 + 1) % n_bins] += wgt * frac
    return out


def hog_frame_hist(frame, int n_cells=2, int n_bins=8):
    cdef double[:, ::1] p = np.ascontiguousarray(frame, dtype=np.float64)
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1]
    out = np.zeros((n_cells, n_cells, n_bins))
    cdef double[:, :, ::1] hist = out
    cdef Py_ssize_t x, y, xm, xp, ym, yp, cell_h = h // n_cells, cell_w = w // n_cells
    cdef int b0
    cdef double gx, gy, mag, ang, t, frac
    cdef double bins_per_rad = n_bins / TWO_PI

    for y in range(h):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < h - 1 else h - 1
        for x in range(w):
            xm = x - 1 if x > 0 else 0
            xp = x + 1 if x < w - 1 else w - 1
            gx = 0.5 * (p[y, xp] - p[y, xm])
            gy = 0.5 * (p[yp, x] - p[ym, x])
            mag = hypot(gx, gy)
            ang = atan2(gy, gx)
            if ang < 0.0:
                ang += TWO_PI
            t = ang * bins_per_rad - 0.5
            frac = t - floor(t)
            b0 = <int>floor(t)
            if b0 < 0:
                b0 += n_bins
            hist[y // cell_h, x // cell_w, b0] += mag * (1.0 - frac)
            hist[y // cell_h, x // cell_w, (b0 + 1) % n_bins] += mag * frac
    return out


def svm_dual_cd(X, y, double C, int max_epochs, double gap_rel_tol):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], d = Xv.shape[1], i, j
    cdef double dd = 1.0 / (2.0 * C)

    alpha_arr = np.zeros(n)
    w_arr = np.zeros(d)
    qii_arr = np.empty(n)
    cdef double[::1] alpha = alpha_arr, w = w_arr, qii = qii_arr
    cdef double s, g, new, delta, dyi, dual, primal, m
    cdef double gap = INFINITY
    cdef int ep

    for i in range(n):
        s = 0.0
        for j in range(d):
            s += Xv[i, j] * Xv[i, j]
        qii[i] = s + dd

    dual_hist = []
    for ep in range(max_epochs):
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += w[j] * Xv[i, j]
            g = yv[i] * s - 1.0 + dd * alpha[i]
            if alpha[i] == 0.0 and g >= 0.0:
                continue
            new = alpha[i] - g / qii[i]
            if new < 0.0:
                new = 0.0
            delta = new - alpha[i]
            if delta != 0.0:
                alpha[i] = new
                dyi = delta * yv[i]
                for j in range(d):
                    w[j] += dyi * Xv[i, j]
        dual = 0.0
        for i in range(n):
            dual += alpha[i] - 0.5 * dd * alpha[i] * alpha[i]
        s = 0.0
        for j in range(d):
            s += w[j] * w[j]
        dual -= 0.5 * s
        primal = 0.5 * s
        for i in range(n):
            m = 0.0
            for j in range(d):
                m += w[j] * Xv[i, j]
            m = 1.0 - yv[i] * m
            if m > 0.0:
                primal += C * m * m
        dual_hist.append(dual)
        gap = primal - dual
        if gap <= gap_rel_tol * max(primal, 1e-12):
            break
    return w_arr, alpha_arr, np.asarray(dual_hist), gap
