"""Compiled inner loops for batched patch extraction and joint histograms.

These mirror ``imaging.extract_patches`` and the histogram step of
``similarity.evaluate_batch`` element for element; the numpy versions remain
the reference and are used when numba is unavailable.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

AVAILABLE = njit is not None

if AVAILABLE:

    @njit(cache=True, nogil=True)
    def warp_sample(hs, grid, img):
        m = hs.shape[0]
        n = grid.shape[0]
        h, w = img.shape
        values = np.zeros((m, n))
        valid = np.zeros((m, n), dtype=np.bool_)
        for k in range(m):
            a = hs[k]
            for i in range(n):
                u = grid[i, 0]
                v = grid[i, 1]
                d = a[2, 0] * u + a[2, 1] * v + a[2, 2]
                if abs(d) < 1e-12:
                    continue
                x = (a[0, 0] * u + a[0, 1] * v + a[0, 2]) / d
                y = (a[1, 0] * u + a[1, 1] * v + a[1, 2]) / d
                if not (x >= 0.0 and x <= w - 1 and y >= 0.0 and y <= h - 1):
                    continue
                x0 = min(int(np.floor(x)), w - 2)
                y0 = min(int(np.floor(y)), h - 2)
                fx = x - x0
                fy = y - y0
                p00 = img[y0, x0]
                p01 = img[y0, x0 + 1]
                p10 = img[y0 + 1, x0]
                p11 = img[y0 + 1, x0 + 1]
                top = p00 + fx * (p01 - p00)
                bot = p10 + fx * (p11 - p10)
                values[k, i] = top + fy * (bot - top)
                valid[k, i] = True
        return values, valid

    @njit(cache=True, nogil=True)
    def joint_counts(values, valid, template_bins, bins):
        m, n = values.shape
        counts = np.zeros((m, bins, bins))
        for k in range(m):
            for i in range(n):
                if valid[k, i]:
                    b = int(values[k, i] * bins)
                    if b > bins - 1:
                        b = bins - 1
                    elif b < 0:
                        b = 0
                    counts[k, b, template_bins[i]] += 1.0
        return counts
