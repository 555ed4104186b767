"""Independent brute-force oracles used by the tests.

Everything here is deliberately written the slow, obvious way (explicit
window loops, per-pixel geometry) so a defect in the vectorized production
code cannot hide in a shared implementation.
"""

import math

import numpy as np


def gaussian_value(sigma_v, sigma_h, gain, dv, dh):
    return (gain / 255.0) * math.exp(-dh**2 / (2 * sigma_h**2)) \
        * math.exp(-dv**2 / (2 * sigma_v**2))


def point_in_sector(geom, r, c) -> bool:
    dr = r - geom.apex[0]
    dc = c - geom.apex[1]
    if dr < 0:
        return False
    if math.hypot(dr, dc) > geom.radius:
        return False
    return math.degrees(math.atan2(abs(dc), dr)) <= geom.half_angle_deg


def _gauss1d(n, sigma):
    d = np.arange(n) - (n - 1) / 2.0
    w = np.exp(-(d**2) / (2.0 * sigma**2))
    return w / w.sum()


def ssim_patch(pa, pb, kernel, c1, c2):
    mu_a = float((kernel * pa).sum())
    mu_b = float((kernel * pb).sum())
    var_a = float((kernel * pa * pa).sum()) - mu_a**2
    var_b = float((kernel * pb * pb).sum()) - mu_b**2
    cov = float((kernel * pa * pb).sum()) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) \
        / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def bruteforce_ssim2d(ref, test, window=11, sigma=1.5, k1=0.01, k2=0.03, level=255.0):
    a = ref.data.astype(np.float64) * level
    b = test.data.astype(np.float64) * level
    g = _gauss1d(window, sigma)
    kernel = np.outer(g, g)
    c1 = (k1 * level) ** 2
    c2 = (k2 * level) ** 2
    h, w, f = a.shape
    vals = []
    for fi in range(f):
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                pa = a[i:i + window, j:j + window, fi]
                pb = b[i:i + window, j:j + window, fi]
                ra = ref.data[i:i + window, j:j + window, fi]
                rb = test.data[i:i + window, j:j + window, fi]
                if not ra.any() and not rb.any():
                    continue
                vals.append(ssim_patch(pa, pb, kernel, c1, c2))
    return float(np.mean(vals))


def bruteforce_ssim3d(ref, test, window=11, sigma=1.5, k1=0.01, k2=0.03, level=255.0):
    a = ref.data.astype(np.float64) * level
    b = test.data.astype(np.float64) * level
    h, w, f = a.shape
    nf = min(window, f)
    g = _gauss1d(window, sigma)
    gf = _gauss1d(nf, sigma)
    kernel = g[:, None, None] * g[None, :, None] * gf[None, None, :]
    c1 = (k1 * level) ** 2
    c2 = (k2 * level) ** 2
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            for k in range(f - nf + 1):
                pa = a[i:i + window, j:j + window, k:k + nf]
                pb = b[i:i + window, j:j + window, k:k + nf]
                ra = ref.data[i:i + window, j:j + window, k:k + nf]
                rb = test.data[i:i + window, j:j + window, k:k + nf]
                if not ra.any() and not rb.any():
                    continue
                vals.append(ssim_patch(pa, pb, kernel, c1, c2))
    return float(np.mean(vals))


def bruteforce_mare(ref, test):
    total = 0.0
    h, w, f = ref.shape
    for i in range(h):
        for j in range(w):
            for k in range(f):
                total += abs(float(ref.data[i, j, k]) * 255.0
                             - float(test.data[i, j, k]) * 255.0)
    return total / (h * w * f)


def bruteforce_maxpool(x):
    n, c, h, w, f = x.shape
    out = np.zeros((n, c, h // 2, w // 2, f), dtype=x.dtype)
    idx = np.zeros((n, c, h // 2, w // 2, f), dtype=np.int64)
    for ni in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    for fi in range(f):
                        cand = [x[ni, ci, 2 * i + dh, 2 * j + dw, fi]
                                for dh in (0, 1) for dw in (0, 1)]
                        best = max(cand)
                        out[ni, ci, i, j, fi] = best
                        idx[ni, ci, i, j, fi] = cand.index(best)
    return out, idx


def bruteforce_conv3d_interior(x, w, n, co, h, wd, f):
    """One interior output value of the same-padded correlation."""
    s = 0.0
    _, ci_n, kh, kw, kf = w.shape
    for ci in range(ci_n):
        for a in range(kh):
            for b in range(kw):
                for c in range(kf):
                    s += float(x[n, ci, h + a - kh // 2, wd + b - kw // 2,
                                 f + c - kf // 2]) * float(w[co, ci, a, b, c])
    return s
