"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation; the compiled module
is preferred when importable.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def local_wiener(padded, window, noise_var):
    """Adaptive Wiener filter on an already mirror-padded image.

    Window statistics are taken relative to the centre pixel so that a flat
    neighbourhood yields exactly zero variance and an unchanged output.
    """
    r = window // 2
    centre = padded[r:padded.shape[0] - r, r:padded.shape[1] - r]
    win = sliding_window_view(padded, (window, window))
    delta = win - centre[..., None, None]
    mean_delta = delta.mean(axis=(-2, -1))
    var = ((delta - mean_delta[..., None, None]) ** 2).mean(axis=(-2, -1))
    mu = centre + mean_delta
    gain = np.maximum(0.0, var - noise_var) / np.maximum(var, 1e-12)
    return mu + gain * (centre - mu)


def phase_fold(residual, period):
    """Mean of ``residual`` over each (row mod P, col mod P) phase bin."""
    h, w = residual.shape
    rows = np.arange(h) % period
    cols = np.arange(w) % period
    idx = (rows[:, None] * period + cols[None, :]).ravel()
    sums = np.bincount(idx, weights=residual.ravel(), minlength=period * period)
    counts = np.bincount(idx, minlength=period * period)
    return (sums / counts).reshape(period, period)


def _mean_cov(x):
    m = x.mean(axis=0)
    c = x - m
    return m, (c.T @ c) / len(x)


def _det2(s):
    return s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]


def _mahalanobis2(x, m, s):
    ridge = 1e-10 * 0.5 * (s[0, 0] + s[1, 1]) + 1e-300
    a, b, c = s[0, 0] + ridge, s[0, 1], s[1, 1] + ridge
    det = a * c - b * b
    dx = x[:, 0] - m[0]
    dy = x[:, 1] - m[1]
    return (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det


def _h_smallest(d2, h):
    tau = np.partition(d2, h - 1)[h - 1]
    below = np.flatnonzero(d2 < tau)
    ties = np.flatnonzero(d2 == tau)
    return np.concatenate([below, ties[:h - len(below)]])


def mcd_search(x, h, starts, max_steps=100):
    """Run C-steps from every start subset; keep the lowest determinant.

    ``starts`` is an (n_starts, 3) integer array of initial subsets.
    Returns (mean, cov, det, support_indices).
    """
    best = None
    for start in starts:
        m, s = _mean_cov(x[start])
        det = np.inf
        idx = None
        for _ in range(max_steps):
            new_idx = _h_smallest(_mahalanobis2(x, m, s), h)
            m_new, s_new = _mean_cov(x[new_idx])
            det_new = _det2(s_new)
            if det_new >= det:
                break
            m, s, det, idx = m_new, s_new, det_new, new_idx
        if best is None or det < best[2]:
            best = (m, s, det, idx)
    m, s, det, idx = best
    return m, s, det, np.sort(idx)
