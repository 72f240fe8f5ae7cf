"""FAST-MCD location/scatter for bivariate samples."""

import numpy as np
from scipy.stats import chi2

from . import kernels
from .errors import ArgumentError

P = 2
REWEIGHT_QUANTILE = 0.975


def support_size(n, alpha=0.5, p=P):
    """Subset size h; alpha = 0.5 gives the maximal-breakdown floor((n+p+1)/2)."""
    if not 0.5 <= alpha <= 1.0:
        raise ArgumentError(f"alpha must lie in [0.5, 1], got {alpha}")
    n2 = (n + p + 1) // 2
    return int(np.floor(2 * n2 - n + 2 * (n - n2) * alpha))


def consistency_factor(fraction, p=P):
    """Scale making the covariance of the central ``fraction`` of a Gaussian unbiased."""
    if fraction >= 1.0:
        return 1.0
    q = chi2.ppf(fraction, p)
    return fraction / chi2.cdf(q, p + 2)


def _mahalanobis2(x, mean, cov):
    diff = x - mean
    return np.einsum("ij,ij->i", diff, np.linalg.solve(cov, diff.T).T)


def draw_starts(n, n_starts, rng):
    return np.array([rng.choice(n, P + 1, replace=False) for _ in range(n_starts)],
                    dtype=np.int64)


def fast_mcd(x, alpha=0.5, n_starts=500, seed=0, max_steps=100):
    """Raw and reweighted MCD estimates.

    Returns ``(mean, cov, support)`` where ``cov`` is the consistency-corrected
    reweighted scatter (unregularized) and ``support`` flags the observations
    kept by the reweighting step.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    h = support_size(n, alpha)
    rng = np.random.default_rng(seed)
    starts = draw_starts(n, n_starts, rng)
    mean, cov, det, subset = kernels.mcd_search(x, h, starts, max_steps)
    cov = cov * consistency_factor(h / n)
    if not det > 0:
        # exact fit: h points on a line or a single location
        support = np.zeros(n, dtype=bool)
        support[subset] = True
        return mean, cov, support
    keep = _mahalanobis2(x, mean, cov) <= chi2.ppf(REWEIGHT_QUANTILE, P)
    xs = x[keep]
    mean = xs.mean(axis=0)
    diff = xs - mean
    cov = (diff.T @ diff) / len(xs) * consistency_factor(REWEIGHT_QUANTILE)
    return mean, cov, keep
