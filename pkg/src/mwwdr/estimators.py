"""The four point estimators of delta = P(treated outcome <= control outcome).

All pair sums are vectorized over n x n matrices; entries are indexed by
ordered pairs (i, j) and unordered-pair sums take the off-diagonal upper
triangle (equivalently half the off-diagonal total of a symmetric matrix).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EstimabilityError, ValidationError
from .gpi import g_matrix
from .propensity import predict_pi_dataset


def kernel(y_a, y_b, ties=False):
    """Pair kernel: I(y_a <= y_b), or I(<) + 0.5 I(=) when ties are scored."""
    if not np.isfinite(y_a) or not np.isfinite(y_b):
        raise ValidationError("kernel arguments must be finite")
    if ties:
        return float(y_a < y_b) + 0.5 * float(y_a == y_b)
    return float(y_a <= y_b)


def kernel_matrix(y, ties=False):
    """K[i, j] = kernel(y_i, y_j) for all ordered pairs."""
    y = np.asarray(y, dtype=float)
    if ties:
        return (y[:, None] < y[None, :]) + 0.5 * (y[:, None] == y[None, :])
    return (y[:, None] <= y[None, :]).astype(float)


@dataclass
class EstimateResult:
    """Point estimate of delta with bookkeeping.

    se is None when inference is deferred to the joint UGEE fit.
    """

    estimator_kind: str
    delta_hat: float
    se: Optional[float]
    n: int
    n1: int
    n0: int
    notes: dict = field(default_factory=dict)


def _pair_count(n):
    return n * (n - 1) // 2


def _offdiag_sum(m):
    return float(m.sum() - np.trace(m))


def _pair_mean_symmetric(m):
    """Mean over unordered pairs of a symmetric pair matrix."""
    n = m.shape[0]
    return _offdiag_sum(m) / (n * (n - 1))


def resolve_propensities(dataset, propensity):
    """Accept a fitted PropensityModel, an array of known propensities, or a
    single known constant; return (pi vector, clipped-count)."""
    if hasattr(propensity, "eta"):
        return predict_pi_dataset(propensity, dataset)
    pi = np.asarray(propensity, dtype=float)
    if pi.ndim == 0:
        pi = np.full(dataset.n, float(pi))
    if pi.shape != (dataset.n,):
        raise ValidationError("propensity vector length does not match the data")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise ValidationError("propensities must lie strictly inside (0, 1)")
    return pi, 0


def f_ipw_half(z, K, PT):
    """Ordered-pair matrix of the weighted-indicator term z_i(1-z_j)/[pi_i(1-pi_j)] * K_ij."""
    Z1 = np.outer(z, 1.0 - z)
    return Z1 / PT * K


def f_msi_half(z, K, G):
    Z1 = np.outer(z, 1.0 - z)
    return Z1 * K + (1.0 - Z1) * G


def f_dr_half(z, K, G, PT):
    R = np.outer(z, 1.0 - z) / PT
    return R * K + (1.0 - R) * G


def symmetrize_pair(fh):
    """Pair response: the average of the two orientations of an ordered matrix."""
    return 0.5 * (fh + fh.T)


def mww_estimate(dataset) -> EstimateResult:
    """Rank-sum estimator: average kernel over the n1*n0 observed pairs.

    The standard error comes from the two-sample U-statistic projection
    variance (components averaged within each arm).
    """
    dataset.require_both_arms()
    t = np.flatnonzero(dataset.z == 1)
    c = np.flatnonzero(dataset.z == 0)
    K = kernel_matrix(dataset.y, dataset.ties)[np.ix_(t, c)]
    delta = float(K.mean())
    n1, n0 = len(t), len(c)
    notes = {"ties": dataset.ties}
    se = None
    if n1 >= 2 and n0 >= 2:
        s1 = K.mean(axis=1).var(ddof=1)
        s0 = K.mean(axis=0).var(ddof=1)
        se = float(np.sqrt(s1 / n1 + s0 / n0))
    else:
        notes["se_unavailable"] = "need at least two subjects per arm"
    return EstimateResult("MWW", delta, se, dataset.n, n1, n0, notes)


def ipw_estimate(dataset, propensity, hajek=False) -> EstimateResult:
    """Inverse-probability-weighted estimator over all subject pairs.

    hajek=True divides by the realized sum of weights instead of the pair
    count; with a known constant propensity that reproduces the rank-sum
    estimator exactly.
    """
    dataset.require_both_arms()
    pi, clipped = resolve_propensities(dataset, propensity)
    K = kernel_matrix(dataset.y, dataset.ties)
    PT = np.outer(pi, 1.0 - pi)
    fh = f_ipw_half(dataset.z, K, PT)
    np.fill_diagonal(fh, 0.0)
    total = 0.5 * float(fh.sum())
    if hajek:
        wh = np.outer(dataset.z, 1.0 - dataset.z) / PT
        np.fill_diagonal(wh, 0.0)
        denom = 0.5 * float(wh.sum())
        if denom == 0.0:
            raise EstimabilityError("no discordant pairs carry weight")
        delta = total / denom
    else:
        delta = total / _pair_count(dataset.n)
    notes = {"ties": dataset.ties, "hajek": hajek, "clipped_propensities": clipped}
    if not 0.0 <= delta <= 1.0:
        notes["range_exit"] = True
    return EstimateResult("IPW", float(delta), None, dataset.n,
                          dataset.n1, dataset.n0, notes)


def msi_estimate(dataset, gpi) -> EstimateResult:
    """Mean-score-imputed estimator: observed discordant indicators kept,
    unobserved indicators replaced by their modeled means.

    Well-defined even with no discordant pairs (pure imputation), so no
    both-arms requirement.
    """
    K = kernel_matrix(dataset.y, dataset.ties)
    G = g_matrix(gpi, dataset.w)
    f = symmetrize_pair(f_msi_half(dataset.z, K, G))
    delta = _pair_mean_symmetric(f)
    return EstimateResult("MSI", float(delta), None, dataset.n,
                          dataset.n1, dataset.n0, {"ties": dataset.ties})


def dr_estimate(dataset, propensity, gpi) -> EstimateResult:
    """Doubly robust estimator: the plain average over all pairs of the
    augmented weighted response."""
    dataset.require_both_arms()
    pi, clipped = resolve_propensities(dataset, propensity)
    f = dr_pair_matrix(dataset, pi, gpi)
    delta = _pair_mean_symmetric(f)
    notes = {"ties": dataset.ties, "clipped_propensities": clipped}
    if not 0.0 <= delta <= 1.0:
        notes["range_exit"] = True
    return EstimateResult("DR", float(delta), None, dataset.n,
                          dataset.n1, dataset.n0, notes)


def dr_pair_matrix(dataset, pi, gpi):
    """Symmetric matrix of per-pair doubly robust responses, shared with the
    joint UGEE machinery."""
    K = kernel_matrix(dataset.y, dataset.ties)
    G = g_matrix(gpi, dataset.w)
    PT = np.outer(pi, 1.0 - pi)
    return symmetrize_pair(f_dr_half(dataset.z, K, G, PT))
