"""Special functions used throughout: inverse links and the normal CDF.

All probability outputs are clamped to [PROB_EPS, 1 - PROB_EPS] so that
downstream logs and reciprocals stay finite. Propensity clipping is a
separate, coarser bound applied in the propensity module.
"""

import numpy as np
from scipy import special as _sp

from .errors import ValidationError

# Floor/ceiling applied to every probability returned from this module.
PROB_EPS = 1e-12


def _check_finite(x, name):
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be finite")


def expit(x):
    """Inverse logit 1 / (1 + exp(-x)), clamped to [1e-12, 1 - 1e-12].

    Accepts scalars or arrays; returns the matching shape.
    """
    x = np.asarray(x, dtype=float)
    _check_finite(x, "expit argument")
    out = np.clip(_sp.expit(x), PROB_EPS, 1.0 - PROB_EPS)
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x):
    """Standard normal CDF via erf, absolute error below 1e-12."""
    x = np.asarray(x, dtype=float)
    _check_finite(x, "std_normal_cdf argument")
    out = np.clip(_sp.ndtr(x), PROB_EPS, 1.0 - PROB_EPS)
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return float(out) if out.ndim == 0 else out


def logit(p):
    """Inverse of expit on (0, 1)."""
    p = np.asarray(p, dtype=float)
    _check_finite(p, "logit argument")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValidationError("logit argument must lie strictly inside (0, 1)")
    out = np.log(p / (1.0 - p))
    return float(out) if out.ndim == 0 else out
