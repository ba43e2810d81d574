"""Pairwise outcome model for the indicator I(y_first_treated <= y_second_control).

The model regresses that indicator on both subjects' covariates through a
probit (default) or logit link: g = link_inv(g0 + g11'w_first + g10'w_second).
Fitting uses every observed discordant (treated, control) pair with
Bernoulli working variance g(1 - g).
"""

from dataclasses import dataclass

import numpy as np

from .errors import (ConvergenceError, EstimabilityError, SeparationError,
                     ValidationError)
from .special import PROB_EPS, expit, logit, std_normal_cdf, std_normal_pdf

LINKS = ("probit", "logit")
SCORE_TOL = 1e-8
MAX_ITER = 100
SEPARATION_BOUND = 30.0


def link_inverse(link, a):
    if link == "probit":
        return std_normal_cdf(a)
    return expit(a)


def link_derivative(link, a):
    """d link_inv / d a, as a function of the linear predictor."""
    if link == "probit":
        return std_normal_pdf(a)
    p = expit(a)
    return p * (1.0 - p)


def link_initial(link, mean):
    mean = min(max(mean, 1e-6), 1.0 - 1e-6)
    if link == "probit":
        # crude inverse normal CDF via bisection; only used as a start value
        lo, hi = -10.0, 10.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if std_normal_cdf(mid) < mean:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    return logit(mean)


@dataclass(frozen=True)
class GpiModel:
    """Fitted pairwise-indicator model coefficients.

    gamma stacks (g0, g11, g10); for a constant-only model it is just (g0,).
    """

    gamma: np.ndarray
    link: str
    constant_only: bool
    p: int
    converged: bool
    iterations: int
    score_norm: float

    @property
    def gamma0(self):
        return float(self.gamma[0])

    @property
    def gamma11(self):
        return self.gamma[1:1 + self.p]

    @property
    def gamma10(self):
        return self.gamma[1 + self.p:]


def g_value(model, w_first, w_second):
    """Modeled P(first's treated outcome <= second's control outcome).

    The complement orientation is obtained by swapping the arguments.
    """
    w_first = np.atleast_1d(np.asarray(w_first, dtype=float))
    w_second = np.atleast_1d(np.asarray(w_second, dtype=float))
    if model.constant_only:
        a = model.gamma0
    else:
        if len(w_first) != model.p or len(w_second) != model.p:
            raise ValidationError("covariate dimension does not match the model")
        a = model.gamma0 + model.gamma11 @ w_first + model.gamma10 @ w_second
    return float(np.clip(link_inverse(model.link, a), PROB_EPS, 1.0 - PROB_EPS))


def linear_predictor_matrix(model, w):
    """Matrix A with A[i, j] = linear predictor for ordered pair (i, j)."""
    n = w.shape[0]
    if model.constant_only:
        return np.full((n, n), model.gamma0)
    fi = w @ model.gamma11
    se = w @ model.gamma10
    return model.gamma0 + fi[:, None] + se[None, :]


def g_matrix(model, w):
    """G[i, j] = g(w_i, w_j) for every ordered pair, clamped away from 0/1."""
    a = linear_predictor_matrix(model, w)
    return np.clip(link_inverse(model.link, a), PROB_EPS, 1.0 - PROB_EPS)


def _pair_design(dataset, constant_only):
    """Rows (1, w_treated, w_control) over all ordered discordant pairs."""
    t = np.flatnonzero(dataset.z == 1)
    c = np.flatnonzero(dataset.z == 0)
    m = len(t) * len(c)
    if constant_only or dataset.p == 0:
        X = np.ones((m, 1))
    else:
        wt = np.repeat(dataset.w[t], len(c), axis=0)
        wc = np.tile(dataset.w[c], (len(t), 1))
        X = np.column_stack([np.ones(m), wt, wc])
    return t, c, X


def observed_indicators(dataset, t, c):
    from .estimators import kernel_matrix

    K = kernel_matrix(dataset.y, dataset.ties)
    return K[np.ix_(t, c)].ravel()


def fit_gpi(dataset, constant_only=False, link="probit"):
    """Newton solve of the discordant-pair estimating equation.

    Score: sum over observed (treated, control) pairs of
    d * v^-1 * (indicator - g), with d the gradient of g in gamma and
    v = g(1 - g).
    """
    if link not in LINKS:
        raise ValidationError(f"link must be one of {LINKS}")
    dataset.require_both_arms()
    constant_only = constant_only or dataset.p == 0
    t, c, X = _pair_design(dataset, constant_only)
    ind = observed_indicators(dataset, t, c)
    m = len(ind)
    if m == 0:
        raise EstimabilityError("no discordant pairs to fit the outcome model on")
    mean_ind = float(ind.mean())
    if mean_ind in (0.0, 1.0):
        raise SeparationError(
            f"all observed pair indicators equal {int(mean_ind)}; "
            "the outcome model intercept diverges")

    gamma = np.zeros(X.shape[1])
    gamma[0] = link_initial(link, mean_ind)
    score_norm = np.inf
    tol = max(SCORE_TOL, m * 1e-13)
    for it in range(1, MAX_ITER + 1):
        a = X @ gamma
        g = np.clip(link_inverse(link, a), PROB_EPS, 1.0 - PROB_EPS)
        d = link_derivative(link, a)
        v = g * (1.0 - g)
        score = X.T @ (d / v * (ind - g))
        score_norm = float(np.max(np.abs(score)))
        if score_norm <= tol:
            return GpiModel(gamma, link, constant_only,
                            0 if constant_only else dataset.p,
                            True, it - 1, score_norm)
        J = (X * (d * d / v)[:, None]).T @ X
        try:
            step = np.linalg.solve(J, score)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in outcome-model fit",
                                   last_iterate=gamma, residual=score_norm,
                                   iterations=it) from None
        gamma = gamma + step
        if np.max(np.abs(gamma)) > SEPARATION_BOUND:
            raise SeparationError(
                "outcome-model fit diverged; response may be degenerate")
    raise ConvergenceError("outcome-model Newton iteration did not converge",
                           last_iterate=gamma, residual=score_norm,
                           iterations=MAX_ITER)
