"""Semiparametric logistic propensity model: fit and clipped prediction."""

from dataclasses import dataclass

import numpy as np

from .errors import (ConvergenceError, SeparationError, SingularDesignError,
                     ValidationError)
from .special import expit, logit

DEFAULT_CLIP_EPS = 1e-6
SCORE_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 100
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class PropensityModel:
    """Fitted logistic coefficients (intercept first)."""

    eta: np.ndarray
    intercept_only: bool
    converged: bool
    iterations: int
    score_norm: float
    clip_eps: float = DEFAULT_CLIP_EPS

    @property
    def p(self):
        return 0 if self.intercept_only else len(self.eta) - 1


def design_matrix(dataset, intercept_only):
    if intercept_only or dataset.p == 0:
        return np.ones((dataset.n, 1))
    return np.column_stack([np.ones(dataset.n), dataset.w])


def _loglik(z, xb):
    # log L = sum z*xb - log(1 + exp(xb)), computed stably
    return float(np.sum(z * xb - np.logaddexp(0.0, xb)))


def fit_propensity(dataset, intercept_only=False, clip_eps=DEFAULT_CLIP_EPS):
    """Maximum-likelihood logistic fit by IRLS with step-halving.

    Converges when max |score component| <= 1e-8 or the relative Newton
    step falls below 1e-10; raises after 100 iterations. A failed fit with
    any coefficient beyond +-30 is reported as separation, naming the
    covariate.
    """
    dataset.require_both_arms()
    X = design_matrix(dataset, intercept_only)
    z = dataset.z.astype(float)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError("propensity design matrix is rank deficient")

    def check_separation(coefs):
        offenders = np.flatnonzero(np.abs(coefs) > SEPARATION_BOUND)
        if offenders.size:
            names = ["intercept" if k == 0 else f"covariate {k - 1}"
                     for k in offenders]
            raise SeparationError("propensity coefficients diverged; likely "
                                  f"separation in: {', '.join(names)}")

    eta = np.zeros(X.shape[1])
    eta[0] = logit(z.mean())
    ll = _loglik(z, X @ eta)
    score_norm = np.inf
    for it in range(1, MAX_ITER + 1):
        pi = expit(X @ eta)
        score = X.T @ (z - pi)
        score_norm = float(np.max(np.abs(score)))
        if score_norm <= SCORE_TOL:
            check_separation(eta)
            return PropensityModel(eta, intercept_only or dataset.p == 0,
                                   True, it - 1, score_norm, clip_eps)
        W = pi * (1.0 - pi)
        H = (X * W[:, None]).T @ X
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            raise SingularDesignError(
                "singular information matrix while fitting propensity") from None
        # halve until the likelihood stops decreasing
        scale = 1.0
        for _ in range(30):
            cand = eta + scale * step
            ll_new = _loglik(z, X @ cand)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        eta = eta + scale * step
        ll = _loglik(z, X @ eta)
        if np.linalg.norm(scale * step) <= STEP_TOL * max(1.0, np.linalg.norm(eta)):
            pi = expit(X @ eta)
            score_norm = float(np.max(np.abs(X.T @ (z - pi))))
            if score_norm <= 1e-6:
                check_separation(eta)
                return PropensityModel(eta, intercept_only or dataset.p == 0,
                                       True, it, score_norm, clip_eps)
            break

    check_separation(eta)
    raise ConvergenceError("propensity IRLS did not converge",
                           last_iterate=eta, residual=score_norm,
                           iterations=MAX_ITER)


def predict_pi(model, w):
    """Clipped propensity for one covariate vector or a (n, p) matrix."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if model.intercept_only:
        lin = np.full(w.shape[0], model.eta[0])
    else:
        if w.shape[1] != len(model.eta) - 1:
            raise ValidationError(
                f"expected {len(model.eta) - 1} covariates, got {w.shape[1]}")
        lin = model.eta[0] + w @ model.eta[1:]
    out = np.clip(expit(lin), model.clip_eps, 1.0 - model.clip_eps)
    return float(out[0]) if out.shape == (1,) and np.ndim(w) <= 2 and w.shape[0] == 1 else out


def predict_pi_dataset(model, dataset):
    """Clipped propensities for every subject, plus the count at the bound."""
    if model.intercept_only:
        lin = np.full(dataset.n, model.eta[0])
    else:
        if dataset.p != len(model.eta) - 1:
            raise ValidationError("covariate dimension does not match the model")
        lin = model.eta[0] + dataset.w @ model.eta[1:]
    pi = np.clip(expit(lin), model.clip_eps, 1.0 - model.clip_eps)
    n_clipped = int(np.sum((pi <= model.clip_eps) | (pi >= 1.0 - model.clip_eps)))
    return pi, n_clipped
