"""Joint inference for (eta, gamma, delta) via pairwise estimating equations.

The stacked system sums D_i V_i^{-1} (f_i - h_i) over all unordered subject
pairs, with identity working correlation. Response rows per pair:

  * a treatment row  f1 = (z_i + z_j)/2        with mean (pi_i + pi_j)/2
  * the observed pair indicator (discordant pairs only) with mean g
  * the estimator row f3 (family-specific)     with mean delta

Unobserved indicator components are dropped from the system together with
the matching rows of the gradient and working variance, so the treatment
and outcome blocks reproduce the standalone propensity and pairwise-outcome
fits, and the delta equation is linear given the other blocks.

The covariance of the stacked root is the U-statistic sandwich
4 B^{-1} Sigma B^{-T}, with Sigma estimated from per-subject projections
(the average pair score over each subject's partners) and B from the
pair-level gradient of the residuals.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .data import PairIndex
from .errors import ConvergenceError, MwwdrError, ValidationError
from .estimators import kernel, kernel_matrix
from .gpi import (GpiModel, fit_gpi, link_derivative, link_inverse,
                  linear_predictor_matrix)
from .propensity import DEFAULT_CLIP_EPS, design_matrix, fit_propensity
from .special import PROB_EPS, expit, std_normal_cdf

FAMILIES = ("dr", "ipw", "msi")


@dataclass(frozen=True)
class FrmSpec:
    """Configuration of the joint system.

    family selects the estimator row: "dr" (doubly robust), "ipw"
    (weighting only; no outcome block), "msi" (imputation only; no
    propensity block). The misspecification switches force intercept-only
    propensity or a constant outcome model.
    """

    family: str = "dr"
    link: str = "probit"
    intercept_only_propensity: bool = False
    constant_only_gpi: bool = False
    clip_eps: float = DEFAULT_CLIP_EPS
    tol: float = 1e-8
    max_iter: int = 100
    weighted_delta: bool = True
    ties: Optional[bool] = None
    fd_check_pairs: int = 8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"family must be one of {FAMILIES}")
        if not 0.0 < self.clip_eps < 0.5:
            raise ValidationError("clip_eps must lie in (0, 0.5)")

    @property
    def has_eta(self):
        return self.family in ("dr", "ipw")

    @property
    def has_gamma(self):
        return self.family in ("dr", "msi")


class ThetaLayout:
    """Index bookkeeping for the stacked parameter vector."""

    def __init__(self, p, spec):
        self.p = p
        self.eta_dim = (1 if (spec.intercept_only_propensity or p == 0) else 1 + p) \
            if spec.has_eta else 0
        self.gamma_dim = (1 if (spec.constant_only_gpi or p == 0) else 1 + 2 * p) \
            if spec.has_gamma else 0
        self.q = self.eta_dim + self.gamma_dim + 1
        self.eta_slice = slice(0, self.eta_dim)
        self.gamma_slice = slice(self.eta_dim, self.eta_dim + self.gamma_dim)
        self.delta_index = self.q - 1
        names = []
        if self.eta_dim:
            names += ["eta0"] + [f"eta{k}" for k in range(1, self.eta_dim)]
        if self.gamma_dim:
            names.append("gamma0")
            nslopes = (self.gamma_dim - 1) // 2
            if nslopes == 1:
                names += ["gamma11", "gamma10"]
            else:
                names += [f"gamma11_{k}" for k in range(1, nslopes + 1)]
                names += [f"gamma10_{k}" for k in range(1, nslopes + 1)]
        names.append("delta")
        self.names = tuple(names)

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.q,):
            raise ValidationError(f"theta must have length {self.q}")
        return (theta[self.eta_slice], theta[self.gamma_slice],
                float(theta[self.delta_index]))


@dataclass
class PairResponse:
    """Per-pair functional response, means, and working variances.

    f2_components holds the two indicator orientations in order
    (first treated vs second control, then the swap); each entry is
    (observed, value) with value None when unobserved. V1-V3 follow the
    working-variance formulas of the doubly robust system.
    """

    f1: float
    f2_components: Tuple[Tuple[bool, Optional[float]], Tuple[bool, Optional[float]]]
    f3: float
    h1: float
    h2: float
    h3: float
    V1: float
    V2: float
    V3: float


def _pair_pi(eta, w_vec, spec):
    if spec.intercept_only_propensity or len(eta) == 1:
        lin = eta[0]
    else:
        lin = eta[0] + float(np.dot(eta[1:], w_vec))
    return float(np.clip(expit(lin), spec.clip_eps, 1.0 - spec.clip_eps))


def _pair_g(gamma, w_first, w_second, spec, p):
    if spec.constant_only_gpi or p == 0 or len(gamma) == 1:
        a = gamma[0]
    else:
        a = gamma[0] + float(np.dot(gamma[1:1 + p], w_first)) \
            + float(np.dot(gamma[1 + p:], w_second))
    return float(np.clip(link_inverse(spec.link, a), PROB_EPS, 1.0 - PROB_EPS)), float(a)


def build_pair_response(dataset, pair, theta, spec: FrmSpec) -> PairResponse:
    """Evaluate one pair's responses, means, and working variances at theta."""
    if isinstance(pair, PairIndex):
        i, j = pair.i, pair.j
    else:
        i, j = pair
    layout = ThetaLayout(dataset.p, spec)
    eta, gamma, delta = layout.unpack(theta)
    ties = dataset.ties if spec.ties is None else spec.ties
    z_i, z_j = int(dataset.z[i]), int(dataset.z[j])
    w_i, w_j = dataset.w[i], dataset.w[j]

    # propensity pieces: for the MSI family no eta block exists, but the
    # reported working variances still need a propensity; use 1/2.
    if layout.eta_dim:
        pi_i = _pair_pi(eta, w_i, spec)
        pi_j = _pair_pi(eta, w_j, spec)
    else:
        pi_i = pi_j = 0.5
    if layout.gamma_dim:
        g_ij, _ = _pair_g(gamma, w_i, w_j, spec, dataset.p)
        g_ji, _ = _pair_g(gamma, w_j, w_i, spec, dataset.p)
    else:
        g_ij = g_ji = 0.5

    r_ij = z_i * (1 - z_j)
    r_ji = z_j * (1 - z_i)
    pt_ij = pi_i * (1.0 - pi_j)
    pt_ji = pi_j * (1.0 - pi_i)
    k_ij = kernel(dataset.y[i], dataset.y[j], ties)
    k_ji = kernel(dataset.y[j], dataset.y[i], ties)

    f1 = 0.5 * (z_i + z_j)
    f2 = ((r_ij == 1, k_ij if r_ij == 1 else None),
          (r_ji == 1, k_ji if r_ji == 1 else None))
    if spec.family == "ipw":
        f3 = 0.5 * (r_ij / pt_ij * k_ij + r_ji / pt_ji * k_ji)
    elif spec.family == "msi":
        f3 = 0.5 * (r_ij * k_ij + (1.0 - r_ij) * g_ij
                    + r_ji * k_ji + (1.0 - r_ji) * g_ji)
    else:
        f3 = 0.5 * (r_ij / pt_ij * k_ij + (1.0 - r_ij / pt_ij) * g_ij
                    + r_ji / pt_ji * k_ji + (1.0 - r_ji / pt_ji) * g_ji)

    h1 = 0.5 * (pi_i + pi_j)
    h2 = 0.5 * (g_ij + g_ji)
    V1 = 0.25 * (pi_i * (1.0 - pi_i) + pi_j * (1.0 - pi_j))
    V2 = 0.25 * (g_ij * (1.0 - g_ij) + g_ji * (1.0 - g_ji))
    V3 = 0.25 * (g_ij * (1.0 - g_ij) / pt_ij + g_ji * (1.0 - g_ji) / pt_ji)
    return PairResponse(f1, f2, f3, h1, h2, float(delta), V1, V2, V3)


# ---------------------------------------------------------------------------
# vectorized workspace


class _Workspace:
    """All pair-level matrices needed by the solver and the sandwich."""

    def __init__(self, dataset, spec, eta, gamma_model):
        n = dataset.n
        self.n = n
        self.npairs = n * (n - 1) // 2
        self.z = dataset.z.astype(float)
        self.w = dataset.w
        self.nd = ~np.eye(n, dtype=bool)
        ties = dataset.ties if spec.ties is None else spec.ties
        self.K = kernel_matrix(dataset.y, ties)
        self.Z1 = np.outer(self.z, 1.0 - self.z)

        self.eta = eta
        self.X = None
        self.pi = None
        if spec.has_eta:
            self.X = design_matrix(dataset, spec.intercept_only_propensity)
            self.pi = np.clip(expit(self.X @ eta),
                              spec.clip_eps, 1.0 - spec.clip_eps)
            self.clip_count = int(np.sum((self.pi <= spec.clip_eps)
                                         | (self.pi >= 1.0 - spec.clip_eps)))
            self.pp = self.pi * (1.0 - self.pi)
            self.PT = np.outer(self.pi, 1.0 - self.pi)
        else:
            self.clip_count = 0

        self.gamma_model = gamma_model
        if spec.has_gamma:
            A = linear_predictor_matrix(gamma_model, dataset.w)
            self.G = np.clip(link_inverse(spec.link, A), PROB_EPS, 1.0 - PROB_EPS)
            self.DG = link_derivative(spec.link, A)
            self.Gv = self.G * (1.0 - self.G)

        if spec.family == "ipw":
            F3h = self.Z1 / self.PT * self.K
        elif spec.family == "msi":
            F3h = self.Z1 * self.K + (1.0 - self.Z1) * self.G
        else:
            R = self.Z1 / self.PT
            F3h = R * self.K + (1.0 - R) * self.G
        self.F3 = 0.5 * (F3h + F3h.T)

        if spec.family == "dr" and spec.weighted_delta:
            GvPT = self.Gv / self.PT
            V3 = 0.25 * (GvPT + GvPT.T)
            self.wdelta = np.where(self.nd, 1.0 / V3, 0.0)
        else:
            self.wdelta = np.where(self.nd, 1.0, 0.0)

    def solve_delta(self):
        return float((self.wdelta * self.F3).sum() / self.wdelta.sum())

    def delta_plain(self):
        return float(self.F3[self.nd].mean())


def _eta_score_matrices(ws):
    R1 = 0.5 * (ws.z[:, None] + ws.z[None, :]) - 0.5 * (ws.pi[:, None] + ws.pi[None, :])
    V1 = 0.25 * (ws.pp[:, None] + ws.pp[None, :])
    CR = np.where(ws.nd, R1 / V1, 0.0)
    CV = np.where(ws.nd, 1.0 / V1, 0.0)
    return CR, CV


def _fit_eta_pairwise(dataset, spec, init=None):
    """Newton solve of the treatment-row block; initialized at the
    maximum-likelihood logistic fit."""
    mle = fit_propensity(dataset, intercept_only=spec.intercept_only_propensity,
                         clip_eps=spec.clip_eps)
    eta = mle.eta.copy() if init is None else np.asarray(init, dtype=float).copy()
    X = design_matrix(dataset, spec.intercept_only_propensity)
    n = dataset.n
    npairs = n * (n - 1) / 2.0
    nd = ~np.eye(n, dtype=bool)
    z = dataset.z.astype(float)
    score_norm = np.inf
    for it in range(1, spec.max_iter + 1):
        pi = np.clip(expit(X @ eta), spec.clip_eps, 1.0 - spec.clip_eps)
        pp = pi * (1.0 - pi)
        R1 = 0.5 * (z[:, None] + z[None, :]) - 0.5 * (pi[:, None] + pi[None, :])
        V1 = 0.25 * (pp[:, None] + pp[None, :])
        CR = np.where(nd, R1 / V1, 0.0)
        Ap = X * pp[:, None]
        score = 0.5 * Ap.T @ CR.sum(axis=1)
        score_norm = float(np.max(np.abs(score))) / npairs
        if score_norm <= 0.01 * spec.tol:
            return eta, mle, it - 1, score_norm
        CV = np.where(nd, 1.0 / V1, 0.0)
        J = -0.25 * (Ap.T @ (Ap * CV.sum(axis=1)[:, None]) + Ap.T @ CV @ Ap)
        try:
            step = np.linalg.solve(J, -score)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in the treatment block; "
                                   "consider intercept_only_propensity",
                                   last_iterate=eta, residual=score_norm,
                                   iterations=it) from None
        eta = eta + step
    if score_norm <= spec.tol:
        return eta, mle, spec.max_iter, score_norm
    raise ConvergenceError("treatment-block Newton did not converge",
                           last_iterate=eta, residual=score_norm,
                           iterations=spec.max_iter)


@dataclass
class UgeeFit:
    """Joint root, sandwich covariance, and diagnostics."""

    spec: FrmSpec
    names: Tuple[str, ...]
    theta: np.ndarray
    se: np.ndarray
    Sigma_hat: np.ndarray
    B_hat: np.ndarray
    Sigma_theta: np.ndarray
    vhat: np.ndarray
    delta_plain: float
    residual_norm: float
    n: int
    diagnostics: dict = field(default_factory=dict)
    plugin_eta: Optional[np.ndarray] = None

    @property
    def delta(self):
        return float(self.theta[-1])

    def index_of(self, component):
        try:
            return self.names.index(component)
        except ValueError:
            raise ValidationError(
                f"unknown component {component!r}; have {self.names}") from None

    def component(self, name):
        return float(self.theta[self.index_of(name)])

    def se_of(self, name):
        return float(self.se[self.index_of(name)])

    def to_report(self):
        return {
            "family": self.spec.family,
            "components": {nm: {"estimate": float(t), "se": float(s)}
                           for nm, t, s in zip(self.names, self.theta, self.se)},
            "delta_plain": self.delta_plain,
            "covariance": [[float(v) for v in row] for row in self.Sigma_theta],
            "diagnostics": {k: (float(v) if isinstance(v, (int, float, np.floating))
                                else v)
                            for k, v in self.diagnostics.items()},
            "n": self.n,
        }


@dataclass
class WaldResult:
    component: str
    estimate: float
    se: float
    z: float
    p_value: float
    ci_lo: float
    ci_hi: float
    alpha: float
    null_value: float
    reject: bool


def wald_test(fit, component="delta", null_value=0.5, alpha=0.05) -> WaldResult:
    """Two-sided normal test of one component against a point null."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    k = fit.index_of(component)
    est, se = float(fit.theta[k]), float(fit.se[k])
    if se <= 0.0:
        raise MwwdrError(f"degenerate test: se({component}) = 0")
    zval = (est - null_value) / se
    pval = 2.0 * (1.0 - std_normal_cdf(abs(zval)))
    crit = _normal_quantile(1.0 - alpha / 2.0)
    return WaldResult(component, est, se, float(zval), float(pval),
                      est - crit * se, est + crit * se, alpha, null_value,
                      bool(abs(zval) > crit))


@lru_cache(maxsize=64)
def _normal_quantile(prob):
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if std_normal_cdf(mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# sandwich machinery


def _gamma_score_matrix(ws):
    """S[i, j] = weighted indicator residual on discordant ordered pairs."""
    S = ws.DG / ws.Gv * (ws.K - ws.G)
    return np.where(ws.Z1 > 0, S, 0.0)


def _projections(ws, layout, spec, delta):
    n = ws.n
    vhat = np.zeros((n, layout.q))
    if layout.eta_dim:
        CR, _ = _eta_score_matrices(ws)
        Ap = ws.X * ws.pp[:, None]
        vhat[:, layout.eta_slice] = 0.5 * (Ap * CR.sum(axis=1)[:, None] + CR @ Ap)
    if layout.gamma_dim:
        S = _gamma_score_matrix(ws)
        rs, cs = S.sum(axis=1), S.sum(axis=0)
        g0 = layout.gamma_slice.start
        vhat[:, g0] = rs + cs
        if layout.gamma_dim > 1:
            p = layout.p
            vhat[:, g0 + 1:g0 + 1 + p] = ws.w * rs[:, None] + S.T @ ws.w
            vhat[:, g0 + 1 + p:g0 + 1 + 2 * p] = S @ ws.w + ws.w * cs[:, None]
    vhat[:, layout.delta_index] = (ws.wdelta * (ws.F3 - delta)).sum(axis=1)
    return vhat / (n - 1)


def _bread(ws, layout, spec):
    q = layout.q
    B = np.zeros((q, q))
    if layout.eta_dim:
        _, CV = _eta_score_matrices(ws)
        Ap = ws.X * ws.pp[:, None]
        B[layout.eta_slice, layout.eta_slice] = -0.25 * (
            Ap.T @ (Ap * CV.sum(axis=1)[:, None]) + Ap.T @ CV @ Ap)
    if layout.gamma_dim:
        Q = np.where(ws.Z1 > 0, ws.DG * ws.DG / ws.Gv, 0.0)
        qr, qc = Q.sum(axis=1), Q.sum(axis=0)
        g0 = layout.gamma_slice.start
        if layout.gamma_dim == 1:
            B[g0, g0] = -Q.sum()
        else:
            p = layout.p
            w = ws.w
            blk = np.zeros((layout.gamma_dim, layout.gamma_dim))
            blk[0, 0] = Q.sum()
            blk[0, 1:1 + p] = blk[1:1 + p, 0] = w.T @ qr
            blk[0, 1 + p:] = blk[1 + p:, 0] = w.T @ qc
            blk[1:1 + p, 1:1 + p] = (w * qr[:, None]).T @ w
            blk[1 + p:, 1 + p:] = (w * qc[:, None]).T @ w
            blk[1:1 + p, 1 + p:] = w.T @ Q @ w
            blk[1 + p:, 1:1 + p] = blk[1:1 + p, 1 + p:].T
            B[layout.gamma_slice, layout.gamma_slice] = -blk

    d = layout.delta_index
    if layout.eta_dim:
        KK = ws.K - ws.G if spec.family == "dr" else ws.K
        T = np.where(ws.nd, ws.wdelta * (-0.5) * ws.Z1 * KK / ws.PT ** 2, 0.0)
        row = ws.X.T @ (ws.pp * (T @ (1.0 - ws.pi))) \
            - ws.X.T @ (ws.pp * (T.T @ ws.pi))
        B[d, layout.eta_slice] = row
    if layout.gamma_dim and spec.family in ("dr", "msi"):
        C = (1.0 - ws.Z1 / ws.PT) if spec.family == "dr" else (1.0 - ws.Z1)
        W = np.where(ws.nd, 0.5 * ws.wdelta * C * ws.DG, 0.0)
        g0 = layout.gamma_slice.start
        B[d, g0] = W.sum()
        if layout.gamma_dim > 1:
            p = layout.p
            B[d, g0 + 1:g0 + 1 + p] = ws.w.T @ W.sum(axis=1)
            B[d, g0 + 1 + p:g0 + 1 + 2 * p] = ws.w.T @ W.sum(axis=0)
    B[d, d] = -0.5 * ws.wdelta.sum()
    return B / ws.npairs


def _covariance_from_workspace(ws, layout, spec, delta):
    vhat = _projections(ws, layout, spec, delta)
    Sigma = vhat.T @ vhat / ws.n
    B = _bread(ws, layout, spec)
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        raise MwwdrError("singular bread matrix B; the system may be "
                         "unidentified — consider misspecification switches") from None
    Sigma_theta = 4.0 * Binv @ Sigma @ Binv.T
    Sigma_theta = 0.5 * (Sigma_theta + Sigma_theta.T)
    diag = np.diag(Sigma_theta).copy()
    floored = diag < 0.0
    if np.any(floored):
        diag[floored] = 0.0
    se = np.sqrt(diag / ws.n)
    return vhat, Sigma, B, Sigma_theta, se, int(floored.sum())


def _make_workspace(dataset, spec, theta, layout):
    eta, gamma, _ = layout.unpack(theta)
    gm = None
    if spec.has_gamma:
        gm = GpiModel(np.asarray(gamma, dtype=float), spec.link,
                      spec.constant_only_gpi or dataset.p == 0,
                      0 if (spec.constant_only_gpi or dataset.p == 0) else dataset.p,
                      True, 0, 0.0)
    return _Workspace(dataset, spec, np.asarray(eta, dtype=float) if spec.has_eta else None, gm)


def sandwich_covariance(dataset, theta_hat, spec: FrmSpec):
    """Sandwich pieces at a given root: (Sigma_hat, B_hat, Sigma_theta, se_delta)."""
    layout = ThetaLayout(dataset.p, spec)
    ws = _make_workspace(dataset, spec, theta_hat, layout)
    _, _, delta = layout.unpack(theta_hat)
    _, Sigma, B, Sigma_theta, se, _ = _covariance_from_workspace(ws, layout, spec, delta)
    return Sigma, B, Sigma_theta, float(se[layout.delta_index])


def _stacked_u(ws, layout, delta):
    """The stacked estimating-function vector at the workspace's parameters,
    normalized by the pair count."""
    parts = []
    if layout.eta_dim:
        CR, _ = _eta_score_matrices(ws)
        Ap = ws.X * ws.pp[:, None]
        parts.append(0.5 * Ap.T @ CR.sum(axis=1))
    if layout.gamma_dim:
        S = _gamma_score_matrix(ws)
        rs, cs = S.sum(axis=1), S.sum(axis=0)
        g = [rs.sum()]
        if layout.gamma_dim > 1:
            g += list(ws.w.T @ rs) + list(ws.w.T @ cs)
        parts.append(np.asarray(g))
    parts.append(np.asarray([0.5 * (ws.wdelta * (ws.F3 - delta)).sum()]))
    return np.concatenate(parts) / ws.npairs


def stacked_residual(dataset, theta, spec: FrmSpec):
    """Evaluate the normalized stacked estimating function at any theta."""
    layout = ThetaLayout(dataset.p, spec)
    ws = _make_workspace(dataset, spec, theta, layout)
    _, _, delta = layout.unpack(theta)
    return _stacked_u(ws, layout, delta)


def _residual_norm(ws, layout, spec, delta):
    return float(np.max(np.abs(_stacked_u(ws, layout, delta))))


def solve_ugee(dataset, spec: FrmSpec, init=None):
    """Fit the joint system and return a UgeeFit.

    Default initialization: maximum-likelihood propensity coefficients for
    the treatment block; the outcome block self-starts at the constant
    solution. The delta equation is linear given the other blocks.
    """
    dataset.require_both_arms()
    layout = ThetaLayout(dataset.p, spec)
    diagnostics = {}

    eta, plugin, eta_iters = None, None, 0
    if spec.has_eta:
        eta_init = None
        if init is not None:
            eta_init = np.asarray(init, dtype=float)[layout.eta_slice]
        eta, plugin, eta_iters, eta_res = _fit_eta_pairwise(dataset, spec, eta_init)
        diagnostics["eta_iterations"] = eta_iters
        diagnostics["eta_score_norm"] = eta_res

    gm = None
    if spec.has_gamma:
        gm = fit_gpi(dataset, constant_only=spec.constant_only_gpi, link=spec.link)
        diagnostics["gamma_iterations"] = gm.iterations
        diagnostics["gamma_score_norm"] = gm.score_norm

    ws = _Workspace(dataset, spec, eta, gm)
    delta = ws.solve_delta()
    theta = np.zeros(layout.q)
    if layout.eta_dim:
        theta[layout.eta_slice] = eta
    if layout.gamma_dim:
        theta[layout.gamma_slice] = gm.gamma
    theta[layout.delta_index] = delta

    residual = _residual_norm(ws, layout, spec, delta)
    if residual > spec.tol:
        raise ConvergenceError("stacked system residual above tolerance",
                               last_iterate=theta, residual=residual)

    vhat, Sigma, B, Sigma_theta, se, floored = _covariance_from_workspace(
        ws, layout, spec, delta)
    diagnostics["residual_norm"] = residual
    diagnostics["clipped_propensities"] = ws.clip_count
    if floored:
        diagnostics["negative_variances_floored"] = floored

    if spec.fd_check_pairs > 0:
        worst = check_residual_derivatives(dataset, theta, spec,
                                           n_pairs=spec.fd_check_pairs, seed=0)
        diagnostics["fd_check_max_err"] = worst
        if worst > 1e-5:
            raise MwwdrError(
                f"analytic pair-gradient check failed (max rel err {worst:.2e})")

    return UgeeFit(spec, layout.names, theta, se, Sigma, B, Sigma_theta,
                   vhat, ws.delta_plain(), residual, dataset.n, diagnostics,
                   plugin_eta=None if plugin is None else plugin.eta)


# ---------------------------------------------------------------------------
# per-pair residual rows: analytic gradient and finite-difference check


def pair_residual_rows(dataset, i, j, theta, spec: FrmSpec):
    """Retained residual rows S_i = f - h for one pair, at theta."""
    layout = ThetaLayout(dataset.p, spec)
    pr = build_pair_response(dataset, (i, j), theta, spec)
    z_i, z_j = int(dataset.z[i]), int(dataset.z[j])
    rows = []
    if spec.has_eta:
        rows.append(pr.f1 - pr.h1)
    if spec.has_gamma and z_i != z_j:
        (obs_ij, v_ij), (obs_ji, v_ji) = pr.f2_components
        eta, gamma, _ = layout.unpack(theta)
        if obs_ij:
            g_obs, _ = _pair_g(gamma, dataset.w[i], dataset.w[j], spec, dataset.p)
            rows.append(v_ij - g_obs)
        else:
            g_obs, _ = _pair_g(gamma, dataset.w[j], dataset.w[i], spec, dataset.p)
            rows.append(v_ji - g_obs)
    rows.append(pr.f3 - pr.h3)
    return np.asarray(rows)


def pair_residual_gradient(dataset, i, j, theta, spec: FrmSpec):
    """Analytic d(f - h)/d theta for the retained rows of one pair."""
    layout = ThetaLayout(dataset.p, spec)
    eta, gamma, _ = layout.unpack(theta)
    z_i, z_j = int(dataset.z[i]), int(dataset.z[j])
    w_i, w_j = dataset.w[i], dataset.w[j]
    ties = dataset.ties if spec.ties is None else spec.ties
    k_ij = kernel(dataset.y[i], dataset.y[j], ties)
    k_ji = kernel(dataset.y[j], dataset.y[i], ties)
    r_ij, r_ji = z_i * (1 - z_j), z_j * (1 - z_i)

    def x_vec(wv):
        if spec.intercept_only_propensity or layout.eta_dim == 1:
            return np.ones(1)
        return np.concatenate([[1.0], wv])

    def u_vec(wf, wsec):
        if spec.constant_only_gpi or layout.gamma_dim == 1:
            return np.ones(1)
        return np.concatenate([[1.0], wf, wsec])

    if spec.has_eta:
        pi_i, pi_j = _pair_pi(eta, w_i, spec), _pair_pi(eta, w_j, spec)
        pp_i, pp_j = pi_i * (1 - pi_i), pi_j * (1 - pi_j)
        pt_ij, pt_ji = pi_i * (1 - pi_j), pi_j * (1 - pi_i)
        dpt_ij = pp_i * (1 - pi_j) * x_vec(w_i) - pi_i * pp_j * x_vec(w_j)
        dpt_ji = pp_j * (1 - pi_i) * x_vec(w_j) - pi_j * pp_i * x_vec(w_i)
    if spec.has_gamma:
        g_ij, a_ij = _pair_g(gamma, w_i, w_j, spec, dataset.p)
        g_ji, a_ji = _pair_g(gamma, w_j, w_i, spec, dataset.p)
        dg_ij = link_derivative(spec.link, a_ij) * u_vec(w_i, w_j)
        dg_ji = link_derivative(spec.link, a_ji) * u_vec(w_j, w_i)

    rows = []
    if spec.has_eta:
        row = np.zeros(layout.q)
        row[layout.eta_slice] = -0.5 * (pp_i * x_vec(w_i) + pp_j * x_vec(w_j))
        rows.append(row)
    if spec.has_gamma and z_i != z_j:
        row = np.zeros(layout.q)
        row[layout.gamma_slice] = -(dg_ij if r_ij == 1 else dg_ji)
        rows.append(row)

    row = np.zeros(layout.q)
    if spec.family == "ipw":
        row[layout.eta_slice] = -0.5 * (r_ij * k_ij / pt_ij ** 2 * dpt_ij
                                        + r_ji * k_ji / pt_ji ** 2 * dpt_ji)
    elif spec.family == "msi":
        row[layout.gamma_slice] = 0.5 * ((1.0 - r_ij) * dg_ij
                                         + (1.0 - r_ji) * dg_ji)
    else:
        row[layout.eta_slice] = -0.5 * (
            r_ij * (k_ij - g_ij) / pt_ij ** 2 * dpt_ij
            + r_ji * (k_ji - g_ji) / pt_ji ** 2 * dpt_ji)
        row[layout.gamma_slice] = 0.5 * ((1.0 - r_ij / pt_ij) * dg_ij
                                         + (1.0 - r_ji / pt_ji) * dg_ji)
    row[layout.delta_index] = -1.0
    rows.append(row)
    return np.vstack(rows)


def check_residual_derivatives(dataset, theta, spec, n_pairs=100, seed=0,
                               step=1e-6):
    """Compare analytic pair gradients with central finite differences on a
    random sample of pairs; returns the worst scaled discrepancy."""
    rng = np.random.default_rng(seed)
    n = dataset.n
    layout = ThetaLayout(dataset.p, spec)
    worst = 0.0
    for _ in range(n_pairs):
        i = int(rng.integers(0, n - 1))
        j = int(rng.integers(i + 1, n))
        analytic = pair_residual_gradient(dataset, i, j, theta, spec)
        fd = np.zeros_like(analytic)
        for k in range(layout.q):
            h = step * max(1.0, abs(theta[k]))
            tp, tm = np.array(theta, dtype=float), np.array(theta, dtype=float)
            tp[k] += h
            tm[k] -= h
            fd[:, k] = (pair_residual_rows(dataset, i, j, tp, spec)
                        - pair_residual_rows(dataset, i, j, tm, spec)) / (2 * h)
        scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(fd)))
        worst = max(worst, float(np.max(np.abs(analytic - fd) / scale)))
    return worst
