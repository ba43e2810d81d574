"""Scenario generation, replicated studies, and summary tables.

The data-generating process: for subject i,
    w_i ~ N(mu_w, sigma2_w)
    z_i ~ Bernoulli(expit(eta0 + eta1 w_i))
    b_i, eps_i1, eps_i0 ~ centered scaled chi-square(1) with variances
        sigma2_b, sigma2, sigma2
    y_i1 = beta0 + beta1 + beta2 w_i + b_i + eps_i1
    y_i0 = beta0 +         beta2 w_i + b_i + eps_i0
and the observed outcome is the potential outcome selected by z_i.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Tuple

import numpy as np

from .data import Dataset, PotentialDataset
from .errors import MwwdrError, ValidationError
from .estimators import mww_estimate
from .special import expit
from .streams import RngStream
from .ugee import FrmSpec, solve_ugee, wald_test

ESTIMATOR_NAMES = ("mww", "ipw", "msi", "dr")
_ORACLE_STREAM = 1 << 48
_MAX_REGEN_ATTEMPTS = 1000


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario."""

    beta: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    eta_true: Tuple[float, float] = (1.0, -1.0)
    sigma2: float = 1.0
    sigma2_b: float = 1.0
    mu_w: float = 1.0
    sigma2_w: float = 0.25
    n: int = 200
    reps: int = 1000
    seed: int = 0
    alpha: float = 0.05
    misspecify_propensity: bool = False
    misspecify_outcome: bool = False
    estimators: Tuple[str, ...] = ESTIMATOR_NAMES
    link: str = "probit"
    on_degenerate: str = "regenerate"
    fd_check_pairs: int = 4

    def __post_init__(self):
        for name in ("sigma2", "sigma2_b", "sigma2_w"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.n < 4:
            raise ValidationError("n must be at least 4")
        if self.reps < 1:
            raise ValidationError("reps must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if len(self.beta) != 3 or len(self.eta_true) != 2:
            raise ValidationError("beta must have 3 entries and eta_true 2")
        bad = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if bad:
            raise ValidationError(f"unknown estimator(s): {bad}")
        if self.on_degenerate not in ("regenerate", "error"):
            raise ValidationError("on_degenerate must be 'regenerate' or 'error'")

    def to_json_dict(self):
        d = asdict(self)
        d["beta"] = list(self.beta)
        d["eta_true"] = list(self.eta_true)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_json_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario field(s): {sorted(unknown)}")
        d = dict(d)
        for key in ("beta", "eta_true", "estimators"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"invalid scenario: {exc}") from None


def generate_dataset(config, rep_index, attempt=0):
    """One replication's potential and observed data.

    The random stream is keyed by (seed, rep_index); regeneration attempts
    move to a disjoint sub-stream of the same replication.
    """
    stream = RngStream(config.seed, rep_index)
    if attempt:
        stream = stream.child(attempt)
    gen = stream.generator()
    n = config.n
    b0, b1, b2 = config.beta
    w = gen.normal(config.mu_w, math.sqrt(config.sigma2_w), n)
    pi = expit(config.eta_true[0] + config.eta_true[1] * w)
    z = (gen.random(n) < pi).astype(np.int8)
    b = (gen.standard_normal(n) ** 2 - 1.0) * math.sqrt(config.sigma2_b / 2.0)
    e1 = (gen.standard_normal(n) ** 2 - 1.0) * math.sqrt(config.sigma2 / 2.0)
    e0 = (gen.standard_normal(n) ** 2 - 1.0) * math.sqrt(config.sigma2 / 2.0)
    y1 = b0 + b1 + b2 * w + b + e1
    y0 = b0 + b2 * w + b + e0
    pot = PotentialDataset(y1, y0, z, w[:, None], b)
    return pot, pot.observed()


def true_gamma(config):
    """Closed-form outcome-model coefficients implied by the generator's
    probit approximation."""
    scale = 1.0 / math.sqrt(2.0 * (config.sigma2 + config.sigma2_b))
    b1, b2 = config.beta[1], config.beta[2]
    return (-scale * b1, -scale * b2, scale * b2)


def true_delta(config, n_pairs=10_000_000, chunk=1_000_000):
    """Monte Carlo oracle for P(treated potential <= control potential)
    across independent subjects. Exact 1/2 when beta1 = 0 (the two potential
    outcomes are exchangeable across subjects)."""
    if config.beta[1] == 0.0:
        return 0.5
    gen = RngStream(config.seed, _ORACLE_STREAM).generator()
    b0, b1, b2 = config.beta
    sw = math.sqrt(config.sigma2_w)
    sb = math.sqrt(config.sigma2_b / 2.0)
    se = math.sqrt(config.sigma2 / 2.0)
    hits, total = 0, 0
    while total < n_pairs:
        m = min(chunk, n_pairs - total)
        wi = gen.normal(config.mu_w, sw, m)
        wj = gen.normal(config.mu_w, sw, m)
        y1 = b1 + b2 * wi + (gen.standard_normal(m) ** 2 - 1.0) * sb \
            + (gen.standard_normal(m) ** 2 - 1.0) * se
        y0 = b2 * wj + (gen.standard_normal(m) ** 2 - 1.0) * sb \
            + (gen.standard_normal(m) ** 2 - 1.0) * se
        hits += int((y1 <= y0).sum())
        total += m
    return hits / total


def _frm_spec(config, family):
    return FrmSpec(family=family, link=config.link,
                   intercept_only_propensity=config.misspecify_propensity,
                   constant_only_gpi=config.misspecify_outcome,
                   fd_check_pairs=config.fd_check_pairs)


def _run_replication(config, rep_index):
    attempt = 0
    while True:
        _, ds = generate_dataset(config, rep_index, attempt)
        if 0 < ds.n1 < ds.n:
            break
        if config.on_degenerate == "error":
            raise MwwdrError(f"replication {rep_index} drew a single-arm sample")
        attempt += 1
        if attempt > _MAX_REGEN_ATTEMPTS:
            raise MwwdrError(f"replication {rep_index} kept drawing single-arm samples")

    rec = {"regenerated": attempt}
    for name in config.estimators:
        if name == "mww":
            est = mww_estimate(ds)
            if est.se is None or est.se == 0.0:
                rec["mww"] = {"delta": est.delta_hat, "se": float("nan"),
                              "reject": False}
            else:
                z = (est.delta_hat - 0.5) / est.se
                rec["mww"] = {"delta": est.delta_hat, "se": est.se,
                              "reject": bool(abs(z) > _z_crit(config.alpha))}
        else:
            fit = solve_ugee(ds, _frm_spec(config, name))
            wt = wald_test(fit, "delta", 0.5, config.alpha)
            entry = {"delta": fit.delta, "se": wt.se, "reject": wt.reject,
                     "components": {nm: (float(v), float(s))
                                    for nm, v, s in zip(fit.names, fit.theta, fit.se)}}
            if name == "dr":
                entry["delta_plain"] = fit.delta_plain
            rec[name] = entry
    return rec


def _worker(args):
    config, rep = args
    try:
        return rep, _run_replication(config, rep), None
    except Exception as exc:  # surfaced and counted by run_study
        return rep, None, f"{type(exc).__name__}: {exc}"


@dataclass
class StudySummary:
    """Monte Carlo aggregates across replications."""

    config: ScenarioConfig
    true_delta: float
    estimators: dict
    n_reps_used: int
    n_failed: int
    n_regenerated: int
    failures: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "config": self.config.to_json_dict(),
            "true_delta": self.true_delta,
            "estimators": self.estimators,
            "n_reps_used": self.n_reps_used,
            "n_failed": self.n_failed,
            "n_regenerated": self.n_regenerated,
            "failures": self.failures,
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2)


def _z_crit(alpha):
    from .ugee import _normal_quantile

    return _normal_quantile(1.0 - alpha / 2.0)


def _aggregate(config, records, true_d):
    out = {}
    for name in config.estimators:
        entries = [r[name] for r in records]
        deltas = np.array([e["delta"] for e in entries])
        ses = np.array([e["se"] for e in entries])
        rej = np.array([e["reject"] for e in entries])
        block = {
            "mean": float(deltas.mean()),
            "ase": float(np.nanmean(ses)) if np.any(np.isfinite(ses)) else float("nan"),
            "ese": float(deltas.std(ddof=1)) if len(deltas) > 1 else 0.0,
            "rejection_rate": float(rej.mean()),
            "pct_bias": float((deltas.mean() - true_d) / true_d * 100.0),
        }
        if name != "mww":
            comp_names = entries[0]["components"].keys()
            comps = {}
            for cn in comp_names:
                vals = np.array([e["components"][cn][0] for e in entries])
                cses = np.array([e["components"][cn][1] for e in entries])
                comps[cn] = {"mean": float(vals.mean()),
                             "ase": float(cses.mean()),
                             "ese": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
            block["components"] = comps
        if name == "dr":
            plain = np.array([e["delta_plain"] for e in entries])
            block["plain_mean"] = float(plain.mean())
            block["plain_ese"] = float(plain.std(ddof=1)) if len(plain) > 1 else 0.0
        out[name] = block
    return out


def run_study(config, threads=1, executor=None) -> StudySummary:
    """Run all replications and aggregate.

    Replications are independent streamed jobs; the summary is identical for
    any worker count because each replication's result depends only on
    (seed, rep_index) and aggregation walks replications in index order.
    """
    jobs = [(config, rep) for rep in range(config.reps)]
    if executor is not None:
        results = list(executor.map(_worker, jobs, chunksize=max(1, config.reps // 64)))
    elif threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, jobs, chunksize=max(1, config.reps // (8 * threads))))
    else:
        results = [_worker(j) for j in jobs]

    results.sort(key=lambda t: t[0])
    records = [r for _, r, err in results if err is None]
    failures = [(rep, err) for rep, _, err in results if err is not None]
    if len(failures) > 0.01 * config.reps:
        raise MwwdrError(f"{len(failures)} of {config.reps} replications failed; "
                         f"first: rep {failures[0][0]}: {failures[0][1]}")

    true_d = true_delta(config)
    summary = StudySummary(
        config=config,
        true_delta=float(true_d),
        estimators=_aggregate(config, records, true_d),
        n_reps_used=len(records),
        n_failed=len(failures),
        n_regenerated=int(sum(r["regenerated"] for r in records)),
        failures=[f"rep {rep}: {err}" for rep, err in failures[:20]],
    )
    return summary


# ---------------------------------------------------------------------------
# preset scenarios mirroring the simulation-study parameter block


def preset_null(n, reps, seed, **overrides):
    """Both models correctly specified, no treatment effect."""
    return ScenarioConfig(n=n, reps=reps, seed=seed, **overrides)


def preset_misspecified_propensity(n, reps, seed):
    """Propensity forced intercept-only; outcome model correct."""
    return ScenarioConfig(n=n, reps=reps, seed=seed, misspecify_propensity=True,
                          estimators=("mww", "ipw", "dr"))


def preset_misspecified_outcome(n, reps, seed):
    """Outcome model forced constant; propensity correct."""
    return ScenarioConfig(n=n, reps=reps, seed=seed, misspecify_outcome=True,
                          estimators=("mww", "msi", "dr"))


def preset_power(n, reps, seed):
    """Treatment effect beta1 = 1; both models as specified."""
    return ScenarioConfig(beta=(0.0, 1.0, 1.0), n=n, reps=reps, seed=seed)


PRESETS = {
    "table2": lambda n, reps, seed: [("null", preset_null(n, reps, seed))],
    "table3": lambda n, reps, seed: [
        ("misspecified_propensity", preset_misspecified_propensity(n, reps, seed)),
        ("misspecified_outcome", preset_misspecified_outcome(n, reps, seed)),
    ],
    "table4": lambda n, reps, seed: [
        ("null", preset_null(n, reps, seed)),
        ("misspecified_propensity", preset_misspecified_propensity(n, reps, seed)),
        ("misspecified_outcome", preset_misspecified_outcome(n, reps, seed)),
    ],
    "table5": lambda n, reps, seed: [("power", preset_power(n, reps, seed))],
}


def render_table(summary: StudySummary) -> str:
    """Aligned-text summary: one row per estimator, coefficient blocks as
    'mean (ASE/ESE)' and delta with rejection rate."""
    cfg = summary.config
    lines = [f"n = {cfg.n}, reps = {summary.n_reps_used}, "
             f"true delta = {summary.true_delta:.3f}, alpha = {cfg.alpha}"]
    comp_order = []
    for name in cfg.estimators:
        blk = summary.estimators[name]
        for cn in blk.get("components", {}):
            if cn not in comp_order and cn != "delta":
                comp_order.append(cn)
    header = ["estimator"] + comp_order + ["delta", "reject"]
    rows = [header]
    for name in cfg.estimators:
        blk = summary.estimators[name]
        row = [name.upper()]
        comps = blk.get("components", {})
        for cn in comp_order:
            if cn in comps:
                c = comps[cn]
                row.append(f"{c['mean']:.3f} ({c['ase']:.3f}/{c['ese']:.3f})")
            else:
                row.append("-")
        row.append(f"{blk['mean']:.3f} ({blk['ase']:.3f}/{blk['ese']:.3f})")
        row.append(f"{blk['rejection_rate']:.3f}")
        rows.append(row)
    widths = [max(len(r[k]) for r in rows) for k in range(len(header))]
    out = []
    for r in rows:
        out.append("  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip())
    return "\n".join(lines + out)


# ---------------------------------------------------------------------------
# synthetic confounded trial fixture (negative-control workflow)


def synthetic_confounded_trial(n=333, seed=2024) -> Dataset:
    """Deterministic fixture: a null-effect two-arm study whose assignment is
    strongly driven by four health covariates, with heavy-tailed outcomes.

    A naive rank-sum comparison sees a large group difference; adjusting for
    the covariates removes it.
    """
    gen = RngStream(seed, 0).generator()
    age = gen.normal(60.0, 6.5, n)
    bmi = gen.normal(29.5, 4.5, n)
    health = np.clip(gen.normal(70.0, 17.0, n), 0.0, 100.0)
    chol = (gen.random(n) < expit(0.03 * (age - 60.0) + 0.15 * (bmi - 29.5))).astype(float)
    index = (-0.4 * (age - 60.0) / 6.5 - 0.5 * (bmi - 29.5) / 4.5
             + 0.9 * (health - 70.0) / 17.0 - 0.4 * (chol - 0.5))
    z = (gen.random(n) < expit(1.1 * index)).astype(np.int8)
    base = 3.0e6 + 3.0e5 * index + 2.5e5 * gen.standard_normal(n)
    outliers = np.exp(gen.normal(11.0, 1.3, n))
    y = base + outliers
    w = np.column_stack([age, bmi, chol, health])
    return Dataset(z, y, w, outcome_kind="continuous")


def write_dataset_csv(dataset, path, w_names=None):
    """Write a dataset in the canonical CSV layout (id, z, y, covariates)."""
    w_names = list(w_names or [f"w{k}" for k in range(1, dataset.p + 1)])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["id", "z", "y", *w_names]) + "\n")
        for k in range(dataset.n):
            vals = [dataset.ids[k], str(int(dataset.z[k])), repr(float(dataset.y[k]))]
            vals += [repr(float(v)) for v in dataset.w[k]]
            fh.write(",".join(vals) + "\n")
