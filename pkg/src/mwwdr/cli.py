"""Batch command-line front end.

Subcommands:
  estimate  -- fit the requested estimators on a CSV file and report
               estimates, standard errors, and Wald tests of delta = 1/2.
  simulate  -- run a scenario file or a named preset bundle and report
               Monte Carlo summaries.

Exit codes: 0 success, 2 validation, 3 estimability, 4 convergence/fitting,
5 I/O.
"""

import argparse
import json
import os
import sys

from .data import CsvSchema, load_csv
from .errors import (ConvergenceError, EstimabilityError, MwwdrError,
                     SeparationError, SingularDesignError, ValidationError)
from .estimators import ipw_estimate, mww_estimate
from .simstudy import (PRESETS, ScenarioConfig, render_table, run_study)
from .ugee import FrmSpec, solve_ugee, wald_test

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ESTIMABILITY = 3
EXIT_CONVERGENCE = 4
EXIT_IO = 5

ESTIMATOR_CHOICES = ("mww", "ipw", "msi", "dr", "all")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mwwdr",
        description="Doubly robust rank-based causal effect estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate delta from a CSV file")
    est.add_argument("--input", required=True, help="input CSV path")
    est.add_argument("--z-col", required=True, help="treatment column (0/1)")
    est.add_argument("--y-col", required=True, help="outcome column")
    est.add_argument("--w-cols", default="",
                     help="comma-separated covariate columns")
    est.add_argument("--estimator", default="all", choices=ESTIMATOR_CHOICES)
    est.add_argument("--link", default="probit", choices=("probit", "logit"))
    est.add_argument("--ties", default="auto", choices=("auto", "on", "off"),
                     help="half-tie kernel: auto scores ties only for count data")
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument("--clip-eps", type=float, default=1e-6)
    est.add_argument("--hajek", action="store_true",
                     help="also report the weight-normalized IPW estimate")
    est.add_argument("--output", default=None, help="write report here instead of stdout")
    est.add_argument("--format", default="json", choices=("json", "table"))

    sim = sub.add_parser("simulate", help="run a simulation scenario")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", choices=sorted(PRESETS),
                     help="named scenario bundle")
    sim.add_argument("--n", type=int, default=None, help="sample size (presets)")
    sim.add_argument("--reps", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=None,
                     help="required; all randomness flows from it")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: available cores)")
    sim.add_argument("--output", default=None)
    sim.add_argument("--format", default="json", choices=("json", "table"))
    return parser


def _emit(text, path):
    if path is None:
        sys.stdout.write(text + "\n")
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise _IoFailure(str(exc)) from None


class _IoFailure(Exception):
    pass


def cmd_estimate(args) -> int:
    if not os.path.exists(args.input):
        raise _IoFailure(f"input file not found: {args.input}")
    w_cols = tuple(c for c in (s.strip() for s in args.w_cols.split(",")) if c)
    outcome_kind = "count" if args.ties == "on" else "continuous"
    ds = load_csv(args.input, CsvSchema(args.z_col, args.y_col, w_cols),
                  outcome_kind=outcome_kind)
    ties_override = None if args.ties == "auto" else (args.ties == "on")

    wanted = ("mww", "ipw", "msi", "dr") if args.estimator == "all" \
        else (args.estimator,)
    report = {"input": args.input,
              "data": {"n": ds.n, "n1": ds.n1, "n0": ds.n0, "p": ds.p,
                       "rejected_rows": ds.n_rejected_rows},
              "alpha": args.alpha,
              "estimates": {}}
    for name in wanted:
        if name == "mww":
            est = mww_estimate(ds)
            z = (est.delta_hat - 0.5) / est.se if est.se else None
            from .special import std_normal_cdf
            p = 2.0 * (1.0 - std_normal_cdf(abs(z))) if z is not None else None
            report["estimates"]["mww"] = {
                "delta": est.delta_hat, "se": est.se, "p_value": p,
                "notes": est.notes}
            continue
        spec = FrmSpec(family=name, link=args.link, clip_eps=args.clip_eps,
                       ties=ties_override)
        fit = solve_ugee(ds, spec)
        wt = wald_test(fit, "delta", 0.5, args.alpha)
        entry = {"delta": fit.delta, "se": wt.se, "z": wt.z,
                 "p_value": wt.p_value, "ci": [wt.ci_lo, wt.ci_hi],
                 "reject": wt.reject, "fit": fit.to_report()}
        if name == "dr":
            entry["delta_plain"] = fit.delta_plain
        if name == "ipw" and args.hajek:
            from .propensity import fit_propensity
            pm = fit_propensity(ds, clip_eps=args.clip_eps)
            entry["delta_hajek"] = ipw_estimate(ds, pm, hajek=True).delta_hat
        report["estimates"][name] = entry

    if args.format == "json":
        _emit(json.dumps(report, sort_keys=True, indent=2), args.output)
    else:
        lines = [f"n={ds.n} (treated {ds.n1}, control {ds.n0})"]
        for name, entry in report["estimates"].items():
            se = entry.get("se")
            se_s = f"{se:.4f}" if se is not None else "-"
            pv = entry.get("p_value")
            pv_s = f"{pv:.4f}" if pv is not None else "-"
            lines.append(f"{name.upper():>4}  delta={entry['delta']:.4f}  "
                         f"se={se_s}  p={pv_s}")
        _emit("\n".join(lines), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise ValidationError("--seed is required for simulate "
                              "(no silent nondeterminism)")
    if args.reps < 1:
        raise ValidationError("--reps must be at least 1")
    if args.scenario:
        if not os.path.exists(args.scenario):
            raise _IoFailure(f"scenario file not found: {args.scenario}")
        with open(args.scenario, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"scenario file is not valid JSON: {exc}") from None
        raw["seed"] = args.seed
        bundle = [("scenario", ScenarioConfig.from_json_dict(raw))]
    else:
        if args.n is None:
            raise ValidationError("--n is required with --preset")
        bundle = PRESETS[args.preset](args.n, args.reps, args.seed)

    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    summaries = {name: run_study(cfg, threads=threads) for name, cfg in bundle}

    if args.format == "json":
        payload = {name: s.to_json_dict() for name, s in summaries.items()}
        _emit(json.dumps(payload, sort_keys=True, indent=2), args.output)
    else:
        blocks = []
        for name, s in summaries.items():
            blocks.append(f"[{name}]")
            blocks.append(render_table(s))
        _emit("\n".join(blocks), args.output)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "estimate":
            return cmd_estimate(args)
        return cmd_simulate(args)
    except _IoFailure as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EstimabilityError as exc:
        print(f"error (estimability): {exc}", file=sys.stderr)
        return EXIT_ESTIMABILITY
    except (ConvergenceError, SeparationError, SingularDesignError) as exc:
        print(f"error (convergence): {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except MwwdrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
