"""Command-line interface.

Subcommands ``fit``, ``bootstrap``, ``gof``, ``simulate`` and ``calibrate``.
Each writes a CSV file whose ``#`` header holds the tool version, the config
echo and the seed, plus a ``<out>.json`` metadata file with the same echo and
run summaries. Outputs contain no timestamps and do not depend on
``--workers``, so a rerun with the same config reproduces them byte for byte.

Exit codes: 0 ok, 1 usage, 2 input data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from .aft import fit_gehan
from .baselines import SubstitutionRule, fit_substitution
from .bootstrap import bootstrap, wald_interval
from .data import NEG_LOG, load_csv
from .errors import ConfigurationError, ConditionNineWarning, DataError, LodError
from .family import get_family
from .gof import export_gof_plot_data, score_process
from .simulation import (SimScenario, calibrate_limit, conditional_mean_oracle,
                         generate_dataset, run_study)
from .twostage import fit_two_stage

BASELINES = ("complete_case", "sub_L", "sub_Lsqrt2", "sub_zero", "sub_condmean")
_RULES = {"sub_L": "at_L", "sub_Lsqrt2": "at_L_over_sqrt2", "sub_zero": "at_zero",
          "sub_condmean": "conditional_mean"}
# flags that never change results
_NOT_ECHOED = {"workers", "out", "func"}


class UsageError(ConfigurationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------------------
# output helpers


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_ECHOED:
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def _csv_text(args, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# lodreg {__version__}\n")
    buf.write(f"# config: {json.dumps(_echo(args), sort_keys=True)}\n")
    buf.write(f"# seed: {args.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else _num(c) for c in row])
    return buf.getvalue()


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".lodreg-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_outputs(args, files: dict, meta: dict) -> None:
    """Write every file only after all results exist, so failures leave nothing."""
    meta = {"tool": "lodreg", "version": __version__, "seed": args.seed,
            "config": _echo(args), **meta}
    files = dict(files)
    files[args.out + ".json"] = json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n"
    for path, text in files.items():
        _atomic_write(path, text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


# ----------------------------------------------------------------------------
# argument handling


def _parse_schema(tokens) -> dict:
    schema = {}
    for tok in tokens or ():
        name, sep, col = tok.partition("=")
        if not sep or not name or not col:
            raise UsageError(f"schema entries look like role=column, got {tok!r}")
        if name not in ("y", "z", "x", "detected"):
            raise UsageError(f"unknown schema role {name!r}")
        schema[name] = col
    for role in ("y", "z"):
        if role not in schema:
            raise UsageError(f"--schema needs a {role}=column entry")
    return schema


def _parse_methods(tokens):
    methods = []
    for tok in tokens or ():
        name, sep, value = tok.partition("=")
        if name == "two_stage":
            continue
        if name not in BASELINES:
            raise UsageError(f"unknown method {name!r}")
        if name == "sub_condmean":
            if not sep:
                raise UsageError("sub_condmean needs a value: sub_condmean=VALUE")
            try:
                value = float(value)
            except ValueError:
                raise UsageError(f"bad sub_condmean value {value!r}") from None
            methods.append((name, value))
        else:
            if sep:
                raise UsageError(f"method {name!r} takes no value")
            methods.append((name, None))
    return methods


def _load(args):
    schema = _parse_schema(args.schema)
    try:
        return load_csv(args.input, schema, args.limit)
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from exc


def _term_names(data) -> list[str]:
    names = list(data.x_names) if data.x_names else [f"x{j + 1}" for j in range(data.p)]
    return ["intercept", *names, "z"]


# ----------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> None:
    data = _load(args)
    family = get_family(args.family)
    methods = _parse_methods(args.method)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionNineWarning)
        fit = fit_two_stage(data, family, tau=args.tau)
    terms = _term_names(data)
    rows = []
    for name, est in zip(terms, fit.theta):
        rows.append(["two_stage", name, est])
    for name, est in zip(terms, fit.complete_case.theta):
        rows.append(["complete_case", name, est])
    for method, value in methods:
        if method == "complete_case":
            continue
        rule = SubstitutionRule(_RULES[method], value)
        est = fit_substitution(data, rule, family).theta
        for name, e in zip(terms, est):
            rows.append([method, name, e])
    for name, a in zip(terms[1:-1], fit.aft.alpha):
        rows.append(["aft", name, a])
    rows.append(["aft", "gehan_objective", fit.aft.gehan_objective])
    rows.append(["aft", "subgradient_norm", fit.aft.subgradient_norm])
    rows.append(["km", "n_jumps", len(fit.eta.jump_points)])
    rows.append(["km", "total_mass", fit.eta.total_mass])
    rows.append(["km", "tau", fit.nuisance.tau])
    rows.append(["pseudo", "phi_hat", fit.nuisance.phi_hat])
    rows.append(["pseudo", "iterations", fit.pseudo.iterations])
    rows.append(["pseudo", "score_norm", fit.pseudo.score_norm])
    rows.append(["pseudo", "floored_subjects", fit.pseudo.floored_subjects])
    text = _csv_text(args, ["block", "name", "value"], rows)
    meta = {"n": data.n, "censoring_rate": data.censoring_rate,
            "floored_subjects": fit.pseudo.floored_subjects,
            "km_jumps": fit.eta.jump_points, "km_masses": fit.eta.masses}
    _write_outputs(args, {args.out: text}, meta)


def cmd_bootstrap(args) -> None:
    data = _load(args)
    family = get_family(args.family)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionNineWarning)
        fit = fit_two_stage(data, family, tau=args.tau)
        res = bootstrap(data, family, n_boot=args.n_boot, seed=args.seed,
                        theta_hat=fit.theta, workers=args.workers, tau=args.tau)
    ci90 = wald_interval(res, 0.90)
    ci95 = wald_interval(res, 0.95)
    rows = []
    for j, name in enumerate(_term_names(data)):
        rows.append([name, res.theta_hat[j], res.boot_sd[j],
                     ci90[j, 0], ci90[j, 1], ci95[j, 0], ci95[j, 1]])
    header = ["term", "estimate", "boot_sd", "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi"]
    meta = {"n_boot": res.n_boot, "n_failed": res.n_failed, "warning": res.warning,
            "boot_cov": res.boot_cov}
    _write_outputs(args, {args.out: _csv_text(args, header, rows)}, meta)


def cmd_gof(args) -> None:
    data = _load(args)
    names = list(data.x_names)
    wanted = args.covariate or names
    for name in wanted:
        if name not in names:
            raise UsageError(f"unknown covariate {name!r}")
    if args.plot_data and len(wanted) != 1:
        raise UsageError("--plot-data needs exactly one --covariate")
    fit = fit_gehan(data)
    rows, processes = [], []
    for name in wanted:
        proc = score_process(data, fit, names.index(name), n_sim=args.n_sim, seed=args.seed)
        processes.append(proc)
        rows.append([name, proc.observed_sup, proc.p_value])
    files = {args.out: _csv_text(args, ["covariate", "sup_norm", "p_value"], rows)}
    if args.plot_data:
        cols = export_gof_plot_data(processes[0], args.n_paths)
        keys = list(cols)
        table = [[cols[k][i] for k in keys] for i in range(len(cols["x"]))]
        files[args.plot_data] = _csv_text(args, keys, table)
    meta = {"alpha": fit.alpha, "p_values": dict(zip(wanted, [p.p_value for p in processes]))}
    _write_outputs(args, files, meta)


def _scenario(args) -> SimScenario:
    return replace(SimScenario(), family=args.family, n=args.n,
                   n_reps=getattr(args, "reps", 1), n_boot=getattr(args, "n_boot", 0),
                   target_censoring=args.censoring, seed=args.seed)


def cmd_simulate(args) -> None:
    scenario = _scenario(args)
    c, limit = calibrate_limit(scenario, args.oracle_draws)
    if args.emit_dataset is not None:
        sim = generate_dataset(scenario, c, args.emit_dataset)
        d = sim.data
        z = np.where(d.detected, NEG_LOG.forward(d.v), np.nan)
        rows = [[d.y[i], d.x[i, 0], d.x[i, 1], "" if np.isnan(z[i]) else z[i]]
                for i in range(d.n)]
        text = _csv_text(args, ["y", "x1", "x2", "z"], rows)
        meta = {"c": c, "limit": limit, "replicate": args.emit_dataset,
                "censoring_rate": d.censoring_rate}
        _write_outputs(args, {args.out: text}, meta)
        return
    cm = conditional_mean_oracle(scenario, c, args.oracle_draws)
    report = run_study(scenario, c, cm, workers=args.workers)
    table = report.rows()
    header = list(table[0])
    rows = [[r[k] for k in header] for r in table]
    meta = {"c": c, "limit": limit, "conditional_mean": cm,
            "mean_censoring": float(report.censoring.mean()),
            "floored_subjects": int(report.floored.sum()),
            "summary": report.to_text()}
    _write_outputs(args, {args.out: _csv_text(args, header, rows)}, meta)


def cmd_calibrate(args) -> None:
    scenario = _scenario(args)
    c, limit = calibrate_limit(scenario, args.oracle_draws)
    cm = conditional_mean_oracle(scenario, c, args.oracle_draws)
    rows = [["c", c], ["limit", limit], ["conditional_mean", cm]]
    _write_outputs(args, {args.out: _csv_text(args, ["quantity", "value"], rows)}, {})


# ----------------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lodreg",
                     description="GLM regression with a covariate censored at a detection limit.")
    parser.add_argument("--version", action="version", version=f"lodreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data_input=True):
        if data_input:
            p.add_argument("--input", required=True, help="CSV file")
            p.add_argument("--schema", nargs="+", required=True, metavar="ROLE=COLUMN",
                           help="y=COL z=COL [x=COL1,COL2] [detected=COL]")
            p.add_argument("--limit", type=float, required=True,
                           help="detection limit on the raw covariate scale")
        p.add_argument("--family", default="gaussian",
                       choices=["gaussian", "bernoulli", "poisson"])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=_positive_int, default=1)
        p.add_argument("--out", required=True, help="output CSV; metadata goes to OUT.json")

    p = sub.add_parser("fit", help="two-stage fit with optional baselines")
    common(p)
    p.add_argument("--tau", type=float, default=None,
                   help="residual-scale truncation (default: largest detected residual)")
    p.add_argument("--method", action="append", default=[],
                   help="baseline to report: " + ", ".join(BASELINES[:-1])
                   + ", sub_condmean=VALUE (repeatable)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="bootstrap covariance and Wald intervals")
    common(p)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--n-boot", type=int, default=200)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("gof", help="martingale-residual goodness of fit for the AFT model")
    common(p)
    p.add_argument("--covariate", action="append", default=[],
                   help="x column to order residuals by (repeatable; default all)")
    p.add_argument("--n-sim", type=int, default=500)
    p.add_argument("--plot-data", default=None, help="write x, observed, sim_k columns here")
    p.add_argument("--n-paths", type=int, default=50)
    p.set_defaults(func=cmd_gof)

    for name, func, text in (("simulate", cmd_simulate, "Monte Carlo study"),
                             ("calibrate", cmd_calibrate, "detection limit for a target censoring rate")):
        p = sub.add_parser(name, help=text)
        common(p, data_input=False)
        p.add_argument("--n", type=int, default=400)
        p.add_argument("--censoring", type=float, default=0.30)
        p.add_argument("--oracle-draws", type=_positive_int, default=10**7)
        if name == "simulate":
            p.add_argument("--reps", type=_positive_int, default=200)
            p.add_argument("--n-boot", type=int, default=100,
                           help="bootstrap replicates per data set (0 skips the bootstrap)")
            p.add_argument("--emit-dataset", type=int, default=None, metavar="REP",
                           help="write replicate REP as a CSV data file instead of running the study")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with np.errstate(all="ignore"):
            args.func(args)
    except LodError as exc:
        print(f"lodreg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"lodreg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
