"""Command-line front end: CSV ingestion and the fit / bootstrap / select-l /
select-model / simulate pipelines with machine-readable, re-runnable outputs.

Every artifact embeds the effective configuration, seed, and tool version
(and nothing volatile), so identical invocations produce byte-identical
files regardless of --threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .bootstrap import BootstrapMethod, run
from .data import Dataset, ModelSpec, Term, back_transform, make_dataset
from .errors import (
    AllRowsDropped,
    LrbootError,
    MissingColumn,
    ParseError,
    UsageError,
)
from .glm import fit_ordinal, fit_qmle
from .neighborhood import select_size
from .rng import substream
from .selection import CandidateSet, rank_models
from .simlab import (
    default_neighborhood_size,
    pseudo_truth,
    report_to_csv,
    run_experiment,
)

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


# ---------------------------------------------------------------------------
# ingestion


@dataclass
class IngestInfo:
    n_rows_read: int
    n_rows_dropped: int
    columns: tuple
    categorical_levels: dict


def _read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ParseError(f"{path}: empty file")
            rows = [row for row in reader if row]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    return [h.strip() for h in header], rows


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in _MISSING_TOKENS


def ingest(
    path,
    response: str,
    base_columns: list,
    categorical: set,
):
    """Load a CSV into a Dataset: continuous columns standardized, categorical
    tokens dummy-encoded (first level by sort order is the reference), rows
    with any missing cell dropped and counted."""
    header, rows = _read_csv(path)
    for name in [response, *base_columns]:
        if name not in header:
            raise MissingColumn(f"column {name!r} not in header {header}")
    idx = {name: header.index(name) for name in [response, *base_columns]}

    kept, dropped = [], 0
    for row in rows:
        if any(_is_missing(row[idx[name]]) for name in idx):
            dropped += 1
            continue
        kept.append(row)
    if not kept:
        raise AllRowsDropped(f"{path}: every row had missing cells")

    def parse_float(cell, r, name):
        try:
            return float(cell)
        except ValueError as exc:
            raise ParseError(
                f"{path}: row {r + 2}, column {name!r}: cannot parse {cell!r}"
            ) from exc

    y = np.array(
        [parse_float(row[idx[response]], r, response) for r, row in enumerate(kept)]
    )

    cols, names, meta = [], [], []
    levels_map = {}
    for name in base_columns:
        raw_cells = [row[idx[name]].strip() for row in kept]
        if name in categorical:
            levels = sorted(set(raw_cells))
            levels_map[name] = levels
            if len(levels) < 2:
                raise ParseError(f"categorical column {name!r} has one level")
            for level in levels[1:]:
                cols.append(np.array([1.0 if c == level else 0.0 for c in raw_cells]))
                names.append(name if len(levels) == 2 else f"{name}={level}")
                meta.append("categorical")
        else:
            cols.append(
                np.array(
                    [parse_float(c, r, name) for r, c in enumerate(raw_cells)]
                )
            )
            names.append(name)
            meta.append("continuous")
    ds = make_dataset(y, np.column_stack(cols), column_meta=meta, column_names=names)
    info = IngestInfo(
        n_rows_read=len(rows),
        n_rows_dropped=dropped,
        columns=tuple(names),
        categorical_levels=levels_map,
    )
    return ds, info


def emit_csv(ds: Dataset, response_name: str, path) -> None:
    """Write the raw covariates and response back out (round-trips ingest)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([response_name, *ds.column_names])
        for i in range(ds.n):
            w.writerow([repr(float(ds.y[i]))] + [repr(float(v)) for v in ds.X_raw[i]])


# ---------------------------------------------------------------------------
# term parsing


def parse_terms(spec_str: str, column_names) -> tuple:
    """Parse 'x1,x2^2,x1*x2,exp(x1)' into Term tuples against encoded names."""
    lookup = {name: j for j, name in enumerate(column_names)}

    def col_of(name):
        name = name.strip()
        if name not in lookup:
            raise MissingColumn(
                f"predictor {name!r} is not an encoded column; have {list(lookup)}"
            )
        return lookup[name]

    terms = []
    for token in [t.strip() for t in spec_str.split(",") if t.strip()]:
        if token.startswith("exp(") and token.endswith(")"):
            terms.append(Term("exp", col_of(token[4:-1])))
        elif "*" in token:
            a, b = token.split("*", 1)
            terms.append(Term("interaction", col_of(a), col2=col_of(b)))
        elif "^" in token:
            name, power = token.rsplit("^", 1)
            try:
                p = int(power)
            except ValueError as exc:
                raise UsageError(f"bad power in term {token!r}") from exc
            terms.append(Term("power", col_of(name), power=p))
        else:
            terms.append(Term("raw", col_of(token)))
    if not terms:
        raise UsageError("empty predictor specification")
    return tuple(terms)


def base_names_of(spec_str: str, categorical: set) -> list:
    """Base CSV columns mentioned by a term string (before encoding)."""
    seen = []
    for token in [t.strip() for t in spec_str.split(",") if t.strip()]:
        if token.startswith("exp(") and token.endswith(")"):
            parts = [token[4:-1]]
        elif "*" in token:
            parts = token.split("*", 1)
        elif "^" in token:
            parts = [token.rsplit("^", 1)[0]]
        else:
            parts = [token]
        for p in [q.strip() for q in parts]:
            base = p.split("=", 1)[0] if "=" in p else p
            if base not in seen:
                seen.append(base)
    return seen


# ---------------------------------------------------------------------------
# method tokens


def parse_method(token: str, residual: str | None, l: int | None) -> BootstrapMethod:
    token = token.strip().lower()
    if token.startswith("lrb-"):
        return BootstrapMethod.lrb(token[4:], l)
    if token == "lrb":
        if residual is None:
            raise UsageError("lrb needs --residual")
        return BootstrapMethod.lrb(residual, l)
    if token.startswith("classical-"):
        return BootstrapMethod.classical_residual(token[10:])
    if token == "classical":
        if residual is None:
            raise UsageError("classical needs --residual")
        return BootstrapMethod.classical_residual(residual)
    if token in ("local-response", "local_response"):
        return BootstrapMethod.local_response(l)
    if token == "parametric":
        return BootstrapMethod.parametric()
    if token == "pairwise":
        return BootstrapMethod.pairwise()
    if token == "wild":
        return BootstrapMethod.wild()
    if token == "multiplier":
        return BootstrapMethod.multiplier()
    raise UsageError(f"unknown bootstrap method {token!r}")


# ---------------------------------------------------------------------------
# config file


def load_config(path) -> dict:
    """key=value lines, # comments."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return out


# options whose default is None but whose values must be integers
_INT_VALUED = {"threads", "m"}


def _coerce(key: str, value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if like is None and key in _INT_VALUED:
        return int(value)
    return value


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\nvalid flags: {self.format_usage().strip()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="lrboot", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p, data=True):
        p.add_argument("--config", help="key=value config file; flags override")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--output", default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        if data:
            p.add_argument("--input", help="CSV file with a header row")
            p.add_argument("--response", help="response column name")
            p.add_argument(
                "--predictors",
                help="comma list of terms: name, name^k, a*b, exp(name)",
            )
            p.add_argument(
                "--categorical", default="", help="comma list of categorical columns"
            )
            p.add_argument("--family", default="binomial")
            p.add_argument("--link", default="probit")
            p.add_argument("--no-intercept", action="store_true")
            p.add_argument(
                "--ordinal-categories", type=int, default=0, help="J for ordinal"
            )

    p_fit = sub.add_parser("fit", help="QMLE fit")
    common(p_fit)

    p_boot = sub.add_parser("bootstrap", help="bootstrap SE/CI/p-values")
    common(p_boot)
    p_boot.add_argument("--method", default="lrb")
    p_boot.add_argument("--residual", default=None)
    p_boot.add_argument("--l", default="auto", help="neighborhood size or 'auto'")
    p_boot.add_argument("--B", type=int, default=500)
    p_boot.add_argument("--alpha", type=float, default=0.05)
    p_boot.add_argument("--keep-replicates", action="store_true")

    p_sel_l = sub.add_parser("select-l", help="neighborhood-size selection")
    common(p_sel_l)
    p_sel_l.add_argument("--residual", default=None)
    p_sel_l.add_argument("--grid", default="2,4,6,8,10,12,14,16")
    p_sel_l.add_argument("--K", type=int, default=20)
    p_sel_l.add_argument("--m", type=int, default=None)
    p_sel_l.add_argument("--B-inner", type=int, default=200)
    p_sel_l.add_argument("--delta", type=float, default=0.5)

    p_sel_m = sub.add_parser("select-model", help="bootstrap model selection")
    common(p_sel_m)
    p_sel_m.add_argument(
        "--model",
        action="append",
        default=None,
        help="label=family:link:terms (repeatable)",
    )
    p_sel_m.add_argument("--criterion", choices=("L", "Gamma"), default="L")
    p_sel_m.add_argument("--method", default="lrb")
    p_sel_m.add_argument("--residual", default=None)
    p_sel_m.add_argument("--l", default=None)
    p_sel_m.add_argument("--B", type=int, default=500)
    p_sel_m.add_argument("--split-half", action="store_true")

    p_sim = sub.add_parser("simulate", help="scenario experiments")
    common(p_sim, data=False)
    p_sim.add_argument("--scenario", required=False)
    p_sim.add_argument("--methods", default="lrb-surrogate,parametric")
    p_sim.add_argument("--residual", default=None)
    p_sim.add_argument("--l", default=None)
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--B", type=int, default=200)
    p_sim.add_argument("--reps", type=int, default=50)
    p_sim.add_argument("--truth-reps", type=int, default=2000)
    p_sim.add_argument("--levels", default="0.95,0.90,0.75")
    p_sim.add_argument(
        "--scenario-param", action="append", default=None, help="name=value"
    )
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("LRB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"LRB_THREADS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


def _provenance(args, command: str) -> dict:
    # threads and output location never change the numbers, so they stay out
    # of the echo and artifacts stay byte-identical across thread counts
    skip = ("config", "output", "threads")
    cfg = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in skip and v is not None and not k.startswith("_")
    }
    return {"tool": "lrboot", "version": __version__, "command": command, "config": cfg}


def _load_dataset(args):
    for flag in ("input", "response", "predictors"):
        if getattr(args, flag, None) is None:
            raise UsageError(f"--{flag} is required for this command")
    categorical = {c.strip() for c in args.categorical.split(",") if c.strip()}
    base = base_names_of(args.predictors, categorical)
    ds, info = ingest(args.input, args.response, base, categorical)
    terms = parse_terms(args.predictors, ds.column_names)
    ordinal = args.ordinal_categories and args.ordinal_categories >= 3
    spec = ModelSpec(
        family="ordinal" if ordinal else args.family,
        link=args.link,
        predictor_terms=terms,
        include_intercept=not args.no_intercept and not ordinal,
        n_categories=args.ordinal_categories if ordinal else 0,
    )
    return ds, spec, info


def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _fit_payload(fit, info, args, command):
    raw = back_transform(fit.beta_hat.copy(), fit.design)
    payload = {
        "coefficients": {
            name: float(v) for name, v in zip(fit.coef_names, fit.coef)
        },
        "coefficients_raw_scale": {
            name: float(v)
            for name, v in zip(fit.design.coef_names, raw)
        },
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "grad_norm": fit.grad_norm,
        "converged": fit.converged,
        "n_rows_dropped": info.n_rows_dropped,
        "provenance": _provenance(args, command),
    }
    if fit.alpha_hat is not None:
        payload["cutpoints"] = [float(a) for a in fit.alpha_hat]
    return payload


def _cmd_fit(args) -> int:
    ds, spec, info = _load_dataset(args)
    fit = fit_ordinal(ds, spec) if spec.is_ordinal else fit_qmle(ds, spec)
    _write_json(args.output, _fit_payload(fit, info, args, "fit"))
    return 0


def _cmd_bootstrap(args) -> int:
    ds, spec, info = _load_dataset(args)
    n_threads = _threads(args)
    trace = None
    if str(args.l).lower() == "auto":
        if args.method.startswith("lrb") or args.method == "local-response":
            kind = args.residual or (
                args.method[4:] if args.method.startswith("lrb-") else None
            )
            if kind is None:
                raise UsageError("--l auto needs a residual kind")
            trace = select_size(
                ds, spec, kind, seed=args.seed, n_threads=n_threads
            )
            l = trace.final_l
        else:
            l = None
    else:
        l = int(args.l)
    method = parse_method(args.method, args.residual, l)
    out = run(
        ds, spec, method, B=args.B, alpha=args.alpha, seed=args.seed,
        n_threads=n_threads,
    )
    if args.format == "csv":
        path = args.output or "bootstrap.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(out.summary_rows()[0]))
            w.writeheader()
            for row in out.summary_rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return 0
    payload = out.to_json_dict(include_replicates=args.keep_replicates)
    payload["provenance"].update(_provenance(args, "bootstrap"))
    payload["n_rows_dropped"] = info.n_rows_dropped
    if trace is not None:
        payload["size_selection"] = trace.to_json_dict()
    _write_json(args.output, payload)
    return 0


def _cmd_select_l(args) -> int:
    ds, spec, info = _load_dataset(args)
    if args.residual is None:
        raise UsageError("--residual is required for select-l")
    grid = tuple(int(g) for g in args.grid.split(",") if g.strip())
    trace = select_size(
        ds,
        spec,
        args.residual,
        grid=grid,
        K=args.K,
        m=args.m,
        B_inner=args.B_inner,
        delta=args.delta,
        seed=args.seed,
        n_threads=_threads(args),
    )
    payload = trace.to_json_dict()
    payload["provenance"] = _provenance(args, "select-l")
    payload["n_rows_dropped"] = info.n_rows_dropped
    _write_json(args.output, payload)
    return 0


def _parse_model_spec(token: str, column_names) -> ModelSpec:
    if "=" not in token:
        raise UsageError(f"--model needs label=family:link:terms, got {token!r}")
    label, rest = token.split("=", 1)
    parts = rest.split(":")
    if len(parts) != 3:
        raise UsageError(f"--model needs label=family:link:terms, got {token!r}")
    family, link, terms_str = parts
    return ModelSpec(
        family=family.strip(),
        link=link.strip(),
        predictor_terms=parse_terms(terms_str, column_names),
        label=label.strip(),
    )


def _cmd_select_model(args) -> int:
    ds, spec, info = _load_dataset(args)
    if not args.model or len(args.model) < 2:
        raise UsageError("need at least two --model entries")
    models = tuple(_parse_model_spec(tok, ds.column_names) for tok in args.model)
    holdout = None
    if args.split_half:
        perm = substream(args.seed, "split-half").permutation(ds.n)
        half = ds.n // 2
        select_rows = np.sort(perm[:half])
        holdout = np.sort(perm[half:])
        ds = ds.with_rows(select_rows)
    l = int(args.l) if args.l is not None else max(
        2, int(np.ceil(ds.n ** (1.0 / 3.0)))
    )
    method = parse_method(args.method, args.residual, l)
    cands = CandidateSet(models, ds, method, B=args.B)
    report = rank_models(cands, args.criterion, seed=args.seed, n_threads=_threads(args))
    payload = report.to_json_dict()
    payload["provenance"].update(_provenance(args, "select-model"))
    payload["n_rows_dropped"] = info.n_rows_dropped
    if holdout is not None:
        payload["holdout_rows"] = [int(i) + 1 for i in holdout]
    if args.format == "csv" or args.output is None:
        print(report.to_table())
    if args.output:
        _write_json(args.output, payload)
    return 0


def _cmd_simulate(args) -> int:
    if not args.scenario:
        raise UsageError("--scenario is required for simulate")
    params = {}
    for tok in args.scenario_param or []:
        if "=" not in tok:
            raise UsageError(f"--scenario-param needs name=value, got {tok!r}")
        k, v = tok.split("=", 1)
        try:
            params[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            params[k.strip()] = v.strip()
    n_threads = _threads(args)
    truth = pseudo_truth(
        args.scenario, n=args.n, reps=args.truth_reps, seed=args.seed,
        params=params or None,
    )
    l = int(args.l) if args.l is not None else default_neighborhood_size(
        args.scenario, truth.n
    )
    methods = [
        parse_method(tok, args.residual, l) for tok in args.methods.split(",")
    ]
    levels = tuple(float(v) for v in args.levels.split(","))
    report = run_experiment(
        args.scenario,
        methods,
        truth,
        B=args.B,
        replications=args.reps,
        levels=levels,
        seed=args.seed,
        params=params or None,
        n_threads=n_threads,
    )
    path = args.output or "simulate.csv"
    report_to_csv(report, path)
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "bootstrap": _cmd_bootstrap,
    "select-l": _cmd_select_l,
    "select-model": _cmd_select_model,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(
                f"missing subcommand; choose one of {', '.join(_COMMANDS)}"
            )
        if getattr(args, "config", None):
            config = load_config(args.config)
            defaults = vars(args)
            for key, value in config.items():
                if key not in defaults:
                    raise UsageError(f"unknown config key {key!r}")
                # flags given on the command line override config values
                if f"--{key.replace('_', '-')}" not in argv:
                    defaults[key] = _coerce(key, value, defaults[key])
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except LrbootError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
