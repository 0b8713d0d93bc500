"""Command-line interface: ``betasel fit | select | simulate | envelope``.

Reports are JSON (floats written with 17 significant digits) or CSV. Every
failure prints ``{"error": {"category": ..., "message": ...}}`` to stderr and
exits with a code specific to its category.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import stats

from .criteria import CriterionKind
from .diagnostics import pseudo_r2, residuals_w2, simulated_envelope
from .errors import (BetaselError, ConvergenceError, InputOutputError, ParseError,
                     ValidationError)
from .links import LinkKind
from .model import Dataset, ModelSpec, fit
from .selection import (DISP_ONLY, EXHAUSTIVE, INTERCEPT, JOINT, MEAN_ONLY, SEQUENTIAL,
                        TWO_STEP, CandidateSet, select, select_two_step)
from .simulation import PRESETS, run_experiment

EXIT_CODES = {"parse": 3, "validation": 4, "convergence": 5, "quorum": 6, "io": 7}
BUNDLED = "foodexpenditure.csv"
BUNDLED_Y = "food/income"
_DERIVE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*([A-Za-z_][\w.]*)\s*(\*|\^)\s*([\w.]+)\s*$")


# ---------------------------------------------------------------- ingestion

def read_table(path) -> tuple:
    """Header names and a float matrix from a numeric CSV file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputOutputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path} is not UTF-8 text") from None
    return parse_table(text)


def parse_table(text: str) -> tuple:
    reader = csv.reader(io.StringIO(text))
    header = None
    rows = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if len(set(header)) != len(header):
                raise ParseError("duplicate column names in header", line)
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
        try:
            rows.append([float(c) for c in row])
        except ValueError:
            raise ParseError("non-numeric field", line) from None
    if header is None:
        raise ParseError("file is empty (no header row)")
    body = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, body


def _apply_derive(header, body, rules):
    header = list(header)
    cols = [body[:, j] for j in range(body.shape[1])]
    for rule in rules:
        m = _DERIVE.match(rule)
        if not m:
            raise ValidationError(f"cannot parse derive rule {rule!r}; use name=a*b or name=a^2")
        name, a, op, b = m.groups()
        if name in header:
            raise ValidationError(f"derived column {name!r} already exists")
        if a not in header:
            raise ValidationError(f"unknown column {a!r} in derive rule")
        if op == "*":
            if b not in header:
                raise ValidationError(f"unknown column {b!r} in derive rule")
            new = cols[header.index(a)] * cols[header.index(b)]
        else:
            try:
                power = int(b)
            except ValueError:
                raise ValidationError(f"exponent must be an integer in {rule!r}") from None
            new = cols[header.index(a)] ** power
        header.append(name)
        cols.append(new)
    return header, np.column_stack(cols) if cols else body


def ingest_csv(path, y: str = None, derive=()) -> Dataset:
    """Read a CSV file into a :class:`Dataset`.

    ``y`` names the response column, or a ratio ``"num/den"``. All other
    columns (and derived ones) become candidate covariates; with a ratio the
    numerator column is dropped. Without ``y`` a column named ``y`` is used.
    """
    header, body = read_table(path)
    header, body = _apply_derive(header, body, derive)
    y = y or "y"
    if "/" in y:
        num, den = (s.strip() for s in y.split("/", 1))
        for c in (num, den):
            if c not in header:
                raise ValidationError(f"unknown column {c!r} in response ratio")
        with np.errstate(divide="ignore", invalid="ignore"):
            resp = body[:, header.index(num)] / body[:, header.index(den)]
        drop = num
    else:
        if y not in header:
            raise ValidationError(f"response column {y!r} not found")
        resp = body[:, header.index(y)]
        drop = y
    keep = [j for j, h in enumerate(header) if h != drop]
    return Dataset(resp, body[:, keep], tuple(header[j] for j in keep))


def bundled_path() -> str:
    return str(resources.files("betasel") / "data" / BUNDLED)


# ---------------------------------------------------------------- JSON output

def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    if re.fullmatch(r"-?\d+", text):
        text += ".0"
    return text


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written using 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
               for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, _level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return json.dumps(str(obj))


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    command: str
    data_path: str | None = None
    y_column: str | None = None
    derive: list = field(default_factory=list)
    mean_columns: list = field(default_factory=list)
    disp_columns: list = field(default_factory=list)
    mean_link: LinkKind = LinkKind.LOGIT
    disp_link: LinkKind = LinkKind.LOGIT
    scheme: str = JOINT
    nesting: str = SEQUENTIAL
    mean_pool: list | None = None
    disp_pool: list | None = None
    criteria: list = field(default_factory=lambda: ["aic"])
    W: int = 200
    seed: int = 0
    threads: int = 1
    output: str | None = None
    fmt: str = "json"
    diagnostics: bool = False
    E: int = 100
    dgp: str = "model7"
    n: int = 40
    reps: int = 200
    rep_offset: int = 0
    mode: str = MEAN_ONLY


def _names(text):
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _threads(value):
    if value is None:
        value = os.environ.get("BETASEL_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise ValidationError(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise ValidationError("thread count must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="betasel", description="Varying-dispersion beta regression "
                                "fitting and bootstrap model selection.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help="CSV file (default: bundled food-expenditure data)")
            sp.add_argument("--y", help="response column or ratio num/den "
                            f"(default for bundled data: {BUNDLED_Y})")
            sp.add_argument("--derive", action="append", default=[], metavar="RULE",
                            help="derived column, name=a*b or name=a^2 (repeatable)")
            sp.add_argument("--mean-link", default="logit", choices=[k.value for k in LinkKind])
            sp.add_argument("--disp-link", default="logit", choices=[k.value for k in LinkKind])
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", default=None, help="worker threads (env BETASEL_THREADS)")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")

    f = sub.add_parser("fit", help="fit one model")
    common(f)
    f.add_argument("--mean", default="", help="mean covariates (comma separated)")
    f.add_argument("--disp", default="", help="dispersion covariates (comma separated)")
    f.add_argument("--diagnostics", action="store_true",
                   help="add residuals, leverage and a simulated envelope")
    f.add_argument("--e", dest="E", type=int, default=100, help="envelope simulations")

    s = sub.add_parser("select", help="select covariates under a criterion")
    common(s)
    s.add_argument("--scheme", default="joint",
                   choices=["joint", "mean_only", "disp_only", "two-step", "two_step"])
    s.add_argument("--nesting", choices=[SEQUENTIAL, EXHAUSTIVE], default=None,
                   help="default: exhaustive for two-step, sequential otherwise")
    s.add_argument("--mean-pool", help="ordered mean candidates (default: all covariates)")
    s.add_argument("--disp-pool", help="ordered dispersion candidates (default: all covariates)")
    s.add_argument("--mean", default="", help="fixed mean covariates for disp_only")
    s.add_argument("--disp", default="", help="fixed dispersion covariates for mean_only")
    s.add_argument("--criterion", default="aic", help="criterion name, comma list or 'all'")
    s.add_argument("--w", dest="W", type=int, default=200, help="bootstrap replicates")

    m = sub.add_parser("simulate", help="Monte Carlo selection frequencies")
    common(m, data=False)
    m.add_argument("--dgp", default="model7", choices=sorted(PRESETS))
    m.add_argument("--n", type=int, default=40)
    m.add_argument("--reps", type=int, default=200)
    m.add_argument("--rep-offset", type=int, default=0)
    m.add_argument("--w", dest="W", type=int, default=100)
    m.add_argument("--mode", default="mean_only", choices=[JOINT, MEAN_ONLY, DISP_ONLY])
    m.add_argument("--criteria", default="all")

    e = sub.add_parser("envelope", help="half-normal simulated envelope (CSV)")
    common(e)
    e.add_argument("--mean", default="")
    e.add_argument("--disp", default="")
    e.add_argument("--e", dest="E", type=int, default=100)
    e.set_defaults(fmt="csv")
    return p


def config_from_args(ns) -> RunConfig:
    cfg = RunConfig(command=ns.command, seed=ns.seed, threads=_threads(ns.threads),
                    output=ns.out, fmt=ns.fmt)
    if ns.command in ("fit", "select", "envelope"):
        cfg.data_path = ns.data
        cfg.y_column = ns.y
        cfg.derive = list(ns.derive)
        cfg.mean_link = LinkKind.parse(ns.mean_link)
        cfg.disp_link = LinkKind.parse(ns.disp_link)
        cfg.mean_columns = _names(ns.mean)
        cfg.disp_columns = _names(ns.disp)
    if ns.command == "fit":
        cfg.diagnostics = ns.diagnostics
        cfg.E = ns.E
    elif ns.command == "envelope":
        cfg.E = ns.E
    elif ns.command == "select":
        cfg.scheme = ns.scheme.replace("-", "_")
        cfg.nesting = ns.nesting or (EXHAUSTIVE if cfg.scheme == TWO_STEP else SEQUENTIAL)
        cfg.mean_pool = _names(ns.mean_pool)
        cfg.disp_pool = _names(ns.disp_pool)
        cfg.criteria = _names(ns.criterion)
        cfg.W = ns.W
    elif ns.command == "simulate":
        cfg.dgp, cfg.n, cfg.reps, cfg.rep_offset = ns.dgp, ns.n, ns.reps, ns.rep_offset
        cfg.W, cfg.mode, cfg.criteria = ns.W, ns.mode, _names(ns.criteria)
    if cfg.W < 1:
        raise ValidationError("W must be at least 1")
    return cfg


# ---------------------------------------------------------------- commands

def _load(cfg: RunConfig) -> Dataset:
    if cfg.data_path is None:
        return ingest_csv(bundled_path(), cfg.y_column or BUNDLED_Y, cfg.derive)
    return ingest_csv(cfg.data_path, cfg.y_column, cfg.derive)


def _indices(data: Dataset, names, allow_intercept=False):
    out = []
    for name in names or ():
        if name.lower() in (INTERCEPT, "(intercept)"):
            if not allow_intercept:
                continue
            out.append(INTERCEPT)
        else:
            out.append(data.index(name))
    return out


def _spec(cfg, data) -> ModelSpec:
    return ModelSpec(tuple(_indices(data, cfg.mean_columns)), tuple(_indices(data, cfg.disp_columns)),
                     cfg.mean_link, cfg.disp_link)


def _check_size(data, k):
    if data.n <= k:
        raise ValidationError(f"need more observations ({data.n}) than parameters ({k})")


def _coef_table(data, spec, res):
    labels = spec.describe(data.names)
    rows = []
    se = res.std_errors
    for i, (part, term) in enumerate([("mean", t) for t in labels["mean"]]
                                     + [("dispersion", t) for t in labels["dispersion"]]):
        est = float(res.theta[i])
        z = est / se[i] if se[i] > 0 else math.nan
        rows.append({"submodel": part, "term": term, "estimate": est, "std_error": float(se[i]),
                     "z": z, "p_value": float(2 * stats.norm.sf(abs(z))) if math.isfinite(z) else None})
    return rows


def _envelope_csv(env) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "normal_quantile", "observed", "lower", "median", "upper"])
    for row in env.rows():
        w.writerow([row[0]] + [_fmt_float(v) for v in row[1:]])
    return buf.getvalue()


def _fitted(cfg, data):
    spec = _spec(cfg, data)
    _check_size(data, spec.k)
    res = fit(data, spec)
    if not res.converged:
        raise ConvergenceError(f"fit did not converge (max |score| {res.grad_norm:.3g} "
                               f"after {res.iterations} iterations)")
    return spec, res


def cmd_fit(cfg, executor):
    data = _load(cfg)
    spec, res = _fitted(cfg, data)
    r2_lr, r2_fc = pseudo_r2(data, spec, res)
    report = {
        "command": "fit",
        "n": data.n,
        "spec": spec.describe(data.names),
        "loglik": res.loglik,
        "converged": res.converged,
        "iterations": res.iterations,
        "grad_norm": res.grad_norm,
        "coefficients": _coef_table(data, spec, res),
        "r2_lr": r2_lr,
        "r2_fc": r2_fc,
    }
    if not cfg.diagnostics:
        return report
    resid, lev = residuals_w2(data, spec, res)
    env = simulated_envelope(data, spec, res, cfg.E, cfg.seed, executor=executor)
    if cfg.fmt == "csv":
        return _envelope_csv(env)
    report["diagnostics"] = {
        "residuals": resid, "leverage": lev, "E": env.E_requested, "E_succeeded": env.E_succeeded,
        "envelope": [dict(zip(("rank", "normal_quantile", "observed", "lower", "median", "upper"), r))
                     for r in env.rows()],
    }
    return report


def cmd_envelope(cfg, executor):
    data = _load(cfg)
    spec, res = _fitted(cfg, data)
    env = simulated_envelope(data, spec, res, cfg.E, cfg.seed, executor=executor)
    if cfg.fmt == "csv":
        return _envelope_csv(env)
    return {"command": "envelope", "E": env.E_requested, "E_succeeded": env.E_succeeded,
            "rows": [dict(zip(("rank", "normal_quantile", "observed", "lower", "median", "upper"), r))
                     for r in env.rows()]}


def cmd_select(cfg, executor):
    data = _load(cfg)
    all_covs = list(data.names)
    mean_pool = [INTERCEPT] + _indices(data, cfg.mean_pool if cfg.mean_pool is not None else all_covs)
    disp_pool = [INTERCEPT] + _indices(data, cfg.disp_pool if cfg.disp_pool is not None else all_covs)
    kinds = CriterionKind.parse_list(cfg.criteria)
    results = []
    for kind in kinds:
        if cfg.scheme == TWO_STEP:
            r = select_two_step(data, mean_pool, disp_pool, kind, cfg.W, cfg.seed,
                                nesting=cfg.nesting, mean_link=cfg.mean_link,
                                disp_link=cfg.disp_link, executor=executor)
        else:
            cand = CandidateSet(cfg.scheme, mean_pool, disp_pool, cfg.nesting, cfg.mean_link,
                                cfg.disp_link,
                                fixed_mean=[INTERCEPT] + _indices(data, cfg.mean_columns),
                                fixed_disp=[INTERCEPT] + _indices(data, cfg.disp_columns))
            r = select(data, cand, kind, cfg.W, cfg.seed, executor=executor)
        results.append(r.to_dict())
    if cfg.fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["criterion", "mean", "dispersion"])
        for r in results:
            w.writerow([r["criterion"], " ".join(map(str, r["winner"]["mean_cols"])),
                        " ".join(map(str, r["winner"]["disp_cols"]))])
        return buf.getvalue()
    if len(results) == 1:
        return {"command": "select", "scheme": cfg.scheme, **results[0]}
    return {"command": "select", "scheme": cfg.scheme, "seed": cfg.seed, "W": cfg.W,
            "results": results}


def cmd_simulate(cfg, executor):
    rep = run_experiment(cfg.dgp, cfg.n, cfg.reps, cfg.W, cfg.mode, cfg.criteria, cfg.seed,
                         executor=executor, rep_offset=cfg.rep_offset)
    if cfg.fmt == "csv":
        return rep.to_csv()
    return {"command": "simulate", **rep.to_dict()}


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate,
            "envelope": cmd_envelope}


def _emit(text: str, output):
    if output is None:
        sys.stdout.write(text)
        return
    try:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputOutputError(f"cannot write {output}: {exc.strerror or exc}") from None


def run(cfg: RunConfig) -> int:
    """Execute ``cfg`` and write its report. Returns the process exit code."""
    try:
        pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else nullcontext(None)
        with pool as executor:
            report = COMMANDS[cfg.command](cfg, executor)
        text = report if isinstance(report, str) else to_json(report) + "\n"
        _emit(text, cfg.output)
    except BetaselError as exc:
        return _fail(exc)
    return 0


def _fail(exc: BetaselError) -> int:
    sys.stderr.write(to_json({"error": {"category": exc.category, "message": str(exc)}}) + "\n")
    return EXIT_CODES[exc.category]


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except BetaselError as exc:
        return _fail(exc)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
