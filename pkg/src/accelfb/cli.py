"""Command-line front end: ``accelfb run|verify|compare|sweep``.

Manifests are flat YAML mappings.  Every manifest key can be overridden by
the flag of the same name (``step_fraction`` <-> ``--step-fraction``).
Each run writes ``<out>.csv`` (trace) and ``<out>.json`` (certificate
report); ``verify`` re-checks such pairs without re-running the solver.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import problems
from .core import InputError
from .diagnostics import COLUMNS, Trace, build_report, fit_rate
from .solver import PowerLawErrors, SolverConfig, Termination, run, run_baseline

SCHEMA_VERSION = 1
THREADS_ENV = "ACCELFB_THREADS"

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_CHECK_FAILED = 3

MANIFEST_DEFAULTS = {
    "problem": "lasso",
    "method": "accelerated",
    "alpha": 4.0,
    "step_fraction": 0.9,
    "iters": 1000,
    "seed": 0,
    "error_schedule": None,
    "out": "run",
    "allow_critical_step": False,
    "init": None,
    "record_every": 1,
    "tol": None,
    "descent_samples": 1000,
    "label": None,
    # benchmark parameters; None falls back to the benchmark's default
    "dim": None,
    "condition": None,
    "rank_deficiency": None,
    "rows": None,
    "cols": None,
    "sparsity": None,
    "l1_weight": None,
    "noise": None,
}

_TYPES = {
    "problem": str, "method": str, "alpha": float, "step_fraction": float, "iters": int,
    "seed": int, "error_schedule": str, "out": str, "allow_critical_step": bool, "init": str,
    "record_every": int, "tol": float, "descent_samples": int, "label": str, "dim": int,
    "condition": float, "rank_deficiency": int, "rows": int, "cols": int, "sparsity": float,
    "l1_weight": float, "noise": float,
}

PROBLEM_KEYS = {name: tuple(p) for name, p in problems.DEFAULTS.items()}


class ManifestError(InputError):
    pass


# -- manifests ---------------------------------------------------------------

def load_manifest(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: manifest must be a flat mapping")
    nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
    if nested:
        raise ManifestError(f"{path}: manifest must be flat, nested keys {nested}")
    return data


def resolve_manifest(base: dict, overrides: dict) -> dict:
    out = dict(MANIFEST_DEFAULTS)
    for source in (base, overrides):
        for key, val in source.items():
            if key not in MANIFEST_DEFAULTS:
                raise ManifestError(f"unknown manifest key {key!r}")
            if val is not None:
                out[key] = val
    for key, typ in _TYPES.items():
        val = out[key]
        if val is None:
            continue
        try:
            if typ is bool and isinstance(val, str):
                val = val.strip().lower() in ("1", "true", "yes", "on")
            out[key] = typ(val)
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"manifest key {key!r}: cannot read {val!r} as {typ.__name__}") from exc
    if out["method"] not in ("accelerated", "baseline"):
        raise ManifestError(f"method must be 'accelerated' or 'baseline', got {out['method']!r}")
    if out["label"] is None:
        out["label"] = Path(out["out"]).name
    return out


def parse_error_schedule(text, dimension, seed):
    if not text:
        return None
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) not in (2, 3):
        raise ManifestError(f"error_schedule must be 'c,p' or 'c,p,mode', got {text!r}")
    try:
        c, p = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ManifestError(f"error_schedule: bad numbers in {text!r}") from exc
    mode = parts[2] if len(parts) == 3 else "fixed"
    return PowerLawErrors(scale=c, power=p, dimension=dimension, seed=seed, mode=mode)


def problem_from_manifest(m: dict):
    name = m["problem"]
    if name.endswith(".npz"):
        return problems.load_problem(name)
    if name not in PROBLEM_KEYS:
        raise ManifestError(f"unknown problem {name!r}; choose from {sorted(PROBLEM_KEYS)} or a .npz file")
    params = {k: m[k] for k in PROBLEM_KEYS[name] if m.get(k) is not None}
    spec = problems.BenchmarkSpec(name=name, seed=m["seed"], params=params)
    return spec, problems.build(spec)


def initial_point(m: dict, problem) -> np.ndarray:
    init = m["init"] or ("zeros" if problem.name == "lasso" else "ones")
    n = problem.dimension
    if init == "zeros":
        return np.zeros(n)
    if init == "ones":
        return np.ones(n)
    if init == "minimizer":
        if problem.reference_minimizer is None:
            raise ManifestError("init=minimizer needs a certified reference minimizer")
        return np.array(problem.reference_minimizer)
    if init == "random":
        return np.random.Generator(np.random.PCG64(m["seed"] + 1)).standard_normal(n)
    raise ManifestError(f"unknown init {init!r}")


# -- I/O ---------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(int(x)) if isinstance(x, (int, np.integer)) else format(float(x), ".17g")


def trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    cols = [trace[c] for c in COLUMNS]
    for i in range(len(trace)):
        w.writerow([str(int(cols[0][i]))] + [_fmt(c[i]) for c in cols[1:]])
    return buf.getvalue()


def read_trace_csv(path) -> Trace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise InputError(f"{path}: header must be {','.join(COLUMNS)}")
    body = rows[1:]
    cols = {c: [] for c in COLUMNS}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(COLUMNS):
            raise InputError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
        try:
            cols["k"].append(int(row[0]))
            for c, v in zip(COLUMNS[1:], row[1:]):
                cols[c].append(float(v))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return Trace(cols)


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


# -- execution ---------------------------------------------------------------

@dataclass
class Outcome:
    manifest: dict
    result: object
    report: object
    document: dict
    csv_text: str


def execute(manifest: dict) -> Outcome:
    """Build the problem, run the configured method and certify the trace."""
    spec, problem = problem_from_manifest(manifest)
    step = manifest["step_fraction"] / problem.lipschitz
    sched = parse_error_schedule(manifest["error_schedule"], problem.dimension, manifest["seed"])
    cfg = SolverConfig(
        alpha=manifest["alpha"], step=step, max_iter=manifest["iters"],
        initial_point=initial_point(manifest, problem), error_schedule=sched,
        record_every=manifest["record_every"], allow_critical_step=manifest["allow_critical_step"],
        residual_tol=manifest["tol"],
    )
    driver = run if manifest["method"] == "accelerated" else run_baseline
    result = driver(problem, cfg)
    report = build_report(
        result.trace, cfg.alpha, step, method=result.method, inexact=sched is not None,
        reference_certified=problem.has_reference, problem=problem, iterates=result.iterates,
        z_consistency=(result.z_max_gap, result.z_max_norm),
        descent_samples=manifest["descent_samples"], seed=manifest["seed"],
    )
    cert = problem.info.get("certification")
    doc = {
        "v": SCHEMA_VERSION,
        "manifest": manifest,
        "problem": {
            "spec": spec.to_dict(),
            "dimension": problem.dimension,
            "lipschitz": problem.lipschitz,
            "reference_certified": problem.has_reference,
            "reference_optimum": problem.reference_optimum,
            "certification_residual": None if cert is None else cert.residual,
        },
        "run": {
            "method": result.method,
            "alpha": cfg.alpha,
            "step": step,
            "inexact": sched is not None,
            "iterations": result.iterations,
            "termination": result.termination.value,
            "z_max_gap": result.z_max_gap,
        },
    }
    doc.update(report.to_dict())
    return Outcome(manifest, result, report, _clean(doc), trace_csv(result.trace))


def _write_outcome(o: Outcome) -> None:
    out = o.manifest["out"]
    write_atomic(f"{out}.csv", o.csv_text)
    write_atomic(f"{out}.json", to_json(o.document))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- commands ----------------------------------------------------------------

def cmd_run(manifest: dict) -> int:
    o = execute(manifest)
    _write_outcome(o)
    print(o.report.summary())
    if o.result.termination is Termination.NUMERICAL_FAILURE:
        print(f"numerical failure after {o.result.iterations} iterations", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def verify_files(trace_path, report_path=None):
    trace_path = Path(trace_path)
    report_path = Path(report_path) if report_path else trace_path.with_suffix(".json")
    trace = read_trace_csv(trace_path)
    try:
        doc = json.loads(report_path.read_text())
        meta = doc["run"]
        alpha, step = float(meta["alpha"]), float(meta["step"])
        method, inexact = meta["method"], bool(meta["inexact"])
        certified_ref = bool(doc["problem"]["reference_certified"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{report_path}: unreadable run metadata ({exc})") from exc
    return build_report(trace, alpha, step, method=method, inexact=inexact,
                        reference_certified=certified_ref)


def cmd_verify(traces, report=None) -> int:
    if report and len(traces) > 1:
        raise InputError("--report applies to a single trace")
    code = EXIT_OK
    for path in traces:
        rep = verify_files(path, report)
        print(f"== {path}")
        print(rep.summary())
        for v in rep.failures:
            print(f"FAILED {v.name} at k={v.worst_k} (slack {v.worst_slack:.6g})", file=sys.stderr)
            code = EXIT_CHECK_FAILED
        if not rep.certified:
            print("status: uncertified")
    return code


def _combined(outcomes, column="theta") -> str:
    ks = sorted(set().union(*[set(o.result.trace.k.tolist()) for o in outcomes]))
    maps = [dict(zip(o.result.trace.k.tolist(), o.result.trace[column])) for o in outcomes]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k"] + [f"{column}_{o.manifest['label']}" for o in outcomes])
    for k in ks:
        w.writerow([str(k)] + [_fmt(m[k]) if k in m else "" for m in maps])
    return buf.getvalue()


def _rate_row(o: Outcome, window) -> dict:
    t = o.result.trace
    hi = min(window[1], int(t.k[-1]))
    fit = fit_rate(t, window[0], hi)
    return {
        "label": o.manifest["label"], "method": o.result.method, "alpha": o.manifest["alpha"],
        "slope_theta": fit.slope, "slope_window": [window[0], hi], "slope_residual": fit.residual,
        "tail_ratio_k2theta": o.report.rate["tail_ratio_k2theta"],
        "tail_ratio_kvel": o.report.rate["tail_ratio_kvel"],
        "certified": o.report.certified, "termination": o.result.termination.value,
    }


def cmd_compare(manifests, out, window=(100, 10_000)) -> int:
    outcomes = _map(execute, manifests)
    rows = [_rate_row(o, window) for o in outcomes]
    ref = rows[0]["slope_theta"]
    for r in rows:
        r["slope_gap_vs_first"] = r["slope_theta"] - ref
    doc = {"v": SCHEMA_VERSION, "runs": rows}
    write_atomic(f"{out}.csv", _combined(outcomes))
    write_atomic(f"{out}.json", to_json(_clean(doc)))
    for r in rows:
        print(f"{r['label']:<24} slope {r['slope_theta']:+.4f}  gap {r['slope_gap_vs_first']:+.4f}  "
              f"k^2 theta tail {r['tail_ratio_k2theta']:.3e}  k|v| tail {r['tail_ratio_kvel']:.3e}")
    failed = any(o.result.termination is Termination.NUMERICAL_FAILURE for o in outcomes)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_sweep(manifest, alphas, out, window=(100, 10_000)) -> int:
    runs = [dict(manifest, alpha=a, label=f"alpha={a:g}") for a in alphas]
    return cmd_compare(runs, out, window)


# -- argument parsing --------------------------------------------------------

def _add_overrides(p):
    for key, typ in _TYPES.items():
        flag = "--" + key.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, dest=key, type=typ, default=None)
    p.add_argument("--manifest", help="flat YAML manifest")


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in _TYPES if getattr(args, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accelfb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one manifest, write trace CSV and report JSON")
    _add_overrides(p)

    p = sub.add_parser("verify", help="re-check trace CSV files against their report metadata")
    p.add_argument("traces", nargs="+")
    p.add_argument("--report", help="report JSON (default: trace path with .json suffix)")

    p = sub.add_parser("compare", help="run several manifests and compare rates")
    p.add_argument("manifests", nargs="+")
    _add_overrides(p)

    p = sub.add_parser("sweep", help="sweep alpha over one manifest")
    _add_overrides(p)
    p.add_argument("--alphas", default="3,3.5,4,10")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.traces, args.report)
        over = _overrides(args)
        if args.command == "run":
            base = load_manifest(args.manifest) if args.manifest else {}
            return cmd_run(resolve_manifest(base, over))
        if args.command == "compare":
            out = over.pop("out", "compare")
            ms = []
            for path in args.manifests:
                base = load_manifest(path)
                base.setdefault("label", Path(path).stem)
                ms.append(resolve_manifest(base, over))
            return cmd_compare(ms, out)
        if args.command == "sweep":
            base = load_manifest(args.manifest) if args.manifest else {}
            m = resolve_manifest(base, over)
            alphas = [float(a) for a in args.alphas.split(",")]
            return cmd_sweep(m, alphas, m["out"])
    except (InputError, OSError, yaml.YAMLError) as exc:
        print(f"accelfb: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
