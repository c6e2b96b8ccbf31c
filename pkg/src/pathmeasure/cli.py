"""Command-line front end: ``pathmeasure CONFIG [--seed S] [--out DIR] [--quiet]``.

Exit status: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure (a check or a cross-method tolerance failed).
"""
import argparse
import datetime
import json
import logging
import os
import sys

import numpy as np
from . import __version__
from .config import load_document, parse_config, resolve
from .dyson import dyson_series, dyson_sum, scattering_report, write_scattering_csv
from .errors import ConfigError, NumericalError, ParseError, PathMeasureError, ValidationError
from .grid_field import Field, SpatialGrid, field_to_dict, read_field_csv, relative_l2, write_field_csv
from .kernel_core import (
    HeatKernel,
    OUKernel,
    Potential,
    SpectralKernel,
    TabulatedKernel,
    check_chapman_kolmogorov,
    check_delta_limit,
    check_normalization,
    lagrangian_to_kernel,
)
from .oracles import crank_nicolson
from .propagate import SliceSchedule, fundamental_solution_V, trotter_propagate
from .volterra import residual_check, volterra_solve
from .wiener_mc import EXP_NEG, mc_functional, sample_bridges, write_paths_csv

__all__ = ["build_kernel", "build_potential", "main", "run"]

log = logging.getLogger("pathmeasure")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


def build_kernel(k, grid):
    kind = k["kind"]
    if kind == "heat":
        return HeatKernel(k["D"])
    if kind == "spectral":
        return SpectralKernel(k["terms"], band=k["band"])
    if kind == "lagrangian":
        return lagrangian_to_kernel(k["terms"], k["convention"], band=k["band"])
    if kind == "ou":
        return OUKernel(k["theta"], k["sigma"])
    base = build_kernel(k["sample_from"], grid)
    table = TabulatedKernel.from_kernel(base, grid, k["times"])
    p = k["perturb"]
    if p is not None:
        try:
            table = table.perturbed(p["t"], p["x"], p["y"], p["amount"])
        except ValueError as err:
            raise ValidationError("kernel.perturb", str(err)) from err
    return table


def build_potential(p):
    name = p["name"]
    if name == "zero":
        return Potential.zero()
    if name == "constant":
        return Potential.constant(p["c"])
    if name == "harmonic":
        return Potential.harmonic(p["omega"])
    if name == "linear":
        return Potential.linear(p["slope"])
    return Potential.table(p["x"], p["v"])


def _transport(m):
    return None if m["transport"] == "auto" else m["transport"]


def _require_heat(kernel, method):
    if not isinstance(kernel, HeatKernel):
        raise ValidationError("kernel.kind", f"method {method} needs the heat kernel, got {kernel.kind}")


class _Context:
    def __init__(self, spec):
        self.spec = spec
        d = spec.data
        self.grid = SpatialGrid(d["grid"]["a"], d["grid"]["b"], d["grid"]["n"])
        self.kernel = build_kernel(d["kernel"], self.grid)
        self.V = build_potential(d["potential"])
        self.m = d["method"]
        self.p = d["problem"]
        self.seed = d["seed"]
        self.fields = {}
        self.csv = {}

    def initial(self):
        path = self.p["initial"]
        if path is None:
            return None
        try:
            f = read_field_csv(path)
        except (OSError, KeyError, ValueError) as err:
            raise ValidationError("problem.initial", f"cannot read field CSV: {err}") from err
        if f.grid != self.grid:
            raise ValidationError("problem.initial", f"field grid {f.grid} differs from the configured grid")
        return f


def _run_trotter(ctx):
    sched = SliceSchedule(ctx.p["t"], ctx.m["N"], ctx.m["scheme"])
    diag = {}
    f0 = ctx.initial()
    if f0 is None:
        f = fundamental_solution_V(ctx.kernel, ctx.V, ctx.grid, sched, ctx.p["y"], _transport(ctx.m), ctx.m["budget"], diag)
    else:
        f = trotter_propagate(f0, ctx.kernel, ctx.V, sched, _transport(ctx.m), ctx.m["budget"], diag)
    ctx.fields["trotter"] = f
    return {"schedule": sched.to_dict(), "diagnostics": diag, "value_at_x": _at(f, ctx)}


def _at(f, ctx):
    v = f.values[ctx.grid.index_of(ctx.p["x"])]
    return {"re": float(v.real), "im": float(v.imag)}


def _run_volterra(ctx):
    st = volterra_solve(ctx.kernel, ctx.V, ctx.p["y"], ctx.p["t"], ctx.grid, ctx.m["M"], _transport(ctx.m), ctx.m["budget"])
    ctx.fields["volterra"] = st.final()
    out = {"M": ctx.m["M"], "transport": st.method, "value_at_x": _at(st.final(), ctx)}
    if ctx.m["residual"]:
        out["residual"] = residual_check(st, ctx.kernel, ctx.V, _transport(ctx.m), ctx.m["budget"])
    return out


def _run_dyson(ctx):
    m = ctx.m
    res = dyson_sum(
        ctx.kernel, ctx.V, ctx.p["y"], ctx.p["t"], m["order"], ctx.grid, m["time_steps"],
        _transport(m), m["budget"], m["segments"], m["split_threshold"],
    )
    ctx.fields["dyson"] = res.field
    series = dyson_series(ctx.kernel, ctx.V, ctx.p["y"], ctx.p["t"], m["order"], ctx.grid, m["time_steps"], _transport(m), m["budget"])
    rows = scattering_report(series)
    ctx.csv["scattering.csv"] = lambda fh: write_scattering_csv(rows, fh)
    return {
        "order": m["order"],
        "segments": res.segments,
        "steps_per_segment": res.steps_per_segment,
        "remainder_bound": res.remainder_bound,
        "scattering": rows,
        "value_at_x": _at(res.field, ctx),
    }


def _run_mc(ctx):
    _require_heat(ctx.kernel, "mc")
    est = mc_functional(
        ctx.p["x"], ctx.p["y"], ctx.p["t"], ctx.kernel.D, ctx.V, EXP_NEG,
        ctx.m["n_paths"], ctx.m["mc_steps"], ctx.seed, workers=ctx.m["workers"],
    )
    ctx.mc = est
    return est.to_dict()


def _run_cn(ctx):
    _require_heat(ctx.kernel, "cn")
    f0 = ctx.initial() or Field.delta(ctx.grid, ctx.p["y"])
    ref = crank_nicolson(f0, ctx.kernel.D, ctx.V, ctx.p["t"], ctx.m["M"], ctx.m["budget"])
    ctx.fields["cn"] = ref.final()
    return {"M": ctx.m["M"], "error_model": ref.error_model, "value_at_x": _at(ref.final(), ctx)}


def _run_compare(ctx):
    if ctx.p["initial"] is not None:
        raise ValidationError("problem.initial", "compare works on the fundamental solution; remove problem.initial")
    results = {}
    for name, fn in (("trotter", _run_trotter), ("volterra", _run_volterra), ("dyson", _run_dyson), ("cn", _run_cn), ("mc", _run_mc)):
        log.info("compare: running %s", name)
        results[name] = fn(ctx)
    names = ["trotter", "volterra", "dyson", "cn"]
    tol = ctx.m["tolerance"]
    matrix = {a: {b: relative_l2(ctx.fields[a], ctx.fields[b]) for b in names} for a in names}
    failures = [f"{a}-{b}" for i, a in enumerate(names) for b in names[i + 1 :] if matrix[a][b] >= tol]
    est = ctx.mc
    scalars = {}
    for a in names:
        v = float(ctx.fields[a].values[ctx.grid.index_of(ctx.p["x"])].real)
        diff = abs(v - est.value)
        sig = diff / est.stderr if est.stderr > 0 else (0.0 if diff <= 1e-12 else float("inf"))
        scalars[a] = {"value": v, "abs_diff_mc": diff, "stderr_units": sig}
        if sig > ctx.m["mc_sigmas"]:
            failures.append(f"{a}-mc")
    return {
        "runs": results,
        "relative_l2": matrix,
        "scalars_vs_mc": scalars,
        "failures": failures,
        "passed": not failures,
    }


def _run_verify(ctx):
    k, g, t, s = ctx.kernel, ctx.grid, ctx.p["t"], ctx.m["ck_s"]
    checks = {}
    if getattr(k, "dispersive", False):
        checks["chapman_kolmogorov"] = {"status": "skipped", "reason": "dispersive kernel has no tail bound"}
    else:
        err = check_chapman_kolmogorov(k, g, t, s, ctx.m["budget"])
        checks["chapman_kolmogorov"] = {"error": err, "tolerance": ctx.m["ck_tolerance"], "passed": err < ctx.m["ck_tolerance"]}
    err = check_normalization(k, g, t, budget=ctx.m["budget"]) if not getattr(k, "dispersive", False) else None
    if err is None:
        checks["normalization"] = {"status": "skipped", "reason": "dispersive kernel has no tail bound"}
    else:
        checks["normalization"] = {"error": err, "tolerance": ctx.m["normalization_tolerance"], "passed": err < ctx.m["normalization_tolerance"]}
    if isinstance(k, TabulatedKernel):
        checks["delta_limit"] = {"status": "skipped", "reason": "tabulated kernel is undefined at the delta times"}
    else:
        test = Field.from_function(g, lambda y: np.exp(-y * y))
        errs = check_delta_limit(k, test, ctx.m["deltas"])
        dec = all(b < a for a, b in zip(errs, errs[1:]))
        checks["delta_limit"] = {"deltas": ctx.m["deltas"], "errors": errs, "passed": dec}
    failed = [name for name, c in checks.items() if c.get("passed") is False]
    return {"checks": checks, "failed": failed, "passed": not failed}


def _run_sample_paths(ctx):
    _require_heat(ctx.kernel, "sample-paths")
    n = ctx.m["n_paths"]
    paths = sample_bridges(ctx.p["x"], ctx.p["y"], ctx.p["t"], ctx.m["mc_steps"], ctx.kernel.D, n, ctx.seed)
    t = ctx.p["t"]
    ctx.csv["paths.csv"] = lambda fh: write_paths_csv(paths, t, fh)
    return {"n_paths": n, "M": ctx.m["mc_steps"], "seed": ctx.seed}


_DISPATCH = {
    "trotter": _run_trotter,
    "volterra": _run_volterra,
    "dyson": _run_dyson,
    "mc": _run_mc,
    "cn": _run_cn,
    "compare": _run_compare,
    "verify-kernel": _run_verify,
    "sample-paths": _run_sample_paths,
}


def _sanitize(obj):
    """Make a result JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(spec, quiet=False):
    """Execute a resolved spec; write artifacts; return ``(exit_status, report)``."""
    ctx = _Context(spec)
    method = spec.method
    log.info("running %s", method)
    result = _DISPATCH[method](ctx)
    fmt = spec.data["output"]["format"]
    report = {
        "spec": spec.to_dict(),
        "seed": spec.data["seed"],
        "method": method,
        "result": _sanitize(result),
        "metadata": {
            "version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    }
    if fmt in ("json", "both"):
        report["fields"] = {name: field_to_dict(f) for name, f in sorted(ctx.fields.items())}
    out_dir = spec.data["output"]["path"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    if fmt in ("csv", "both"):
        for name, f in sorted(ctx.fields.items()):
            write_field_csv(f, os.path.join(out_dir, f"field_{name}.csv"))
    for fname, writer in sorted(ctx.csv.items()):
        with open(os.path.join(out_dir, fname), "w", newline="") as fh:
            writer(fh)
    passed = result.get("passed", True) if isinstance(result, dict) else True
    if not passed:
        log.error("verification failed: %s", result.get("failed") or result.get("failures"))
        return EXIT_VERIFY, report
    return EXIT_OK, report


def _load(path, seed, out):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ParseError(f"cannot read {path}: {err}") from err
    if seed is None and out is None:
        return parse_config(text)
    doc = load_document(text)
    if not isinstance(doc, dict):
        raise ValidationError("<root>", "configuration must be a mapping")
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["output"] = dict(doc.get("output") or {}, path=out)
    return resolve(doc)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="pathmeasure", description=__doc__.splitlines()[0])
    parser.add_argument("config", help="YAML or JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        spec = _load(args.config, args.seed, args.out)
        status, _ = run(spec, quiet=args.quiet)
        return status
    except ConfigError as err:
        log.error("configuration error: %s", err)
        return EXIT_CONFIG
    except NumericalError as err:
        log.error("numerical failure: %s", err)
        return EXIT_NUMERIC
    except (PathMeasureError, ValueError) as err:
        log.error("invalid input: %s", err)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
