"""Command-line front end.

Each subcommand reads a JSON config (a file path, ``-`` for stdin, or
nothing for an empty config), runs one job and writes its artifacts to the
output directory: a table (``<subcommand>.csv`` or ``.json``) and a verdict
``<subcommand>.verdict.json``.  Exit status is 0 on success, 1 when a
verification fails and 2 on a usage or configuration error.

The output directory defaults to ``$FINSLERKIT_OUTPUT_DIR`` or the current
directory.  Artifacts depend only on the config and the seed, so two runs
with the same inputs produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import (ChartError, DegenerateError, FinslerError, JetDepthError, MetricError,
                     ShootingError)
from .tolerances import DEFAULTS, Tolerances, parse_override

__all__ = ["main", "run", "ConfigError", "SUBCOMMANDS"]

OUTPUT_ENV = "FINSLERKIT_OUTPUT_DIR"
COMMON_KEYS = {"subcommand", "model", "seed", "output", "format", "tolerances"}
SUBCOMMAND_KEYS = {
    "report": {"flags", "alpha"},
    "verify": {"samples", "alpha", "geodesics"},
    "geodesic": {"x0", "y0", "T", "samples"},
    "distance": {"p", "q", "seeds"},
    "busemann": {"p", "probes", "horizons", "count"},
    "convexity": {"p", "alpha", "beta", "r_grid", "plan", "probes", "horizons", "verify"},
}
SUBCOMMANDS = tuple(SUBCOMMAND_KEYS)


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (exit status 2)."""


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _num(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def _cell(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_num(c) for c in np.ravel(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def table_text(rows, columns, fmt: str) -> str:
    if fmt == "json":
        return dumps([{c: r.get(c) for c in columns} for r in rows])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------


def _vec(cfg, key, default=None, dim=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return np.asarray(default, dtype=float)
    try:
        arr = np.asarray(cfg[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be numeric") from None
    if dim is not None and arr.shape[-1:] != (dim,):
        raise ConfigError(f"{key!r} must have {dim} coordinates, got shape {list(arr.shape)}")
    return arr


def _float(cfg, key, default):
    try:
        return float(cfg.get(key, default))
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be a number") from None


def _int(cfg, key, default):
    val = cfg.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val:
        raise ConfigError(f"{key!r} must be an integer")
    return int(val)


def _dataclass_from(cls, data, what):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {what} key(s) {sorted(unknown)}; known: {sorted(known)}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return cls(**data)


# ---------------------------------------------------------------------------
# subcommands: each returns (table rows, columns, verdict, extra tables, passed)
# ---------------------------------------------------------------------------


def _report(model, cfg, seed, tol):
    from .curvature import curvature_report
    from .metrics import make_flag

    alpha = _float(cfg, "alpha", 1.0)
    flags = cfg.get("flags")
    if not isinstance(flags, list) or not flags:
        raise ConfigError("'flags' must be a nonempty list of {x, y, v} objects")
    rows, errors = [], []
    for i, fl in enumerate(flags):
        if not isinstance(fl, dict) or set(fl) != {"x", "y", "v"}:
            raise ConfigError(f"flag {i} must be an object with keys x, y, v")
        x, y, v = (_vec(fl, k, dim=model.dim) for k in ("x", "y", "v"))
        row = {"model": model.name, "x": x, "y": y, "v": v, "alpha": alpha}
        try:
            rep = curvature_report(model, make_flag(model, x, y, v), alpha)
            row.update(F=rep.F, K=rep.flag_K, T=rep.T, Tdot=rep.T_dot, Kalpha=rep.K_alpha)
        except FinslerError as exc:
            errors.append({"index": i, "error": type(exc).__name__, "message": str(exc)})
            row.update(F=math.nan, K=math.nan, T=math.nan, Tdot=math.nan, Kalpha=math.nan)
        rows.append(row)
    cols = ["model", "x", "y", "v", "alpha", "F", "K", "T", "Tdot", "Kalpha"]
    verdict = {"flags": len(rows), "errors": errors, "passed": not errors}
    return rows, cols, verdict, {}, not errors


def _verify(model, cfg, seed, tol):
    from .suite import LEDGER_COLUMNS, verify_suite

    rows, verdict = verify_suite(model, seed=seed, samples=_int(cfg, "samples", 50),
                                 alpha=_float(cfg, "alpha", 1.0), tolerances=tol,
                                 geodesics=_int(cfg, "geodesics", 3))
    return rows, list(LEDGER_COLUMNS), verdict, {}, verdict["passed"]


def _geodesic(model, cfg, seed, tol):
    from .geodesics import integrate_geodesic

    x0 = _vec(cfg, "x0", dim=model.dim)
    y0 = _vec(cfg, "y0", dim=model.dim)
    T = _float(cfg, "T", 1.0)
    count = _int(cfg, "samples", 101)
    if count < 2:
        raise ConfigError("'samples' must be at least 2")
    try:
        path = integrate_geodesic(model, x0, y0, T)
    except FinslerError as exc:
        verdict = {"error": type(exc).__name__, "message": str(exc), "passed": False}
        return [], ["t", "x", "y"], verdict, {}, False
    t = np.linspace(0.0, path.t_end, count)
    X, Y = path.point(t), path.velocity(t)
    rows = [{"t": t[i], "x": X[i], "y": Y[i]} for i in range(count)]
    drift = path.speed_drift()
    verdict = {
        "T": T, "t_end": path.t_end, "truncated": path.truncated, "speed": path.speed,
        "speed_drift": {"value": drift, "tolerance": tol["speed_drift"],
                        "passed": drift <= tol["speed_drift"]},
    }
    if path.truncated:
        verdict["chart_exit"] = {"error": "ChartError",
                                 "message": f"geodesic left the chart at t = {path.t_end!r}"}
    verdict["passed"] = bool(drift <= tol["speed_drift"])
    return rows, ["t", "x", "y"], verdict, {}, verdict["passed"]


def _distance(model, cfg, seed, tol):
    from .geodesics import distance

    p = _vec(cfg, "p", dim=model.dim)
    q = _vec(cfg, "q", dim=model.dim)
    seeds = _int(cfg, "seeds", 32)
    out = {}
    for name, (a, b) in (("d_pq", (p, q)), ("d_qp", (q, p))):
        try:
            res = distance(model, a, b, seeds=seeds, path=False, seed=seed)
            out[name] = {"d": res.d, "w": res.w, "converged": res.converged,
                         "ambiguous": res.ambiguous}
        except FinslerError as exc:
            out[name] = {"error": type(exc).__name__, "message": str(exc), "converged": False}
    ok = all(v.get("converged") for v in out.values())
    rows = [{"direction": k, "d": v.get("d", math.nan), "converged": v.get("converged", False)}
            for k, v in out.items()]
    verdict = {"p": p, "q": q, **out, "passed": ok}
    return rows, ["direction", "d", "converged"], verdict, {}, ok


def _busemann(model, cfg, seed, tol):
    from .busemann import busemann_estimate

    p = _vec(cfg, "p", dim=model.dim)
    probes = np.atleast_2d(_vec(cfg, "probes", dim=model.dim))
    horizons = tuple(_vec(cfg, "horizons", (1.0, 2.0, 4.0, 8.0)).ravel())
    try:
        fld = busemann_estimate(model, p, probes, horizons, _int(cfg, "count", 256),
                                slack=tol["busemann"])
    except FinslerError as exc:
        verdict = {"error": type(exc).__name__, "message": str(exc), "passed": False}
        return [], ["probe", "x", "t", "b"], verdict, {}, False
    rows = [{"probe": j, "x": probes[j], "t": t, "b": fld.values[i, j]}
            for i, t in enumerate(fld.horizons) for j in range(len(probes))]
    verdict = {"p": p, "requested": horizons, "achieved": fld.horizons,
               "limit_estimate": fld.limit_estimate, "gap": fld.gap,
               "checks": fld.checks, "passed": fld.passed}
    return rows, ["probe", "x", "t", "b"], verdict, {}, fld.passed


def _convexity(model, cfg, seed, tol):
    from .busemann import busemann_estimate
    from .certificate import (SamplingPlan, VerifyPlan, certificate_verify, curvature_profile,
                              delta_poly)

    p = _vec(cfg, "p", dim=model.dim)
    alpha = _float(cfg, "alpha", 1.0)
    beta = _float(cfg, "beta", 1.0)
    r_grid = _vec(cfg, "r_grid").ravel()
    plan = _dataclass_from(SamplingPlan, cfg.get("plan"), "plan")
    plan = SamplingPlan(**{**{f.name: getattr(plan, f.name) for f in fields(plan)}, "seed": seed})
    vcfg = cfg.get("verify")
    fld = None
    if "probes" in cfg:
        probes = np.atleast_2d(_vec(cfg, "probes", dim=model.dim))
        horizons = tuple(_vec(cfg, "horizons", plan.horizons).ravel())
        fld = busemann_estimate(model, p, probes, horizons, slack=tol["busemann"])
    prof = curvature_profile(model, p, r_grid, alpha, plan, field_=fld, beta=beta)
    verdict = {"p": p, "alpha": alpha, "beta": beta, "a": prof.a, "band": prof.band,
               "refused": prof.refused, "witness": prof.witness,
               "busemann_checks": prof.field_.checks}
    extra = {}
    if prof.refused:
        verdict["verdict"] = "refused"
        verdict["passed"] = False
        return [], ["r"], verdict, extra, False
    checks = prof.verify(tol["arithmetic"])
    a3, a2, a0 = delta_poly(prof, prof.r_grid)
    ledger = []
    for k, r in enumerate(prof.r_grid):
        ledger.append({
            "r": r, "P": prof.P[k], "Q": prof.Q[k], "P_tilde": prof.P_tilde[k],
            "K_bar": prof.K_bar[k], "S": prof.S[k], "a3": a3[k], "a2": a2[k], "a0": a0[k],
            "delta0": a0[k], "delta1": a3[k] + a2[k] + a0[k],
            "sublevel_limited": bool(prof.chart_limited[k]),
            "witnesses": prof.witnesses[k],
            "checks": {name: bool(v[k]) for name, v in checks.items()},
        })
    passed = all(all(row["checks"].values()) for row in ledger)
    verdict["ledger"] = ledger
    verdict["arithmetic_tolerance"] = tol["arithmetic"]
    if vcfg is not None:
        if not isinstance(vcfg, dict):
            raise ConfigError("'verify' must be an object")
        vcfg = dict(vcfg)
        points = vcfg.pop("points", None)
        vplan = _dataclass_from(VerifyPlan, {"tol": tol["certificate"], "seed": seed, **vcfg},
                                "verify")
        rep = certificate_verify(model, p, prof, points, vplan)
        verdict["certificate"] = {"verdict": rep.verdict, "tolerance": rep.tol,
                                  "samples": rep.samples}
        passed = passed and rep.verdict != "fail"
    verdict["verdict"] = "pass" if passed else "fail"
    verdict["passed"] = passed
    t = np.linspace(prof.a, float(prof.r_grid[-1]), 33)
    chi = [{"r": t[i], "chi": c, "chi_prime": cp, "chi_second": cs}
           for i, (c, cp, cs) in enumerate(zip(prof.chi(t), prof.chi_prime(t), prof.chi_second(t)))]
    extra["chi"] = (chi, ["r", "chi", "chi_prime", "chi_second"])
    cols = ["r", "P", "Q", "P_tilde", "K_bar", "S", "a3", "a2", "a0"]
    return ledger, cols, verdict, extra, passed


_HANDLERS = {
    "report": _report,
    "verify": _verify,
    "geodesic": _geodesic,
    "distance": _distance,
    "busemann": _busemann,
    "convexity": _convexity,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def run(config: dict, output_dir=None, fmt: str | None = None, overrides=None) -> int:
    """Execute one run from a config mapping; returns the exit status."""
    from .metrics import make_model

    if not isinstance(config, dict):
        raise ConfigError("the config must be a JSON object")
    sub = config.get("subcommand")
    if sub not in _HANDLERS:
        raise ConfigError(f"unknown subcommand {sub!r}; known: {list(SUBCOMMANDS)}")
    unknown = set(config) - COMMON_KEYS - SUBCOMMAND_KEYS[sub]
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} for subcommand {sub!r}")
    seed = _int(config, "seed", 0)
    out_cfg = config.get("output", {})
    if isinstance(out_cfg, str):
        out_cfg = {"dir": out_cfg}
    if not isinstance(out_cfg, dict) or set(out_cfg) - {"dir", "format"}:
        raise ConfigError("'output' must be a directory string or an object with dir, format")
    fmt = fmt or config.get("format") or out_cfg.get("format") or "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    out = Path(output_dir or out_cfg.get("dir") or os.environ.get(OUTPUT_ENV) or ".")
    tol_cfg = config.get("tolerances", {})
    if not isinstance(tol_cfg, dict):
        raise ConfigError("'tolerances' must be an object")
    try:
        tol = Tolerances({**tol_cfg, **(overrides or {})})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = config.get("model")
    if spec is None:
        raise ConfigError("missing required key 'model'")
    model = make_model(spec)

    np.random.seed(seed)  # nothing should draw from it; pinned for safety
    try:
        rows, cols, verdict, extra, passed = _HANDLERS[sub](model, config, seed, tol)
    except (ChartError, DegenerateError, JetDepthError, ShootingError) as exc:
        rows, cols, extra, passed = [], ["error"], {}, False
        verdict = {"error": type(exc).__name__, "message": str(exc), "passed": False}
    verdict = {"subcommand": sub, "model": spec, "seed": seed, "tolerances": tol.as_dict(),
               **verdict}
    out.mkdir(parents=True, exist_ok=True)
    ext = "json" if fmt == "json" else "csv"
    (out / f"{sub}.{ext}").write_text(table_text(rows, cols, fmt))
    for name, (xrows, xcols) in extra.items():
        (out / f"{sub}_{name}.{ext}").write_text(table_text(xrows, xcols, fmt))
    (out / f"{sub}.verdict.json").write_text(dumps(verdict))
    status = 0 if passed else 1
    print(f"{sub}: {'ok' if passed else 'FAILED'} -> {out}")
    return status


def _load_config(path):
    if path is None:
        return {}
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="JSON config file, or - for stdin")
    common.add_argument("-o", "--output", help=f"output directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("-f", "--format", choices=("csv", "json"), help="table format")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--model", help="model descriptor as JSON, overrides the config")
    common.add_argument("-t", "--tolerance", action="append", default=[], metavar="KEY=VALUE",
                        help=f"override a tolerance; keys: {', '.join(sorted(DEFAULTS))}")
    parser = argparse.ArgumentParser(prog="finslerkit",
                                     description="Finsler curvature engine and lemma checks.")
    subs = parser.add_subparsers(dest="command", required=True)
    subs.add_parser("run", parents=[common], help="dispatch on the config's 'subcommand' key")
    for name in SUBCOMMANDS:
        subs.add_parser(name, parents=[common], help=f"run the {name} job")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        if not isinstance(config, dict):
            raise ConfigError("the config must be a JSON object")
        if args.command != "run":
            if config.get("subcommand", args.command) != args.command:
                raise ConfigError(f"config subcommand {config['subcommand']!r} does not match "
                                  f"{args.command!r}")
            config["subcommand"] = args.command
        if args.seed is not None:
            config["seed"] = args.seed
        if args.model is not None:
            try:
                config["model"] = json.loads(args.model)
            except json.JSONDecodeError:
                config["model"] = args.model
        overrides = dict(parse_override(t) for t in args.tolerance)
        return run(config, args.output, args.format, overrides)
    except (ConfigError, MetricError, ValueError) as exc:
        print(f"finslerkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
