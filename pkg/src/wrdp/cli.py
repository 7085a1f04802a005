"""Command-line interface: ``wrdp {curves,thresholds,vector,simulate}``.

Each subcommand takes ``--config <file.json>`` and/or direct flags; flags
override config values.  ``"inf"`` (a string) denotes infinity for C and P.
Results are JSON carrying the fully resolved configuration under
``resolved_config``.  On failure the exit code is nonzero and a JSON error
object is written to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Optional

from . import plotting
from .scalar import (
    common_randomness_threshold_C,
    dstar_value,
    perception_threshold_P,
    rate_threshold_R,
)
from .simulator import CodebookConfig, EstimatorConfig, run_trials
from .types import (
    INF,
    DiagGaussianSource,
    GaussianScalarSource,
    NoFiniteThreshold,
    TradeoffQuery,
    WRDPError,
    check_budget,
    check_rate,
    check_variance,
    decode_number,
    encode_number,
)
from .vector import (
    MAX_ROUNDS,
    ROUND_TOL,
    brute_force_oracle,
    solve_allocation,
    universality_gap,
)

CURVES_HEADER = ["R", "C", "P", "D"]
SIMULATE_HEADER = ["n", "R", "C", "P", "trials", "emp_D", "emp_D_se", "emp_W2", "gap",
                   "reference", "seed"]

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 1


class ParseError(WRDPError):
    def __init__(self, msg, *, field: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[int] = None):
        super().__init__(msg)
        self.field = field
        self.line = line
        self.column = column


class UsageError(WRDPError):
    pass


# -- formatting ---------------------------------------------------------------

def fmt_number(x) -> str:
    """Locale-independent text for a CSV cell."""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _jsonable(obj):
    if isinstance(obj, float):
        return encode_number(obj) if math.isinf(obj) else (None if math.isnan(obj) else obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def _emit(payload: dict, out: Optional[str]):
    text = dumps(payload)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- config parsing -----------------------------------------------------------

def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", line=e.lineno, column=e.colno) from None
    if not isinstance(cfg, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return cfg


def _check_keys(cfg: dict, allowed, where: str = ""):
    for k in cfg:
        if k not in allowed:
            raise ParseError(f"unknown field {where}{k!r}", field=where + k)


def _number(cfg: dict, key: str, default=None, *, kind: str = "budget"):
    if key not in cfg or cfg[key] is None:
        if default is None:
            raise ParseError(f"missing required field {key!r}", field=key)
        return default
    raw = cfg[key]
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise ParseError(f"field {key!r} must be a number or \"inf\", got {raw!r}", field=key)
    try:
        val = decode_number(raw)
    except ValueError:
        raise ParseError(f"field {key!r}: cannot parse {raw!r} as a number", field=key) from None
    try:
        if kind == "rate":
            return check_rate(key, val)
        if kind == "rate_inf":
            return check_rate(key, val, allow_inf=True)
        if kind == "variance":
            return check_variance(key, val)
        return check_budget(key, val)
    except WRDPError as e:
        raise ParseError(str(e), field=key) from None


def _integer(cfg: dict, key: str, default=None, minimum: int = 0) -> int:
    if key not in cfg or cfg[key] is None:
        if default is None:
            raise ParseError(f"missing required field {key!r}", field=key)
        return default
    raw = cfg[key]
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw:
        raise ParseError(f"field {key!r} must be an integer, got {raw!r}", field=key)
    if raw < minimum:
        raise ParseError(f"field {key!r} must be >= {minimum}, got {raw}", field=key)
    return int(raw)


def _number_list(cfg: dict, key: str, default, *, kind: str) -> list:
    raw = cfg.get(key, default)
    if not isinstance(raw, (list, tuple)):
        raw = [raw]
    if not raw:
        raise ParseError(f"field {key!r} must be a non-empty list", field=key)
    return [_number({f"{key}[{i}]": v}, f"{key}[{i}]", kind=kind) for i, v in enumerate(raw)]


def _merge(cfg: dict, **flags) -> dict:
    """Config values overridden by flags that were actually given."""
    merged = dict(cfg)
    for k, v in flags.items():
        if v is not None:
            merged[k] = v
    return merged


# -- curves ---------------------------------------------------------------------

def _r_grid(start: float, stop: float, step: float) -> list:
    if not step > 0:
        raise ParseError(f"R_grid step must be > 0, got {step}", field="R_grid.step")
    if start > stop:
        raise ParseError(f"R_grid start {start} exceeds stop {stop}", field="R_grid.start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _parse_grid_flag(text: str) -> dict:
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"--R expects START:STOP:STEP or a single value, got {text!r}",
                         field="R_grid") from None
    if len(vals) == 1:
        return {"start": vals[0], "stop": vals[0], "step": 1.0}
    if len(vals) == 3:
        return {"start": vals[0], "stop": vals[1], "step": vals[2]}
    raise ParseError(f"--R expects START:STOP:STEP or a single value, got {text!r}",
                     field="R_grid")


def resolve_curves(cfg: dict) -> dict:
    _check_keys(cfg, {"gamma", "gammas", "R_grid", "C_list", "P_list", "output", "figure"})
    if "gammas" in cfg and "gamma" in cfg:
        raise ParseError("give either gamma or gammas, not both", field="gammas")
    if "gammas" in cfg:
        gammas = _number_list(cfg, "gammas", None, kind="variance")
    else:
        gammas = [_number(cfg, "gamma", 1.0, kind="variance")]
    grid = cfg.get("R_grid", {"start": 0.0, "stop": 2.0, "step": 0.01})
    if not isinstance(grid, dict):
        raise ParseError("R_grid must be an object {start, stop, step}", field="R_grid")
    _check_keys(grid, {"start", "stop", "step"}, "R_grid.")
    start = _number(grid, "start", 0.0, kind="rate")
    stop = _number(grid, "stop", 2.0, kind="rate")
    step = _number(grid, "step", 0.01, kind="rate")
    _r_grid(start, stop, step)
    resolved = {
        "R_grid": {"start": start, "stop": stop, "step": step},
        "C_list": _number_list(cfg, "C_list", [0.0, 1.0, "inf"], kind="rate_inf"),
        "P_list": _number_list(cfg, "P_list", [0.1], kind="budget"),
        "output": str(cfg.get("output", "curves.csv")),
        "figure": bool(cfg.get("figure", False)),
    }
    if len(gammas) == 1:
        resolved["gamma"] = gammas[0]
    else:
        resolved["gammas"] = gammas
    return resolved


def curve_rows(resolved: dict) -> list:
    g = resolved["R_grid"]
    Rs = _r_grid(g["start"], g["stop"], g["step"])
    rows = []
    if "gammas" in resolved:
        src = DiagGaussianSource(tuple(resolved["gammas"]))
        for C in resolved["C_list"]:
            for P in resolved["P_list"]:
                for R in Rs:
                    rows.append((R, C, P, solve_allocation(src, TradeoffQuery(R, C, P)).D))
    else:
        gamma = resolved["gamma"]
        for C in resolved["C_list"]:
            for P in resolved["P_list"]:
                for R in Rs:
                    rows.append((R, C, P, dstar_value(gamma, R, C, P)))
    return rows


def write_curves_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVES_HEADER)
        for row in rows:
            w.writerow([fmt_number(v) for v in row])


def cmd_curves(resolved: dict) -> dict:
    rows = curve_rows(resolved)
    out = Path(resolved["output"])
    write_curves_csv(out, rows)
    script = plotting.write_gnuplot(out.with_suffix(".gp"), out, rows)
    files = {"csv": str(out), "gnuplot": str(script)}
    if resolved["figure"]:
        files["png"] = str(plotting.render_png(out.with_suffix(".png"), rows))
    return {"rows": len(rows), "files": files, "resolved_config": resolved}


# -- thresholds -----------------------------------------------------------------

def resolve_thresholds(cfg: dict) -> dict:
    _check_keys(cfg, {"gamma", "R", "C", "P", "output"})
    resolved = {"gamma": _number(cfg, "gamma", 1.0, kind="variance")}
    for key, kind in (("R", "rate"), ("C", "rate_inf"), ("P", "budget")):
        resolved[key] = _number(cfg, key, kind=kind) if cfg.get(key) is not None else None
    given = [k for k in ("R", "C", "P") if resolved[k] is not None]
    if len(given) < 2:
        raise ParseError("thresholds needs at least two of R, C, P", field="R")
    resolved["output"] = cfg.get("output")
    return resolved


def _threshold(fn, *args):
    try:
        return fn(*args)
    except NoFiniteThreshold:
        return "none"


def cmd_thresholds(resolved: dict) -> dict:
    src = GaussianScalarSource(resolved["gamma"])
    R, C, P = resolved["R"], resolved["C"], resolved["P"]
    table = {"P_threshold": None, "C_threshold": None, "R_threshold": None}
    if R is not None and C is not None:
        table["P_threshold"] = perception_threshold_P(src, R, C)
    if R is not None and P is not None:
        table["C_threshold"] = _threshold(common_randomness_threshold_C, src, R, P)
    if C is not None and P is not None:
        table["R_threshold"] = _threshold(rate_threshold_R, src, C, P)
    return {"thresholds": table, "resolved_config": resolved}


def format_threshold_table(result: dict) -> str:
    lines = ["threshold  value"]
    for k, v in result["thresholds"].items():
        if v is None:
            text = "-"
        elif isinstance(v, str):
            text = v
        else:
            text = fmt_number(v)
        lines.append(f"{k[0]:<10} {text}")
    return "\n".join(lines) + "\n"


# -- vector ---------------------------------------------------------------------

def resolve_vector(cfg: dict) -> dict:
    _check_keys(cfg, {"gammas", "gamma", "R", "C", "P", "solver", "output"})
    if "gammas" in cfg:
        gammas = _number_list(cfg, "gammas", None, kind="variance")
    elif "gamma" in cfg:
        gammas = [_number(cfg, "gamma", kind="variance")]
    else:
        raise ParseError("missing required field 'gammas'", field="gammas")
    solver = cfg.get("solver", {}) or {}
    if not isinstance(solver, dict):
        raise ParseError("solver must be an object", field="solver")
    _check_keys(solver, {"max_rounds", "round_tol", "oracle", "grid_step"}, "solver.")
    return {
        "gammas": gammas,
        "R": _number(cfg, "R", kind="rate"),
        "C": _number(cfg, "C", 0.0, kind="rate_inf"),
        "P": _number(cfg, "P", INF, kind="budget"),
        "solver": {
            "max_rounds": _integer(solver, "max_rounds", MAX_ROUNDS, minimum=1),
            "round_tol": _number(solver, "round_tol", ROUND_TOL, kind="budget"),
            "oracle": bool(solver.get("oracle", False)),
            "grid_step": _number(solver, "grid_step", 0.02, kind="budget"),
        },
        "output": cfg.get("output"),
    }


def cmd_vector(resolved: dict) -> dict:
    src = DiagGaussianSource(tuple(resolved["gammas"]))
    q = TradeoffQuery(resolved["R"], resolved["C"], resolved["P"])
    s = resolved["solver"]
    sol = solve_allocation(src, q, max_rounds=s["max_rounds"], round_tol=s["round_tol"])
    out = sol.to_dict()
    out["universality_gap"] = universality_gap(src, q.R, q.C).to_dict()
    if s["oracle"]:
        out["oracle"] = brute_force_oracle(src, q, grid_step=s["grid_step"]).to_dict()
    out["resolved_config"] = resolved
    return out


# -- simulate -------------------------------------------------------------------

def resolve_simulate(cfg: dict) -> dict:
    _check_keys(cfg, {"n", "R", "C", "gamma", "seed", "budget", "n_codebooks", "P", "trials",
                      "estimator", "output", "csv"})
    est = cfg.get("estimator", {}) or {}
    if not isinstance(est, dict):
        raise ParseError("estimator must be an object", field="estimator")
    _check_keys(est, {"pilot_fraction", "cover_subcodebooks", "cover_draws",
                      "posterior_samples"}, "estimator.")
    defaults = EstimatorConfig()
    pilot = _number(est, "pilot_fraction", defaults.pilot_fraction, kind="budget")
    if not 0 < pilot <= 1:
        raise ParseError(f"pilot_fraction must lie in (0, 1], got {pilot}",
                         field="estimator.pilot_fraction")
    resolved = {
        "n": _integer(cfg, "n", minimum=1),
        "R": _number(cfg, "R", kind="rate"),
        "C": _number(cfg, "C", 0.0, kind="rate"),
        "gamma": _number(cfg, "gamma", 1.0, kind="variance"),
        "seed": _integer(cfg, "seed", 0),
        "budget": _integer(cfg, "budget", 2 ** 22, minimum=1),
        "n_codebooks": _integer(cfg, "n_codebooks", 5, minimum=1),
        "P": _number(cfg, "P", 0.0, kind="budget"),
        "trials": _integer(cfg, "trials", minimum=1),
        "estimator": {
            "pilot_fraction": pilot,
            "cover_subcodebooks": _integer(est, "cover_subcodebooks",
                                           defaults.cover_subcodebooks, minimum=1),
            "cover_draws": _integer(est, "cover_draws", defaults.cover_draws, minimum=1),
            "posterior_samples": _integer(est, "posterior_samples",
                                          defaults.posterior_samples, minimum=1),
        },
    }
    # destinations stay out of resolved_config so the JSON depends only on the run
    resolved["io"] = {"output": cfg.get("output"), "csv": cfg.get("csv")}
    return resolved


def cmd_simulate(resolved: dict) -> dict:
    cfg = CodebookConfig(n=resolved["n"], R=resolved["R"], C=resolved["C"],
                         gamma=resolved["gamma"], seed=resolved["seed"],
                         budget=resolved["budget"], n_codebooks=resolved["n_codebooks"])
    res = run_trials(cfg, resolved["P"], resolved["trials"],
                     EstimatorConfig(**resolved["estimator"]))
    out = res.to_dict()
    out["resolved_config"] = {k: v for k, v in resolved.items() if k != "io"}
    return out


def simulate_csv_row(resolved: dict, result: dict) -> list:
    vals = [resolved["n"], resolved["R"], resolved["C"], resolved["P"], resolved["trials"],
            result["empirical_distortion"], result["empirical_distortion_se"],
            result["empirical_w2_per_symbol"], result["soft_covering_gap"],
            result["reference"], resolved["seed"]]
    return [fmt_number(v) for v in vals]


def append_simulate_csv(path, row):
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(SIMULATE_HEADER)
        w.writerow(row)


# -- entry point ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wrdp", description="Gaussian distortion-rate-perception tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("curves", help="sweep D*(R, C, P) over an R grid to CSV")
    c.add_argument("--config")
    c.add_argument("--gamma", type=str)
    c.add_argument("--gammas", type=str, nargs="+")
    c.add_argument("--R", type=str, help="START:STOP:STEP")
    c.add_argument("--C", type=str, nargs="+")
    c.add_argument("--P", type=str, nargs="+")
    c.add_argument("--out")
    c.add_argument("--figure", action="store_true", default=None,
                   help="also render a PNG with matplotlib")

    t = sub.add_parser("thresholds", help="perception-inactive thresholds in P, C and R")
    t.add_argument("--config")
    t.add_argument("--gamma", type=str)
    t.add_argument("--R", type=str)
    t.add_argument("--C", type=str)
    t.add_argument("--P", type=str)
    t.add_argument("--out")
    t.add_argument("--table", action="store_true", help="print a text table instead of JSON")

    v = sub.add_parser("vector", help="optimal rate allocation for a diagonal Gaussian source")
    v.add_argument("--config")
    v.add_argument("--gamma", "--gammas", dest="gammas", type=str, nargs="+")
    v.add_argument("--R", type=str)
    v.add_argument("--C", type=str)
    v.add_argument("--P", type=str)
    v.add_argument("--out")

    s = sub.add_parser("simulate", help="Monte-Carlo run of the random-codebook scheme")
    s.add_argument("--config")
    s.add_argument("--gamma", type=str)
    s.add_argument("--n", type=int)
    s.add_argument("--R", type=str)
    s.add_argument("--C", type=str)
    s.add_argument("--P", type=str)
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="JSON result path (default: stdout)")
    s.add_argument("--csv", help="CSV file to append a row to (default: OUT with .csv)")
    return p


def _num_flag(x):
    """Flag text to a JSON-like value; bad text is reported by the resolver."""
    if x is None:
        return None
    try:
        return decode_number(x)
    except ValueError:
        return x


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    if args.command == "curves":
        flags = {"gamma": _num_flag(args.gamma), "output": args.out, "figure": args.figure}
        if args.gammas:
            flags["gammas"] = [_num_flag(x) for x in args.gammas]
            cfg.pop("gamma", None)
        elif args.gamma is not None:
            cfg.pop("gammas", None)
        if args.R:
            flags["R_grid"] = _parse_grid_flag(args.R)
        if args.C:
            flags["C_list"] = [_num_flag(x) for x in args.C]
        if args.P:
            flags["P_list"] = [_num_flag(x) for x in args.P]
        result = cmd_curves(resolve_curves(_merge(cfg, **flags)))
        sys.stdout.write(dumps(result))
    elif args.command == "thresholds":
        resolved = resolve_thresholds(_merge(
            cfg, gamma=_num_flag(args.gamma), R=_num_flag(args.R), C=_num_flag(args.C),
            P=_num_flag(args.P), output=args.out))
        result = cmd_thresholds(resolved)
        if args.table:
            sys.stdout.write(format_threshold_table(result))
        else:
            _emit(result, resolved["output"])
    elif args.command == "vector":
        gammas = [_num_flag(x) for x in args.gammas] if args.gammas else None
        if gammas is not None:
            cfg.pop("gamma", None)
        resolved = resolve_vector(_merge(cfg, gammas=gammas, R=_num_flag(args.R),
                                         C=_num_flag(args.C), P=_num_flag(args.P),
                                         output=args.out))
        _emit(cmd_vector(resolved), resolved["output"])
    else:
        resolved = resolve_simulate(_merge(
            cfg, n=args.n, R=_num_flag(args.R), C=_num_flag(args.C), P=_num_flag(args.P),
            gamma=_num_flag(args.gamma), trials=args.trials, seed=args.seed,
            output=args.out, csv=args.csv))
        result = cmd_simulate(resolved)
        io = resolved["io"]
        _emit(result, io["output"])
        csv_path = io["csv"]
        if csv_path is None and io["output"]:
            csv_path = str(Path(io["output"]).with_suffix(".csv"))
        if csv_path:
            append_simulate_csv(csv_path, simulate_csv_row(resolved, result))
    return EXIT_OK


def _error_payload(exc: BaseException) -> dict:
    payload: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("field", "line", "column"):
        val = getattr(exc, attr, None)
        if val is not None:
            payload[attr] = val
    if getattr(exc, "iterates", None) is not None:
        payload["iterates"] = exc.iterates
    return payload


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except Exception as e:  # noqa: BLE001 - every failure is reported as JSON
        if isinstance(e, WRDPError):
            code = EXIT_INPUT
        elif isinstance(e, OSError):
            code = EXIT_IO
        else:
            code = EXIT_INTERNAL
        sys.stderr.write(json.dumps(_jsonable(_error_payload(e))) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
