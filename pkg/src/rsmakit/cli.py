"""Command-line experiment runner: one JSON config in, one CSV out.

    rsmakit run config.json [--output out.csv] [--seed N] [--no-timestamp] [--threads N]

Exit status: 0 on success, 2 on an invalid config, 3 when every solve in
the run was infeasible (or every table row degenerate).
"""

import argparse
import csv
import datetime
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import jsonschema

from .channel import MobilityParams, make_angle_channels, time_correlation
from .fbl import FblConfig
from .ipm import BarrierOptions
from .mobility import DegenerateBound, bound_terms, lower_bound, t_opt_closed_form, t_opt_exhaustive
from .montecarlo import McConfig, sweep
from .optimizer import SolverOptions, WsrProblem, solve_noma, solve_rsma, solve_sdma

logger = logging.getLogger("rsmakit")

EXIT_INVALID = 2
EXIT_ALL_FAILED = 3

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_POS_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_SPEEDS = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_FREQ = {"type": "number", "exclusiveMinimum": 0}

_FBL_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["blocklengths"],
    "properties": {
        "angles_deg": {"type": "array", "minItems": 1,
                       "items": {"type": "number", "minimum": 0, "maximum": 90}},
        "blocklengths": _POS_INT_LIST,
        "include_infinite": {"type": "boolean"},
        "snr_db": {"type": "number"},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0},
                    "minItems": 2, "maxItems": 2},
        "qos_rates": {"type": "array", "items": {"type": "number", "minimum": 0},
                      "minItems": 2, "maxItems": 2},
        "schemes": {"type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"enum": ["RSMA", "SDMA", "NOMA"]}},
        "bler": {
            "type": "object", "additionalProperties": False,
            "properties": {s: {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5}
                           for s in ("RSMA", "SDMA", "NOMA")},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "max_iterations": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "restarts": {"type": "integer", "minimum": 1, "maximum": 3},
                "barrier": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "gap_tol": {"type": "number", "exclusiveMinimum": 0},
                        "t0": {"type": "number", "exclusiveMinimum": 0},
                        "mu": {"type": "number", "exclusiveMinimum": 1},
                        "max_newton": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
    },
}

_MOBILITY_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_t": {"type": "integer", "minimum": 1},
        "K": {"type": "integer", "minimum": 1},
        "snr_db": _NUM_LIST,
        "speeds_kmh": _SPEEDS,
        "schemes": {"type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"enum": ["RSMA-topt", "RSMA-grid", "SDMA"]}},
        "num_draws": {"type": "integer", "minimum": 1},
        "granularity": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "f_c": _FREQ,
        "T": _FREQ,
    },
}

_TOPT_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_t": _POS_INT_LIST,
        "K": _POS_INT_LIST,
        "snr_db": _NUM_LIST,
        "speeds_kmh": _SPEEDS,
        "granularity": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "f_c": _FREQ,
        "T": _FREQ,
    },
}


def _experiment_schema(name, params):
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["experiment"] + (["parameters"] if params.get("required") else []),
        "properties": {
            "experiment": {"const": name},
            "output": {"type": "string", "minLength": 1},
            "seed": _SEED,
            "threads": {"type": "integer", "minimum": 1},
            "parameters": params,
        },
    }


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {"experiment": {"enum": ["fbl-sweep", "mobility-sweep", "topt-table"]}},
    "allOf": [
        {"if": {"properties": {"experiment": {"const": name}}},
         "then": _experiment_schema(name, params)}
        for name, params in [("fbl-sweep", _FBL_PARAMS),
                             ("mobility-sweep", _MOBILITY_PARAMS),
                             ("topt-table", _TOPT_PARAMS)]
    ],
}

FBL_DEFAULTS = {
    "angles_deg": [20, 40, 60, 80],
    "include_infinite": True,
    "snr_db": 20.0,
    "weights": [1.0, 1.0],
    "qos_rates": [0.0, 0.0],
    "schemes": ["RSMA", "SDMA", "NOMA"],
    "bler": {"RSMA": 5e-6, "SDMA": 1e-5, "NOMA": 5e-6},
    "solver": {},
}

MOBILITY_DEFAULTS = {
    "n_t": 32,
    "K": 8,
    "snr_db": [25, 35],
    "speeds_kmh": list(range(0, 130, 10)),
    "schemes": ["RSMA-topt", "RSMA-grid", "SDMA"],
    "num_draws": 10_000,
    "granularity": 1e-3,
    "f_c": 3.5e9,
    "T": 10e-3,
}

TOPT_DEFAULTS = {
    "n_t": [32],
    "K": [8],
    "snr_db": [25, 35],
    "speeds_kmh": list(range(0, 130, 10)),
    "granularity": 1e-3,
    "f_c": 3.5e9,
    "T": 10e-3,
}


class ConfigError(ValueError):
    pass


def validate_config(config) -> dict:
    """Schema check plus cross-field checks; returns parameters with defaults filled."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    defaults = {"fbl-sweep": FBL_DEFAULTS, "mobility-sweep": MOBILITY_DEFAULTS,
                "topt-table": TOPT_DEFAULTS}[config["experiment"]]
    params = {**defaults, **config.get("parameters", {})}
    if config["experiment"] == "fbl-sweep":
        params["bler"] = {**FBL_DEFAULTS["bler"], **params["bler"]}
        if not any(w > 0 for w in params["weights"]):
            raise ConfigError("parameters/weights: at least one weight must be positive")
    elif config["experiment"] == "mobility-sweep":
        if params["n_t"] < params["K"]:
            raise ConfigError("parameters: n_t must be at least K")
        _check_granularity(params["granularity"])
    else:
        # cells with n_t < K are skipped, but at least one must remain
        if max(params["n_t"]) < min(params["K"]):
            raise ConfigError("parameters: no (n_t, K) pair has n_t >= K")
        _check_granularity(params["granularity"])
    return params


def _check_granularity(g):
    if abs(round(1.0 / g) * g - 1.0) > 1e-9:
        raise ConfigError("parameters/granularity: 1/granularity must be an integer")


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


FBL_COLUMNS = ["scheme", "theta_deg", "theta_rad", "snr_db", "weight_1", "weight_2",
               "qos_1", "qos_2", "bler", "blocklength", "wsr", "iterations", "converged",
               "infeasible", "start"]


def run_fbl_sweep(params, seed=0, threads=1):
    """Rows for RSMA/SDMA/NOMA over angles and blocklengths; blocklength "inf"
    marks the infinite-blocklength reference."""
    del seed  # deterministic solver, recorded only for symmetry with other experiments
    solvers = {"RSMA": solve_rsma, "SDMA": solve_sdma, "NOMA": solve_noma}
    solver = dict(params["solver"])
    options = SolverOptions(**{**solver, "barrier": BarrierOptions(**solver.get("barrier", {}))})
    P = 10.0 ** (params["snr_db"] / 10.0)
    lengths = list(params["blocklengths"]) + ([None] if params["include_infinite"] else [])
    cells = [(s, a, n) for s in params["schemes"] for a in params["angles_deg"] for n in lengths]

    def solve(cell):
        scheme, angle, n = cell
        xi = params["bler"][scheme]
        fbl = None if n is None else FblConfig.uniform(n, 2, xi)
        problem = WsrProblem(make_angle_channels(math.radians(angle)), params["weights"], P, fbl,
                             params["qos_rates"])
        report = solvers[scheme](problem, options)
        logger.info("%s theta=%g N=%s wsr=%.4f", scheme, angle, n or "inf", report.objective)
        return {
            "scheme": scheme, "theta_deg": float(angle), "theta_rad": math.radians(angle),
            "snr_db": float(params["snr_db"]),
            "weight_1": float(params["weights"][0]), "weight_2": float(params["weights"][1]),
            "qos_1": float(params["qos_rates"][0]), "qos_2": float(params["qos_rates"][1]),
            "bler": xi if n is not None else "", "blocklength": "inf" if n is None else int(n),
            "wsr": report.objective if not report.infeasible else "",
            "iterations": report.iterations, "converged": report.converged,
            "infeasible": report.infeasible, "start": report.start,
        }

    rows = _map(solve, cells, threads)
    rows.sort(key=lambda r: (r["scheme"], r["theta_deg"],
                             math.inf if r["blocklength"] == "inf" else r["blocklength"]))
    all_failed = all(r["infeasible"] for r in rows)
    return FBL_COLUMNS, rows, all_failed


MOBILITY_COLUMNS = ["scheme", "n_t", "K", "f_c", "T", "speed_kmh", "snr_db", "epsilon",
                    "t_used", "num_draws", "seed", "mean_sum_rate", "std_error", "draw_checksum"]


def run_mobility_sweep(params, seed=0, threads=1):
    cfg = McConfig(num_draws=params["num_draws"], base_seed=seed, granularity=params["granularity"])
    results = sweep(params["n_t"], params["K"], params["speeds_kmh"], params["snr_db"],
                    params["schemes"], cfg, params["f_c"], params["T"], workers=threads)
    rows = [{
        "scheme": r.scheme.value, "n_t": params["n_t"], "K": params["K"],
        "f_c": float(params["f_c"]), "T": float(params["T"]),
        "speed_kmh": r.speed_kmh, "snr_db": r.snr_db, "epsilon": time_correlation(r.params),
        "t_used": r.estimate.t, "num_draws": r.estimate.num_draws, "seed": seed,
        "mean_sum_rate": r.estimate.mean_sum_rate, "std_error": r.estimate.std_error,
        "draw_checksum": r.estimate.draw_checksum,
    } for r in results]
    return MOBILITY_COLUMNS, rows, False


TOPT_COLUMNS = ["n_t", "K", "f_c", "T", "snr_db", "speed_kmh", "epsilon", "D", "theta_param",
                "rho", "omega", "t_opt", "t_grid", "bound_at_topt", "bound_at_grid_max",
                "granularity", "status"]


def run_topt_table(params, seed=0, threads=1):
    del seed  # no randomness
    cells = [(n_t, K, snr, v) for n_t in params["n_t"] for K in params["K"]
             for snr in params["snr_db"] for v in params["speeds_kmh"] if n_t >= K]

    def row(cell):
        n_t, K, snr, v = cell
        mp = MobilityParams(n_t, K, 10.0 ** (snr / 10.0), v / 3.6, params["f_c"], params["T"])
        terms = bound_terms(mp)
        out = {"n_t": n_t, "K": K, "f_c": float(params["f_c"]), "T": float(params["T"]),
               "snr_db": float(snr), "speed_kmh": float(v), "epsilon": time_correlation(mp),
               "D": terms.D, "theta_param": terms.theta_param, "rho": terms.rho,
               "omega": terms.omega, "granularity": params["granularity"]}
        try:
            t_opt = t_opt_closed_form(mp)
        except DegenerateBound:
            return {**out, "rho": "", "t_opt": "", "t_grid": "", "bound_at_topt": "",
                    "bound_at_grid_max": "", "status": "degenerate"}
        t_grid = t_opt_exhaustive(mp, params["granularity"])
        return {**out, "t_opt": t_opt.t, "t_grid": t_grid.t,
                "bound_at_topt": lower_bound(t_opt, mp), "bound_at_grid_max": lower_bound(t_grid, mp),
                "status": "ok"}

    rows = _map(row, cells, threads)
    rows.sort(key=lambda r: (r["n_t"], r["K"], r["snr_db"], r["speed_kmh"]))
    all_failed = bool(rows) and all(r["status"] == "degenerate" for r in rows)
    return TOPT_COLUMNS, rows, all_failed


RUNNERS = {"fbl-sweep": run_fbl_sweep, "mobility-sweep": run_mobility_sweep,
           "topt-table": run_topt_table}


def write_csv(path, columns, rows, timestamp=True):
    """RFC-4180 CSV (CRLF line ends); written to a temp file, then renamed."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rsmakit-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            if timestamp:
                now = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
                fh.write(f"# generated {now}\r\n")
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(columns)
            for r in rows:
                writer.writerow([_fmt(r[c]) for c in columns])
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def run(config, output=None, seed=None, timestamp=True, threads=None) -> int:
    """Validate, run and write; returns the process exit code."""
    params = validate_config(config)
    experiment = config["experiment"]
    seed = config.get("seed", 0) if seed is None else seed
    threads = config.get("threads", 1) if threads is None else threads
    output = output or config.get("output") or f"{experiment}.csv"
    columns, rows, all_failed = RUNNERS[experiment](params, seed=seed, threads=threads)
    write_csv(output, columns, rows, timestamp)
    logger.info("wrote %d rows to %s", len(rows), output)
    if all_failed:
        logger.error("every solve in the run failed")
        return EXIT_ALL_FAILED
    return 0


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="rsmakit", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run the experiment described by a JSON config")
    run_p.add_argument("config", help="path to the JSON config")
    run_p.add_argument("--output", help="CSV path (overrides the config)")
    run_p.add_argument("--seed", type=_seed, help="base seed (overrides the config)")
    run_p.add_argument("--no-timestamp", action="store_true",
                       help="omit the '# generated' first line so reruns are byte-identical")
    run_p.add_argument("--threads", type=_positive, help="worker threads; never changes results")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        logger.error("cannot read config: %s", exc)
        return EXIT_INVALID
    try:
        return run(config, args.output, args.seed, not args.no_timestamp, args.threads)
    except ConfigError as exc:
        logger.error("invalid config: %s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
