"""Command-line front end.

Exit codes: 0 success (``solve``: status optimal), 1 parse or invariant
error, 2 iteration limit, 3 infeasible or failed validation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config
from .errors import InfeasibleProblemError, ModeMisuseError, PoleError, RieszError
from .kelvin import identity_suite
from .measure import check_feasible, vector_measure_csv
from .parallel import THREADS_ENV, thread_scope
from .solver import (
    ITERATION_LIMIT,
    OPTIMAL,
    capacity_estimate,
    short_circuit_probe,
    solve_constrained,
    validate_problem,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ITERATION_LIMIT = 2
EXIT_INFEASIBLE = 3

KELVIN_TOL = 1e-10


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _out_dir(path: Optional[str]) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "residual"])
    for i, (obj, res) in enumerate(trace):
        w.writerow([i, _f(obj), _f(res)])
    return buf.getvalue()


def probe_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "objective", "near_fraction_pos", "near_fraction_neg", "upper_active_count"])
    for L, obj, f1, f2, ua in report.rows():
        w.writerow([L, _f(obj), _f(f1), _f(f2), ua])
    return buf.getvalue()


# -- commands -----------------------------------------------------------------

def cmd_solve(cfg: Config, out: Path, seed: Optional[int]) -> int:
    t0 = time.perf_counter()
    problem = cfg.problem()
    opts = cfg.solve_options(seed)
    report = validate_problem(problem)
    t1 = time.perf_counter()
    envelope = {
        "config_hash": cfg.hash,
        "validation": report.as_dict(),
    }
    if not report.ok:
        envelope["result"] = {"status": "infeasible", "message": "validation failed: "
                              + ", ".join(report.failed())}
        _write(out / "result.json", _dump(envelope))
        _err("problem hypotheses violated: " + ", ".join(report.failed()))
        return EXIT_INFEASIBLE
    try:
        res = solve_constrained(problem, opts)
    except InfeasibleProblemError as exc:
        envelope["result"] = {"status": "infeasible", "message": str(exc)}
        _write(out / "result.json", _dump(envelope))
        _err(str(exc))
        return EXIT_INFEASIBLE
    t2 = time.perf_counter()
    _write(out / "weights.csv", vector_measure_csv(res.weights))
    _write(out / "trace.csv", trace_csv(res.trace))
    summary = res.summary()
    summary["feasibility"] = check_feasible(res.weights, problem).as_dict()
    envelope.update({
        "result": summary,
        "weights": "weights.csv",
        "trace": "trace.csv",
        "timings": {"setup_s": t1 - t0, "solve_s": t2 - t1},
    })
    _write(out / "result.json", _dump(envelope))
    print(f"status={res.status} objective={_f(res.objective)} kkt={_f(res.kkt_residual)} "
          f"iterations={res.iterations}")
    if res.status == OPTIMAL:
        return EXIT_OK
    if res.status == ITERATION_LIMIT:
        return EXIT_ITERATION_LIMIT
    return EXIT_INFEASIBLE


def cmd_validate(cfg: Config) -> int:
    report = validate_problem(cfg.problem())
    print(_dump({"config_hash": cfg.hash, **report.as_dict()}))
    if not report.ok:
        _err("failed: " + ", ".join(report.failed()))
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_kelvin_check(cfg: Config, seed: int, count: Optional[int]) -> int:
    geom = cfg.geometry()
    spec = cfg.kernel(geom.plate_pos.cell_size)
    settings = cfg.kelvin_settings()
    worst = identity_suite(geom, spec, seed=seed,
                           count=count if count is not None else settings["count"],
                           max_atoms=settings["max_atoms"])
    for name, val in worst.items():
        flag = "ok" if val <= KELVIN_TOL else "FAIL"
        print(f"{name:<12} {_f(val):>24}  {flag}")
    return EXIT_OK if all(v <= KELVIN_TOL for v in worst.values()) else EXIT_ERROR


def cmd_capacity(cfg: Config, out: Optional[Path], seed: Optional[int]) -> int:
    cloud = cfg.capacity_cloud()
    spec = cfg.kernel(cloud.cell_size)
    res = capacity_estimate(cloud, spec, cfg.solve_options(seed))
    info = {
        "config_hash": cfg.hash,
        "n_points": len(cloud),
        "estimate": res.estimate,
        "min_energy": res.min_energy,
        "status": res.status,
    }
    print(_dump(info))
    if out is not None:
        _write(out / "capacity.json", _dump(info))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "weight"])
        for i, x in enumerate(res.equilibrium_weights.weights):
            w.writerow([i, _f(x)])
        _write(out / "equilibrium.csv", buf.getvalue())
    return EXIT_OK


def cmd_probe(cfg: Config, out: Path, levels: Optional[List[int]], seed: Optional[int]) -> int:
    settings = cfg.probe_settings()
    template = cfg.probe_template()
    report = short_circuit_probe(levels or settings["levels"], template,
                                 constrained=settings["constrained"], rho=settings["rho"],
                                 opts=cfg.solve_options(seed))
    _write(out / "probe.csv", probe_csv(report))
    _write(out / "probe.json", _dump({
        "config_hash": cfg.hash,
        "rho": report.rho,
        "constrained": report.constrained,
        "checks": report.checks,
        "levels": [lv.__dict__ for lv in report.levels],
    }))
    sys.stdout.write(probe_csv(report))
    for k, v in report.checks.items():
        print(f"# {k}: {v}")
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def _levels(text: str) -> List[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be integers, got {text!r}") from None
    if not vals or any(v < 2 for v in vals):
        raise argparse.ArgumentTypeError("levels must be integers >= 2")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riesz-condenser",
                                description="Constrained Riesz energy problems on two-plate condensers.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="problem configuration (JSON)")
        if out:
            sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")
        return sp

    common(sub.add_parser("solve", help="solve the configured problem"))
    common(sub.add_parser("validate", help="check the problem hypotheses"), out=False)
    kc = common(sub.add_parser("kelvin-check", help="randomized inversion identity suite"), out=False)
    kc.add_argument("--count", type=int, default=None)
    common(sub.add_parser("capacity", help="interior capacity of one cloud"))
    pr = common(sub.add_parser("probe", help="refinement study at the touching point"))
    pr.add_argument("--levels", type=_levels, default=None, help="comma-separated resolutions")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with thread_scope(args.threads):
            cfg = load_config(args.config)
            if args.command == "solve":
                return cmd_solve(cfg, _out_dir(args.out), args.seed)
            if args.command == "validate":
                return cmd_validate(cfg)
            if args.command == "kelvin-check":
                return cmd_kelvin_check(cfg, args.seed if args.seed is not None else 0, args.count)
            if args.command == "capacity":
                return cmd_capacity(cfg, _out_dir(args.out) if args.out else None, args.seed)
            if args.command == "probe":
                return cmd_probe(cfg, _out_dir(args.out), args.levels, args.seed)
    except ConfigError as exc:
        _err(f"config {exc}")
        return EXIT_ERROR
    except ModeMisuseError as exc:
        _err(f"mode misuse: {exc}")
        return EXIT_ERROR
    except PoleError as exc:
        _err(f"pole: {exc}")
        return EXIT_ERROR
    except InfeasibleProblemError as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    except (RieszError, ValueError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
