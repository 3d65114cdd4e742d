"""Command-line entry point: ``ormdgate {simulate,optimize,scan,mcwf,baseline}``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
Every JSON or CSV file written embeds the resolved configuration and seed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .baseline import DEFAULT_OMEGA_MHZ, pi_gap_pi
from .config import ConfigError
from .gatemetrics import simulate_gate
from .optimizer import DesignProblem, optimize
from .propagator import IntegrationError, time_series
from .trajectories import NoiseModel, mcwf_fidelity
from .waveforms import angular

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
SCAN_PARAMS = ("B", "linewidth", "temperature", "delta")


class UsageError(Exception):
    pass


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        bundled = files("ormdgate") / "fixtures" / p.name
        if p.parent == Path(".") and bundled.is_file():
            return cfgmod.validate(json.loads(bundled.read_text()))
        raise ConfigError(f"{path}: no such file")
    return cfgmod.load(p)


def _is_baseline(config: dict) -> bool:
    return config["protocol"]["scheme"] == "pi-gap-pi"


def _require_ormd(config: dict, command: str) -> None:
    if _is_baseline(config):
        raise UsageError(f"{command} needs an ORMD protocol, not pi-gap-pi")


def _noise(config: dict, args) -> NoiseModel:
    if "noise" not in config:
        raise UsageError("this command needs a 'noise' block in the configuration")
    noise = dict(config["noise"])
    if getattr(args, "seed", None) is not None:
        noise["seed"] = args.seed
    if getattr(args, "trajectories", None) is not None:
        noise["n_trajectories"] = args.trajectories
    return NoiseModel(**noise)


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", newline="") as fh:
            fh.write(text)


def _compact(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _target(config: dict) -> str:
    # pi-gap-pi natively produces diag(1, -1, -1, -1), a C-PHASE up to local Z
    return config.get("target", "ControlledPhase" if _is_baseline(config) else "ControlledZ")


def _fidelity(report, target: str) -> float:
    return report.fidelity_cz if target == "ControlledZ" else report.fidelity_cphase_corrected


# ------------------------------------------------------------------ commands


def cmd_simulate(config: dict, args) -> dict:
    _require_ormd(config, "simulate")
    scheme, params = cfgmod.protocol_from_dict(config["protocol"])
    rel_tol = config.get("rel_tol", 1e-10)
    report, outcomes = simulate_gate(scheme, params, rel_tol)
    if args.timeseries:
        stem = Path(args.timeseries)
        header = [f"config: {_compact(config)}", "seed: null"]
        for label, sub in (("Q01", "Q01"), ("Q10", "Q10"), ("Q11", "Q11sym")):
            ts = time_series(scheme, params, sub, config.get("timeseries_samples", 201), rel_tol)
            path = stem.with_name(f"{stem.stem}_{label}{stem.suffix or '.csv'}")
            with open(path, "w", newline="") as fh:
                ts.write_csv(fh, header + [f"subspace: {label}"])
    return {"command": "simulate", "config": config, "seed": None, "report": report.to_dict()}


def cmd_optimize(config: dict, args) -> dict:
    _require_ormd(config, "optimize")
    config = copy.deepcopy(config)
    design = config.setdefault("design", {})
    if args.seed is not None:
        design["seed"] = args.seed
    if "target" not in design and "target" in config:
        design["target"] = config["target"]
    problem = DesignProblem.from_config(config)
    solution = optimize(problem, n_jobs=args.workers)
    if not math.isfinite(solution.infidelity) or solution.infidelity >= 1.0:
        raise IntegrationError("optimizer found no finite solution", 0.0)
    return solution.to_dict()


def cmd_mcwf(config: dict, args) -> dict:
    _require_ormd(config, "mcwf")
    model = _noise(config, args)
    scheme, params = cfgmod.protocol_from_dict(config["protocol"])
    est = mcwf_fidelity(scheme, params, model, target=_target(config),
                        rel_tol=config.get("rel_tol", 1e-9), n_jobs=args.workers)
    resolved = copy.deepcopy(config)
    resolved["noise"] = model.to_dict()
    return {"command": "mcwf", "config": resolved, "seed": model.seed, "estimate": est.to_dict()}


def _baseline_args(proto: dict) -> tuple[float, float, float, float]:
    b = proto.get("blockade_mhz", "infinite")
    return (angular(proto.get("omega_mhz", DEFAULT_OMEGA_MHZ)),
            math.inf if b == "infinite" else angular(b),
            angular(proto.get("forster_penalty_mhz", 0.0)), float(proto.get("gap_us", 0.0)))


def cmd_baseline(config: dict, args) -> dict:
    if not _is_baseline(config):
        raise UsageError("baseline needs a protocol with scheme 'pi-gap-pi'")
    res = pi_gap_pi(*_baseline_args(config["protocol"]))
    out = res.report.to_dict()
    out["duration_us"] = res.duration
    return {"command": "baseline", "config": config, "seed": None, "report": out}


# ---------------------------------------------------------------------- scan


def _scan_point(task):
    config, param, value, workers = task
    cfg = copy.deepcopy(config)
    proto = cfg["protocol"]
    target = _target(cfg)
    if param == "B":
        proto["blockade_mhz"] = value
    elif param == "delta":
        proto["delta_2photon_mhz"] = value
    if _is_baseline(cfg):
        rep = pi_gap_pi(*_baseline_args(proto)).report
        return [value, abs(rep.a_11) ** 2, rep.conditional_phase, _fidelity(rep, target), 0.0]
    scheme, params = cfgmod.protocol_from_dict(proto)
    if param in ("linewidth", "temperature"):
        model = NoiseModel(**cfg["noise"])
        key = "rydberg_linewidth_khz" if param == "linewidth" else "temperature_uk"
        model = replace(model, **{key: value})
        est = mcwf_fidelity(scheme, params, model, target=target,
                            rel_tol=cfg.get("rel_tol", 1e-9), n_jobs=workers)
        return [value, est.p11_return, est.conditional_phase, est.mean, est.standard_error]
    rep, _ = simulate_gate(scheme, params, cfg.get("rel_tol", 1e-10))
    return [value, abs(rep.a_11) ** 2, rep.conditional_phase, _fidelity(rep, target), 0.0]


def scan_grid(start: float, stop: float, points: int, log: bool) -> np.ndarray:
    if points < 2:
        raise UsageError("--points must be at least 2")
    if log:
        if start <= 0 or stop <= 0:
            raise UsageError("--log needs positive --from and --to")
        grid = np.geomspace(start, stop, points)
    else:
        grid = np.linspace(start, stop, points)
    grid[0], grid[-1] = start, stop
    return grid


def cmd_scan(config: dict, args) -> str:
    param = args.param
    if param not in SCAN_PARAMS:
        raise UsageError(f"--param must be one of {', '.join(SCAN_PARAMS)}")
    if args.start is None or args.stop is None or args.points is None:
        raise UsageError("scan needs --from, --to and --points")
    config = copy.deepcopy(config)
    seed = None
    if param in ("linewidth", "temperature"):
        _require_ormd(config, f"a {param} scan")
        model = _noise(config, args)
        config["noise"] = model.to_dict()
        seed = model.seed
    elif _is_baseline(config) and param != "B":
        raise UsageError("pi-gap-pi supports only --param B")
    grid = scan_grid(args.start, args.stop, args.points, args.log)
    tasks = [(config, param, float(v), 1) for v in grid]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(_scan_point, tasks))
    else:
        rows = [_scan_point(t) for t in tasks]
    column = {"B": "blockade_mhz", "linewidth": "rydberg_linewidth_khz",
              "temperature": "temperature_uk", "delta": "delta_2photon_mhz"}[param]
    buf = io.StringIO()
    buf.write(f"# config: {_compact(config)}\n")
    buf.write(f"# seed: {'null' if seed is None else seed}\n")
    buf.write(f"# scan: {_compact({'param': param, 'from': args.start, 'to': args.stop, 'points': args.points, 'log': args.log})}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([column, "p11_return", "conditional_phase_rad", "fidelity", "fidelity_standard_error"])
    for row in rows:
        writer.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ormdgate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", required=True, metavar="PATH",
                       help="JSON configuration (bundled fixture names are also accepted)")
        p.add_argument("--output", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--workers", type=int, default=1, metavar="N", help="worker processes")
        if seed:
            p.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
        return p

    p = common(sub.add_parser("simulate", help="closed-system gate report"))
    p.add_argument("--timeseries", metavar="PATH",
                   help="write per-subspace CSVs as PATH_<subspace>.csv")
    common(sub.add_parser("optimize", help="search waveform parameters"), seed=True)
    p = common(sub.add_parser("mcwf", help="noisy fidelity by quantum trajectories"), seed=True)
    p.add_argument("--trajectories", type=int, metavar="N", help="override the trajectory count")
    p = common(sub.add_parser("scan", help="sweep one parameter and write CSV"), seed=True)
    p.add_argument("--param", required=True, metavar="NAME", help="one of " + ", ".join(SCAN_PARAMS))
    p.add_argument("--from", dest="start", type=float, metavar="X")
    p.add_argument("--to", dest="stop", type=float, metavar="Y")
    p.add_argument("--points", type=int, metavar="N")
    p.add_argument("--log", action="store_true", help="geometric grid")
    p.add_argument("--trajectories", type=int, metavar="N", help="override the trajectory count")
    common(sub.add_parser("baseline", help="pi-gap-pi comparator report"))
    return parser


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "mcwf": cmd_mcwf,
            "scan": cmd_scan, "baseline": cmd_baseline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise UsageError("--workers must be positive")
        if getattr(args, "trajectories", None) is not None and args.trajectories < 1:
            raise UsageError("--trajectories must be positive")
        config = _load_config(args.config)
        result = COMMANDS[args.command](config, args)
    except (ConfigError, UsageError) as exc:
        print(f"ormdgate: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"ormdgate: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"ormdgate: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(result if isinstance(result, str) else cfgmod.dumps(result), args.output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
