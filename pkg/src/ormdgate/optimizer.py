"""Pulse design: search Bernstein coefficients and detuning for a CZ / C-PHASE gate.

Free parameters are addressed by name:

``omega_p[k]`` / ``omega_s[k]``
    k-th (1-based) coefficient of a waveform drive, in MHz.  For TypeD the
    shared coefficient list is updated on both drives.
``omega_p`` / ``omega_s``
    value of a constant drive, in MHz.
``delta_mhz``
    two-photon detuning over 2pi, in MHz.

The search is Nelder-Mead inside the bounding box, restarted from
Latin-hypercube points, followed by a coordinate-wise golden-section polish
of the best point.
"""

from __future__ import annotations

import copy
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .config import protocol_from_dict
from .gatemetrics import GateReport, simulate_gate
from .propagator import IntegrationError, propagate_magnus, resolve_basis, subspace_hamiltonian

PENALTY = 10.0
TARGETS = ("ControlledZ", "ControlledPhase")

_NAME = re.compile(r"^(omega_p|omega_s)(?:\[(\d+)\])?$|^delta_mhz$")


@dataclass(frozen=True)
class FreeParameter:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not _NAME.match(self.name):
            raise ValueError(f"unknown free parameter {self.name!r}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ValueError(f"bounds of {self.name} must be finite and ordered")


def default_free_parameters(protocol: dict, coefficient_bounds=(0.0, 1000.0),
                            delta_bounds=(-50.0, 50.0)) -> list[FreeParameter]:
    """Every waveform coefficient plus the two-photon detuning."""
    out = []
    drives = ["omega_p"] if protocol["scheme"] == "TypeD" else ["omega_p", "omega_s"]
    for key in drives:
        drive = protocol.get(key)
        if drive and "waveform" in drive:
            for k in range(len(drive["waveform"]["coefficients_mhz"])):
                out.append(FreeParameter(f"{key}[{k + 1}]", *coefficient_bounds))
    out.append(FreeParameter("delta_mhz", *delta_bounds))
    return out


@dataclass(frozen=True)
class DesignProblem:
    """A gate-design task.

    ``protocol`` is a protocol dict in config form (MHz / us) whose free
    entries are overwritten by the search vector.  ``initial`` optionally
    warm-starts restart 0; all other restarts start from Latin-hypercube
    points drawn with ``seed``.
    """

    protocol: dict
    free_parameters: tuple[FreeParameter, ...]
    target: str = "ControlledZ"
    tolerance: float = 1e-4
    budget: int = 100_000
    max_restarts: int = 50
    restart_budget: int = 3000
    seed: int = 0
    initial: tuple[float, ...] | None = None
    search_rel_tol: float = 1e-8
    report_rel_tol: float = 1e-10
    search_steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "free_parameters", tuple(self.free_parameters))
        if not self.free_parameters:
            raise ValueError("at least one free parameter is required")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.initial is not None:
            object.__setattr__(self, "initial", tuple(float(v) for v in self.initial))
            if len(self.initial) != len(self.free_parameters):
                raise ValueError("initial point has the wrong length")
        names = [p.name for p in self.free_parameters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate free parameter")
        protocol_from_dict(self.instantiate_dict(self.template_vector()))

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.free_parameters])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.free_parameters])

    def template_vector(self) -> np.ndarray:
        """Current values of the free parameters in the template."""
        out = []
        for p in self.free_parameters:
            m = _NAME.match(p.name)
            if p.name == "delta_mhz":
                out.append(self.protocol["delta_2photon_mhz"])
            elif m.group(2) is None:
                out.append(self.protocol[m.group(1)]["constant_mhz"])
            else:
                out.append(self.protocol[m.group(1)]["waveform"]["coefficients_mhz"][int(m.group(2)) - 1])
        return np.array(out, dtype=float)

    def instantiate_dict(self, theta) -> dict:
        proto = copy.deepcopy(self.protocol)
        for p, v in zip(self.free_parameters, theta):
            v = float(v)
            m = _NAME.match(p.name)
            if p.name == "delta_mhz":
                proto["delta_2photon_mhz"] = v
                continue
            key, idx = m.group(1), m.group(2)
            if idx is None:
                proto[key] = {"constant_mhz": v}
                continue
            keys = ("omega_p", "omega_s") if proto["scheme"] == "TypeD" else (key,)
            for k in keys:
                proto[k]["waveform"]["coefficients_mhz"][int(idx) - 1] = v
        return proto

    def instantiate(self, theta):
        """Return ``(scheme, params)`` for a parameter vector."""
        return protocol_from_dict(self.instantiate_dict(theta))

    def to_dict(self) -> dict:
        return {
            "free_parameters": [{"name": p.name, "lower": p.lower, "upper": p.upper}
                                for p in self.free_parameters],
            "target": self.target,
            "tolerance": self.tolerance,
            "budget": self.budget,
            "max_restarts": self.max_restarts,
            "restart_budget": self.restart_budget,
            "seed": self.seed,
            "initial": None if self.initial is None else list(self.initial),
            "search_rel_tol": self.search_rel_tol,
            "report_rel_tol": self.report_rel_tol,
        }

    @classmethod
    def from_config(cls, config: dict) -> DesignProblem:
        design = dict(config.get("design", {}))
        protocol = config["protocol"]
        frees = design.pop("free_parameters", None)
        if frees is None:
            free = default_free_parameters(protocol)
        else:
            free = [FreeParameter(f["name"], f["lower"], f["upper"]) for f in frees]
        return cls(protocol=copy.deepcopy(protocol), free_parameters=tuple(free), **design)


def _gate_report(problem: DesignProblem, theta, rel_tol, n_steps) -> GateReport:
    scheme, params = problem.instantiate(theta)
    report, _ = simulate_gate(scheme, params, rel_tol, n_steps, reuse_symmetric=True)
    return report


def _infidelity(report: GateReport, target: str) -> float:
    f = report.fidelity_cz if target == "ControlledZ" else report.fidelity_cphase_corrected
    return 1.0 - f


def objective(theta, problem: DesignProblem) -> float:
    """Gate infidelity at ``theta``; ``PENALTY`` if propagation fails.

    Uses the problem's search tolerance (or fixed ``search_steps``).
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < problem.lower) or np.any(theta > problem.upper):
        raise ValueError("theta outside the declared bounds")
    try:
        report = _gate_report(problem, theta, problem.search_rel_tol, problem.search_steps)
        value = _infidelity(report, problem.target)
    except (IntegrationError, FloatingPointError, np.linalg.LinAlgError):
        return PENALTY
    return value if math.isfinite(value) else PENALTY


def _search_steps(problem: DesignProblem, theta) -> int:
    """Step count meeting the search tolerance at ``theta`` (largest over subspaces)."""
    scheme, params = problem.instantiate(theta)
    steps = 0
    for label in ("Q10", "Q11sym"):
        basis = resolve_basis(scheme, params, label)
        psi0 = np.zeros(basis.dim, complex)
        psi0[0] = 1.0
        fn = subspace_hamiltonian(scheme, params, label)
        _, n, _ = propagate_magnus(fn, psi0, 0.0, params.gate_time, problem.search_rel_tol)
        steps = max(steps, n)
    return steps


@dataclass
class _Restart:
    index: int
    thetas: np.ndarray
    values: np.ndarray


class _Converged(Exception):
    pass


def _initial_simplex(x0, lower, upper, frac=0.05):
    x0 = np.asarray(x0, dtype=float)
    simplex = [x0.copy()]
    for i in range(len(x0)):
        step = frac * (upper[i] - lower[i])
        x = x0.copy()
        x[i] = x0[i] + step if x0[i] + step <= upper[i] else x0[i] - step
        simplex.append(x)
    return np.array(simplex)


def _run_restart(problem: DesignProblem, index: int, x0) -> _Restart:
    lower, upper = problem.lower, problem.upper
    thetas, values = [], []
    stop_at = 0.5 * problem.tolerance

    def f(x):
        x = np.clip(x, lower, upper)
        v = objective(x, problem)
        thetas.append(x.copy())
        values.append(v)
        if v <= stop_at:
            raise _Converged
        return v

    try:
        minimize(f, np.clip(x0, lower, upper), method="Nelder-Mead",
                 bounds=list(zip(lower, upper)),
                 options={"maxfev": problem.restart_budget, "xatol": 1e-7, "fatol": 1e-14,
                          "initial_simplex": _initial_simplex(np.clip(x0, lower, upper), lower, upper),
                          "adaptive": len(x0) > 4})
    except _Converged:
        pass
    return _Restart(index, np.array(thetas), np.array(values))


def _golden(f, a: float, b: float, tol: float, max_iter: int = 40):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _polish(problem: DesignProblem, x, fx, budget: int):
    """One coordinate-wise golden-section sweep; only improvements are kept."""
    x = np.array(x, dtype=float)
    lower, upper = problem.lower, problem.upper
    used = 0
    for i in range(len(x)):
        if used >= budget:
            break
        span = 0.01 * (upper[i] - lower[i])
        a, b = max(lower[i], x[i] - span), min(upper[i], x[i] + span)

        def f1(v, i=i):
            nonlocal used
            used += 1
            y = x.copy()
            y[i] = v
            return objective(y, problem)

        v, fv = _golden(f1, a, b, 1e-7 * (upper[i] - lower[i]))
        if fv < fx:
            x[i], fx = v, fv
    return x, fx, used


@dataclass
class DesignSolution:
    """Best point found by :func:`optimize`."""

    problem: DesignProblem
    theta: np.ndarray
    infidelity: float
    report: GateReport
    evaluations: int
    converged: bool
    restarts: int = 0
    best_history: list = field(default_factory=list)

    @property
    def parameters(self) -> dict:
        return {p.name: float(v) for p, v in zip(self.problem.free_parameters, self.theta)}

    @property
    def protocol(self) -> dict:
        return self.problem.instantiate_dict(self.theta)

    def to_dict(self) -> dict:
        """Self-describing record; its ``protocol`` block is a valid simulate config."""
        return {
            "protocol": self.protocol,
            "design": self.problem.to_dict(),
            "solution": {
                "parameters": self.parameters,
                "infidelity": self.infidelity,
                "evaluations": self.evaluations,
                "converged": self.converged,
                "restarts": self.restarts,
                "best_history": list(self.best_history),
                "template_protocol": self.problem.protocol,
            },
            "report": self.report.to_dict(),
        }


def _start_points(problem: DesignProblem) -> np.ndarray:
    n = problem.max_restarts
    sampler = qmc.LatinHypercube(d=len(problem.free_parameters), seed=problem.seed)
    starts = qmc.scale(sampler.random(n), problem.lower, problem.upper)
    if problem.initial is not None:
        starts[0] = np.clip(problem.initial, problem.lower, problem.upper)
    return starts


def optimize(problem: DesignProblem, n_jobs: int = 1) -> DesignSolution:
    """Multi-start Nelder-Mead search.

    Restarts are processed in index order; with ``n_jobs > 1`` they are
    computed speculatively in batches, then each restart's evaluation history
    is truncated to the budget left by its predecessors.  Since Nelder-Mead is
    deterministic this reproduces the sequential result exactly, so the
    solution does not depend on the worker count.
    """
    starts = _start_points(problem)
    if problem.search_steps is None:
        problem_s = replace(problem, search_steps=_search_steps(problem, starts[0]))
    else:
        problem_s = problem
    best_x, best_f = None, math.inf
    used = 0
    history = []
    restarts = 0
    stop_at = 0.5 * problem.tolerance
    done = False
    pool = ProcessPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        for batch_start in range(0, problem.max_restarts, max(1, n_jobs)):
            idx = range(batch_start, min(problem.max_restarts, batch_start + max(1, n_jobs)))
            if pool is None:
                runs = [_run_restart(problem_s, i, starts[i]) for i in idx]
            else:
                runs = list(pool.map(_run_restart, [problem_s] * len(idx), idx, [starts[i] for i in idx]))
            for run in runs:
                remaining = problem.budget - used
                if remaining <= 0:
                    done = True
                    break
                values = run.values[:remaining]
                used += len(values)
                restarts += 1
                if len(values):
                    k = int(np.argmin(values))
                    if values[k] < best_f:
                        best_x, best_f = run.thetas[k], float(values[k])
                history.append(best_f)
                if best_f <= stop_at:
                    done = True
                    break
            if done:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if best_f > stop_at:
        best_x, best_f, n_polish = _polish(problem_s, best_x, best_f, budget=60 * len(best_x))
        used += n_polish
    report = _gate_report(problem, best_x, problem.report_rel_tol, None)
    infidelity = _infidelity(report, problem.target)
    return DesignSolution(problem, np.array(best_x), infidelity, report, used,
                          infidelity <= problem.tolerance, restarts, history)


def retarget_blockade(solution: DesignSolution, blockade_mhz: float,
                      forster_penalty_mhz: float = 0.0, n_jobs: int = 1) -> DesignSolution:
    """Re-optimize a solution for a new blockade strength, warm-started from it.

    ``blockade_mhz`` may be ``math.inf``.  If the old parameters already meet
    the tolerance at the new blockade, they are returned unchanged.
    """
    old = solution.problem
    proto = copy.deepcopy(old.protocol)
    proto["blockade_mhz"] = "infinite" if math.isinf(blockade_mhz) else float(blockade_mhz)
    proto["forster_penalty_mhz"] = float(forster_penalty_mhz)
    problem = replace(old, protocol=proto, initial=tuple(float(v) for v in solution.theta),
                      search_steps=None)
    report = _gate_report(problem, solution.theta, problem.report_rel_tol, None)
    infidelity = _infidelity(report, problem.target)
    if infidelity <= problem.tolerance:
        return DesignSolution(problem, np.array(solution.theta), infidelity, report, 1, True, 0, [infidelity])
    return optimize(problem, n_jobs=n_jobs)
