"""Open-system gate evaluation: Monte-Carlo wave functions and a Lindblad oracle.

Every Rydberg excitation decays at rate ``gamma`` into an absorbing sink
outside the computational space; ``|e>`` decay is neglected.  Thermal
motion enters as quasi-static per-atom Doppler shifts of the one- and
two-photon detunings, drawn once per trajectory.

Trajectory estimator
--------------------
Each trajectory unravels the state ``(|00> + |01> + |10> + |11>) / 2``
(every subspace evolved under ``H_eff = H - i Gamma / 2``).  A pre-drawn
uniform ``r`` triggers the jump once the squared norm ``N^2(t)`` drops below
it; because the sink is absorbing nothing else can happen afterwards.  A
trajectory without a jump contributes

    (sum_j |a_j|^2 + |sum_j conj(t_j) a_j|^2) / (20 N^2)

with ``a_j`` the no-jump return amplitudes and ``t_j`` the target diagonal;
a jumped trajectory contributes 0.  The expectation is exactly the average
gate fidelity of the velocity-averaged channel, which is what the Lindblad
oracle computes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import chebyshev
from scipy import constants
from scipy.integrate import solve_ivp

from .gatemetrics import CZ, simulate_gate
from .model import PhysicalParams
from .propagator import IntegrationError, propagate_magnus, resolve_basis, subspace_hamiltonian
from .waveforms import ModulationScheme

RB87_MASS_AMU = 86.909180527
GEOMETRIES = ("CounterPropagating", "CoPropagating")


@dataclass(frozen=True)
class NoiseModel:
    """Rydberg decay and thermal-motion settings for a noisy run."""

    rydberg_linewidth_khz: float = 0.0
    temperature_uk: float = 0.0
    atomic_mass_amu: float = RB87_MASS_AMU
    lambda_p_nm: float = 780.0
    lambda_s_nm: float = 480.0
    geometry: str = "CounterPropagating"
    n_trajectories: int = 10_000
    seed: int = 0
    include_ee: bool = False

    def __post_init__(self):
        if self.rydberg_linewidth_khz < 0 or self.temperature_uk < 0:
            raise ValueError("linewidth and temperature must be non-negative")
        if self.lambda_p_nm <= 0 or self.lambda_s_nm <= 0 or self.atomic_mass_amu <= 0:
            raise ValueError("wavelengths and mass must be positive")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be positive")

    @property
    def gamma(self) -> float:
        """Decay rate of one Rydberg excitation in 1/us."""
        return 2 * math.pi * self.rydberg_linewidth_khz * 1e-3

    @property
    def velocity_sigma(self) -> float:
        """One-dimensional thermal velocity spread in um/us (= m/s)."""
        m = self.atomic_mass_amu * constants.atomic_mass
        return math.sqrt(constants.k * self.temperature_uk * 1e-6 / m)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_velocity(temperature_uk: float, mass_amu: float, rng: np.random.Generator) -> float:
    """Draw one axial Maxwell-Boltzmann velocity in um/us."""
    if temperature_uk < 0:
        raise ValueError("temperature must be non-negative")
    sigma = math.sqrt(constants.k * temperature_uk * 1e-6 / (mass_amu * constants.atomic_mass))
    return sigma * float(rng.standard_normal()) + 0.0


def doppler_shifts(v: float, model: NoiseModel) -> tuple[float, float]:
    """Shifts of the one-photon and two-photon detunings (rad/us) at velocity ``v`` (um/us)."""
    k_p = 2 * math.pi / (model.lambda_p_nm * 1e-3)
    k_s = 2 * math.pi / (model.lambda_s_nm * 1e-3)
    k_two = k_p - k_s if model.geometry == "CounterPropagating" else k_p + k_s
    return k_p * v, k_two * v


def _decay_rates(scheme, params, label, gamma) -> np.ndarray:
    basis = resolve_basis(scheme, params, label)
    return gamma * np.array(basis.rydberg_count, dtype=float)


_NOISY_LABELS = ("Q01", "Q10", "Q11prod")


def _subspace_fn(scheme, params, model, label, shift_c, shift_t):
    return subspace_hamiltonian(scheme, params, label, shift_c, shift_t, include_ee=model.include_ee)


def _target_diagonal(target_phase_correction: float | None) -> np.ndarray:
    t = np.diag(CZ).copy()
    if target_phase_correction:
        c = target_phase_correction
        t = t * np.array([1.0, np.exp(1j * c), np.exp(1j * c), np.exp(2j * c)])
    return t


def trajectory_fidelity(amplitudes, weight, target_diag) -> float:
    """Contribution of one jump-free trajectory (see module docstring)."""
    a = np.asarray(amplitudes, dtype=complex)
    return float((np.sum(np.abs(a) ** 2) + abs(np.sum(np.conj(target_diag) * a)) ** 2) / (20.0 * weight))


@dataclass
class TrajectoryRecord:
    """Outcome of one quantum trajectory.

    ``amplitudes`` are the no-jump return amplitudes ``a_j`` in the order
    00, 01, 10, 11 divided by the trajectory norm, so they equal the closed
    system amplitudes when nothing decays; they are zero after a jump.
    """

    velocities: tuple[float, float]
    jumped: bool
    jump_time: float | None
    weight: float
    amplitudes: np.ndarray
    fidelity: float


def run_trajectory(scheme: ModulationScheme, params: PhysicalParams, model: NoiseModel,
                   velocities, rng: np.random.Generator, n_steps: int | None = None,
                   rel_tol: float = 1e-9, target_phase_correction: float | None = None) -> TrajectoryRecord:
    """Run one MCWF trajectory with given per-atom velocities ``(v_ctrl, v_tgt)``.

    The jump threshold ``r`` is drawn from ``rng``.  Q11 is propagated in the
    product space so the two atoms can carry different Doppler shifts.
    """
    r = float(rng.random())
    v_c, v_t = (float(v) for v in velocities)
    sc, st = doppler_shifts(v_c, model), doppler_shifts(v_t, model)
    T = params.gate_time
    amps = [1.0 + 0j]
    norms = []
    steps = n_steps if n_steps is not None else _search_steps(scheme, params, model, rel_tol)
    for label in _NOISY_LABELS:
        basis = resolve_basis(scheme, params, label)
        fn = _subspace_fn(scheme, params, model, label, sc, st)
        psi0 = np.zeros(basis.dim, complex)
        psi0[0] = 1.0
        decay = _decay_rates(scheme, params, label, model.gamma)
        _, _, states = propagate_magnus(fn, psi0, 0.0, T, n_steps=steps, decay=decay, record=True)
        amps.append(complex(states[-1, 0]))
        norms.append(np.sum(np.abs(states) ** 2, axis=1))
    weight_t = (1.0 + np.sum(norms, axis=0)) / 4.0
    below = np.nonzero(weight_t < r)[0]
    target = _target_diagonal(target_phase_correction)
    if below.size:
        return TrajectoryRecord((v_c, v_t), True, T * below[0] / steps, float(weight_t[-1]),
                                np.zeros(4, complex), 0.0)
    w = float(weight_t[-1])
    amps = np.array(amps)
    return TrajectoryRecord((v_c, v_t), False, None, w, amps / math.sqrt(w),
                            trajectory_fidelity(amps, w, target))


def jump_trajectories(hamiltonian_fn, decay, psi0, t0: float, t1: float, n_trajectories: int,
                      seed: int, n_steps: int = 1000):
    """Jump times of independent trajectories sharing one Hamiltonian.

    The no-jump evolution is deterministic here, so it is computed once and
    every trajectory only compares its own uniform threshold with the norm
    history.  Returns an array of jump times with ``nan`` for survivors.
    """
    _, _, states = propagate_magnus(hamiltonian_fn, psi0, t0, t1, n_steps=n_steps,
                                    decay=decay, record=True)
    norm2 = np.sum(np.abs(states) ** 2, axis=1)
    times = np.linspace(t0, t1, n_steps + 1)
    out = np.full(n_trajectories, np.nan)
    for i in range(n_trajectories):
        r = np.random.default_rng([seed, i]).random()
        below = np.nonzero(norm2 < r)[0]
        if below.size:
            out[i] = times[below[0]]
    return out


# ----------------------------------------------------------- velocity response


def _no_jump(scheme, params, model, label, shift_c, shift_t, n_steps):
    basis = resolve_basis(scheme, params, label)
    fn = _subspace_fn(scheme, params, model, label, shift_c, shift_t)
    psi0 = np.zeros(basis.dim, complex)
    psi0[0] = 1.0
    psi, _, _ = propagate_magnus(fn, psi0, 0.0, params.gate_time, n_steps=n_steps,
                                 decay=_decay_rates(scheme, params, label, model.gamma))
    return complex(psi[0]), float(np.sum(np.abs(psi) ** 2))


def _node_task(args):
    scheme, params, model, label, vc, vt, n_steps = args
    return _no_jump(scheme, params, model, label, doppler_shifts(vc, model),
                    doppler_shifts(vt, model), n_steps)


def _cheb_nodes(m: int) -> np.ndarray:
    return np.cos(np.pi * (np.arange(m) + 0.5) / m)


@dataclass
class DopplerResponse:
    """Chebyshev interpolant of no-jump amplitudes and norms versus velocity.

    Single-atom subspaces depend on one velocity, Q11 on both.  Nodes are
    exact propagations; velocities outside ``[-v_max, v_max]`` are not
    covered and must be propagated directly.
    """

    v_max: float
    single_coeffs: np.ndarray
    pair_coeffs: np.ndarray
    nodes: int
    n_steps: int

    @classmethod
    def build(cls, scheme, params, model, v_max: float, nodes: int = 11, n_steps: int = 4000,
              n_jobs: int = 1) -> DopplerResponse:
        x = _cheb_nodes(nodes)
        v = v_max * x
        tasks = [(scheme, params, model, "Q10", vi, 0.0, n_steps) for vi in v]
        pairs = [(i, j) for i in range(nodes) for j in range(i, nodes)]
        tasks += [(scheme, params, model, "Q11prod", v[i], v[j], n_steps) for i, j in pairs]
        if n_jobs > 1:
            with ProcessPoolExecutor(n_jobs) as pool:
                results = list(pool.map(_node_task, tasks, chunksize=4))
        else:
            results = [_node_task(t) for t in tasks]
        single = np.array([[a, n] for a, n in results[:nodes]], dtype=complex)
        pair = np.empty((nodes, nodes, 2), dtype=complex)
        for (i, j), (a, n) in zip(pairs, results[nodes:]):
            pair[i, j] = pair[j, i] = (a, n)
        V = chebyshev.chebvander(x, nodes - 1)
        c1 = np.linalg.solve(V, single)
        c2 = np.linalg.solve(V, np.moveaxis(np.linalg.solve(V, pair), 1, 0))
        return cls(v_max, c1, np.moveaxis(c2, 1, 0), nodes, n_steps)

    def single(self, v):
        x = np.asarray(v) / self.v_max
        vals = chebyshev.chebval(x, self.single_coeffs)
        return vals[0], vals[1].real

    def pair(self, vc, vt):
        xc, xt = np.asarray(vc) / self.v_max, np.asarray(vt) / self.v_max
        a = chebyshev.chebval2d(xc, xt, self.pair_coeffs[..., 0])
        n = chebyshev.chebval2d(xc, xt, self.pair_coeffs[..., 1])
        return a, n.real


@dataclass
class NoisyFidelityEstimate:
    """MCWF estimate of the average gate fidelity.

    ``mean_amplitudes`` are unbiased estimates of the channel's diagonal
    return amplitudes (00, 01, 10, 11); ``p11_return`` is the mean
    ``|11>`` return population.
    """

    mean: float
    standard_error: float
    n_trajectories: int
    jump_fraction: float
    invalid: int = 0
    seed: int = 0
    p11_return: float = 1.0
    mean_amplitudes: np.ndarray = field(default_factory=lambda: np.ones(4, complex))

    @property
    def conditional_phase(self) -> float:
        a = self.mean_amplitudes
        return float(np.mod(np.angle(a[3]) - np.angle(a[1]) - np.angle(a[2]), 2 * math.pi))

    def to_dict(self) -> dict:
        return {
            "fidelity_mean": self.mean,
            "fidelity_standard_error": self.standard_error,
            "n_trajectories": self.n_trajectories,
            "jump_fraction": self.jump_fraction,
            "invalid_trajectories": self.invalid,
            "seed": self.seed,
            "p11_return": self.p11_return,
            "conditional_phase_rad": self.conditional_phase,
            "mean_amplitudes": [{"re": float(z.real), "im": float(z.imag)} for z in self.mean_amplitudes],
        }


def batch_means_stderr(values: np.ndarray) -> float:
    """Standard error of the mean from ``floor(sqrt(n))`` contiguous batches."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 4 or np.all(values == values[0]):
        return 0.0
    batches = np.array_split(values, int(math.isqrt(n)))
    means = np.array([math.fsum(b) / len(b) for b in batches])
    return float(np.std(means, ddof=1) / math.sqrt(len(means)))


def _search_steps(scheme, params, model, rel_tol) -> int:
    steps = 0
    for label in ("Q10", "Q11prod"):
        basis = resolve_basis(scheme, params, label)
        fn = _subspace_fn(scheme, params, model, label, (0.0, 0.0), (0.0, 0.0))
        psi0 = np.zeros(basis.dim, complex)
        psi0[0] = 1.0
        _, n, _ = propagate_magnus(fn, psi0, 0.0, params.gate_time, rel_tol,
                                   decay=_decay_rates(scheme, params, label, model.gamma))
        steps = max(steps, n)
    return steps


def mcwf_fidelity(scheme: ModulationScheme, params: PhysicalParams, model: NoiseModel,
                  target: str = "ControlledZ", rel_tol: float = 1e-9, n_jobs: int = 1,
                  method: str = "table", table_nodes: int = 11) -> NoisyFidelityEstimate:
    """Average gate fidelity under Rydberg decay and Doppler noise by MCWF.

    Trajectory ``i`` draws ``(v_ctrl, v_tgt, r)`` from
    ``default_rng([seed, i])``, so results do not depend on how the work is
    split.  With ``method="table"`` no-jump amplitudes come from a
    :class:`DopplerResponse` built from exact propagations (velocities
    beyond six thermal widths fall back to direct propagation);
    ``method="direct"`` propagates every trajectory.  ``ControlledPhase``
    applies the noise-free optimal local correction to all trajectories.
    """
    n = model.n_trajectories
    if n < 100:
        raise ValueError("mcwf_fidelity needs at least 100 trajectories")
    correction = None
    if target == "ControlledPhase":
        report, _ = simulate_gate(scheme, params, rel_tol)
        correction = report.correction_phase
    elif target != "ControlledZ":
        raise ValueError(f"unknown target {target!r}")
    tdiag = _target_diagonal(correction)
    sigma = model.velocity_sigma
    draws = np.empty((n, 3))
    for i in range(n):
        g = np.random.default_rng([model.seed, i])
        draws[i, :2] = sigma * g.standard_normal(2) + 0.0
        draws[i, 2] = g.random()
    vc, vt, r = draws[:, 0], draws[:, 1], draws[:, 2]
    steps = _search_steps(scheme, params, model, rel_tol)

    amps = np.ones((n, 4), complex)
    norms = np.ones((n, 4))
    invalid = np.zeros(n, bool)
    if sigma == 0.0:
        for col, label in ((1, "Q01"), (2, "Q10"), (3, "Q11prod")):
            amps[:, col], norms[:, col] = _no_jump(scheme, params, model, label, (0.0, 0.0), (0.0, 0.0), steps)
    elif method == "table":
        v_max = 6.0 * sigma
        table = DopplerResponse.build(scheme, params, model, v_max, table_nodes, steps, n_jobs)
        inside = (np.abs(vc) <= v_max) & (np.abs(vt) <= v_max)
        amps[inside, 1], norms[inside, 1] = table.single(vt[inside])
        amps[inside, 2], norms[inside, 2] = table.single(vc[inside])
        amps[inside, 3], norms[inside, 3] = table.pair(vc[inside], vt[inside])
        for i in np.nonzero(~inside)[0]:
            amps[i, 1:], norms[i, 1:], invalid[i] = _direct(scheme, params, model, vc[i], vt[i], steps)
    elif method == "direct":
        for i in range(n):
            amps[i, 1:], norms[i, 1:], invalid[i] = _direct(scheme, params, model, vc[i], vt[i], steps)
    else:
        raise ValueError(f"unknown method {method!r}")

    valid = ~invalid
    if not np.any(valid):
        raise IntegrationError("every trajectory failed", params.gate_time)
    weight = np.mean(norms, axis=1)
    survived = (r <= weight) & valid
    fid = np.zeros(n)
    w = np.where(survived, weight, 1.0)
    fid[survived] = ((np.sum(np.abs(amps) ** 2, axis=1) + np.abs(amps @ np.conj(tdiag)) ** 2)
                     / (20.0 * w))[survived]
    scale = np.where(survived, 1.0 / w, 0.0)
    vals = fid[valid]
    m = int(np.count_nonzero(valid))
    mean_amps = np.array([math.fsum((amps[valid, k] * scale[valid]).real) / m
                          + 1j * math.fsum((amps[valid, k] * scale[valid]).imag) / m for k in range(4)])
    p11 = math.fsum(np.abs(amps[valid, 3]) ** 2 * scale[valid]) / m
    return NoisyFidelityEstimate(
        mean=math.fsum(vals) / m,
        standard_error=batch_means_stderr(vals),
        n_trajectories=m,
        jump_fraction=float(np.count_nonzero(~survived & valid)) / m,
        invalid=int(np.count_nonzero(invalid)),
        seed=model.seed,
        p11_return=p11,
        mean_amplitudes=mean_amps,
    )


def _direct(scheme, params, model, vc, vt, steps):
    sc, st = doppler_shifts(vc, model), doppler_shifts(vt, model)
    out_a, out_n = np.ones(3, complex), np.ones(3)
    try:
        for k, (label, a, b) in enumerate((("Q01", sc, st), ("Q10", sc, st), ("Q11prod", sc, st))):
            out_a[k], out_n[k] = _no_jump(scheme, params, model, label, a, b, steps)
    except IntegrationError:
        return out_a, out_n, True
    return out_a, out_n, False


# ------------------------------------------------------------------ Lindblad


def lindblad_propagate(hamiltonian_fn, collapse_ops, rho0, t0: float, t1: float,
                       rel_tol: float = 1e-10):
    """Integrate ``drho/dt = -i[H, rho] + sum_k (L rho L^dag - {L^dag L, rho} / 2)``.

    ``rho0`` may be a single matrix or a stack ``(m, d, d)`` of inputs, which
    lets a whole channel be propagated in one call.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    shape = rho0.shape
    d = shape[-1]
    Ls = np.asarray(list(collapse_ops), dtype=complex).reshape(-1, d, d)
    Lh = np.conj(np.swapaxes(Ls, -1, -2))
    LdL = np.sum(Lh @ Ls, axis=0)

    def rhs(t, y):
        rho = y.reshape(shape)
        heff = np.asarray(hamiltonian_fn(t)) - 0.5j * LdL
        out = -1j * (heff @ rho - rho @ np.conj(heff).T)
        for L, Ld in zip(Ls, Lh):
            out = out + L @ rho @ Ld
        return out.ravel()

    sol = solve_ivp(rhs, (t0, t1), rho0.ravel(), method="DOP853", rtol=rel_tol, atol=rel_tol)
    if sol.status != 0:
        raise IntegrationError(sol.message, float(sol.t[-1]))
    return sol.y[:, -1].reshape(shape)


def _full_space(scheme, params, model):
    """Block-diagonal two-atom space: |00>, Q01, Q10, Q11prod, sink."""
    blocks = [("Q01", 1), ("Q10", None), ("Q11prod", None)]
    fns, dims, counts = [], [1], [np.zeros(1)]
    for label, _ in blocks:
        basis = resolve_basis(scheme, params, label)
        fns.append(_subspace_fn(scheme, params, model, label, (0.0, 0.0), (0.0, 0.0)))
        dims.append(basis.dim)
        counts.append(np.array(basis.rydberg_count, dtype=float))
    offsets = np.cumsum([0] + dims)
    D = int(offsets[-1]) + 1

    def H(t):
        out = np.zeros((D, D), complex)
        for k, fn in enumerate(fns):
            a, b = offsets[k + 1], offsets[k + 2]
            out[a:b, a:b] = fn(t)
        return out

    rates = np.concatenate(counts) * model.gamma
    sink = D - 1
    collapse = []
    for s, rate in enumerate(rates):
        if rate > 0:
            L = np.zeros((D, D), complex)
            L[sink, s] = math.sqrt(rate)
            collapse.append(L)
    computational = [int(o) for o in offsets[:4]]
    return H, collapse, computational, D


def lindblad_oracle(scheme: ModulationScheme, params: PhysicalParams, model: NoiseModel,
                    target: str = "ControlledZ", rel_tol: float = 1e-10,
                    target_phase_correction: float | None = None) -> float:
    """Average gate fidelity from a dense master-equation run (zero temperature only).

    All sixteen inputs ``|j><l|`` of the computational block are propagated,
    and the fidelity of the projected channel follows from
    ``sum_k Tr(M_k M_k^dag) = sum_l Tr P E(|l><l|)`` and
    ``sum_k |Tr(T^dag M_k)|^2 = sum_{j,l} conj(t_j) t_l <j|E(|j><l|)|l>``.
    """
    if model.temperature_uk != 0:
        raise ValueError("the Lindblad oracle is velocity-free; use temperature 0")
    if target == "ControlledPhase" and target_phase_correction is None:
        report, _ = simulate_gate(scheme, params, rel_tol)
        target_phase_correction = report.correction_phase
    tdiag = _target_diagonal(target_phase_correction)
    H, collapse, comp, D = _full_space(scheme, params, model)
    rho0 = np.zeros((16, D, D), complex)
    for j in range(4):
        for l in range(4):
            rho0[4 * j + l, comp[j], comp[l]] = 1.0
    out = lindblad_propagate(H, collapse, rho0, 0.0, params.gate_time, rel_tol)
    norm_term = sum(np.real(sum(out[4 * l + l, comp[j], comp[j]] for j in range(4))) for l in range(4))
    trace_term = sum(np.conj(tdiag[j]) * tdiag[l] * out[4 * j + l, comp[j], comp[l]]
                     for j in range(4) for l in range(4))
    return float((norm_term + np.real(trace_term)) / 20.0)
