"""Time-dependent Schroedinger propagation for the gate subspaces.

Two integrators are provided:

* :func:`propagate` - adaptive embedded Runge-Kutta (scipy ``solve_ivp``)
  for an arbitrary callable ``t -> H(t)``.  General purpose and used as an
  independent reference.
* :func:`propagate_magnus` - sixth-order Magnus expansion on Gauss-Legendre
  nodes with step doubling.  The one-photon detuning (5 GHz in typical
  protocols) makes explicit Runge-Kutta take ~10^4 tiny steps; the
  exponential integrator is not limited by it, and all step exponentials for
  a whole grid are computed in one batched call.  Subspace runs use this.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .model import (
    PhysicalParams,
    SubspaceBasis,
    h_11_product,
    h_11_symmetrized,
    h_one_photon_pair,
    h_one_photon_single,
    h_single,
    subspace_basis,
)
from .waveforms import ModulationScheme, SchemeKind


class IntegrationError(RuntimeError):
    """Raised when a propagation cannot reach its end time."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t = {time:.6g} us)")
        self.time = time


def propagate(hamiltonian_fn: Callable[[float], np.ndarray], psi0, t0: float, t1: float,
              rel_tol: float = 1e-10, method: str = "DOP853") -> np.ndarray:
    """Integrate ``i dpsi/dt = H(t) psi`` from ``t0`` to ``t1`` with adaptive RK.

    Parameters
    ----------
    hamiltonian_fn : callable
        Maps a scalar time in us to a square matrix in rad/us.
    psi0 : array_like
        Initial state vector.
    t0, t1 : float
        Integration window, ``t1 > t0``.
    rel_tol : float
        Local error tolerance (used as both rtol and atol; states are O(1)).
    method : str
        Any embedded RK method accepted by ``solve_ivp`` (``"RK45"``, ``"DOP853"``).

    Returns
    -------
    ndarray
        The state at ``t1``.

    Raises
    ------
    IntegrationError
        If the step size underflows before ``t1``.
    """
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    psi0 = np.asarray(psi0, dtype=complex)

    def rhs(t, y):
        return -1j * (np.asarray(hamiltonian_fn(t)) @ y)

    sol = solve_ivp(rhs, (t0, t1), psi0, method=method, rtol=rel_tol, atol=rel_tol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError(sol.message or "integration failed", float(sol.t[-1]))
    return sol.y[:, -1]


_GL_NODES = (0.5 - math.sqrt(15) / 10, 0.5, 0.5 + math.sqrt(15) / 10)


def _comm(a, b):
    return a @ b - b @ a


def magnus_step_propagators(hamiltonian_fn, t0: float, t1: float, n_steps: int,
                            decay: np.ndarray | None = None) -> np.ndarray:
    """Sixth-order Magnus step propagators on a uniform grid.

    ``hamiltonian_fn`` must accept an array of times and return a stack of
    matrices.  ``decay`` holds per-state population decay rates; it adds
    ``-i decay / 2`` to the diagonal (non-Hermitian effective Hamiltonian).
    Returns an array of shape ``(n_steps, d, d)``.
    """
    h = (t1 - t0) / n_steps
    return _magnus_from_starts(hamiltonian_fn, t0 + h * np.arange(n_steps), h, decay)


def _magnus_from_starts(hamiltonian_fn, starts: np.ndarray, h: float, decay) -> np.ndarray:
    A = []
    for c in _GL_NODES:
        H = np.asarray(hamiltonian_fn(starts + c * h), dtype=complex)
        if decay is not None:
            H = H - 0.5j * np.diag(decay)
        A.append(-1j * h * H)
    a1 = A[1]
    a2 = (math.sqrt(15) / 3) * (A[2] - A[0])
    a3 = (10.0 / 3.0) * (A[2] - 2.0 * A[1] + A[0])
    c1 = _comm(a1, a2)
    c2 = -_comm(a1, 2.0 * a3 + c1) / 60.0
    omega = a1 + a3 / 12.0 + _comm(-20.0 * a1 - a3 + c1, a2 + c2) / 240.0
    if decay is None or not np.any(decay):
        # omega is anti-Hermitian up to round-off; exponentiate via eigh
        K = 0.5j * (omega - np.conj(np.swapaxes(omega, -1, -2)))
        w, V = np.linalg.eigh(K)
        return (V * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    return expm(omega)


_CHUNK = 1 << 15


def _march(hamiltonian_fn, psi, t0, t1, n, decay, record: bool):
    """Apply ``n`` Magnus steps, building the step propagators in bounded chunks."""
    h = (t1 - t0) / n
    starts = t0 + h * np.arange(n)
    states = None
    if record:
        states = np.empty((n + 1, len(psi)), dtype=complex)
        states[0] = psi
    for c0 in range(0, n, _CHUNK):
        U = _magnus_from_starts(hamiltonian_fn, starts[c0:c0 + _CHUNK], h, decay)
        for k in range(len(U)):
            psi = U[k] @ psi
            if record:
                states[c0 + k + 1] = psi
    return psi, states


def _initial_steps(hamiltonian_fn, t0, t1) -> int:
    probe = np.asarray(hamiltonian_fn(np.linspace(t0, t1, 9)))
    scale = np.max(np.sum(np.abs(probe), axis=-1))
    return int(max(16, math.ceil((t1 - t0) * scale / 4.0)))


def propagate_magnus(hamiltonian_fn, psi0, t0: float, t1: float, rel_tol: float = 1e-10,
                     n_steps: int | None = None, decay=None, record: bool = False,
                     max_steps: int = 2**21):
    """Propagate with the sixth-order Magnus integrator.

    With ``n_steps=None`` the step count is doubled until the change between
    successive grids, divided by 63 (the sixth-order error ratio), falls
    below ``rel_tol``.

    Returns
    -------
    psi : ndarray
        Final state.
    n_steps : int
        Step count actually used.
    states : ndarray or None
        States at every grid point (``n_steps + 1`` rows) when ``record``.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    decay = None if decay is None else np.asarray(decay, dtype=float)
    if n_steps is not None:
        psi, states = _march(hamiltonian_fn, psi0, t0, t1, n_steps, decay, record)
        if not np.all(np.isfinite(psi)):
            raise IntegrationError("non-finite state", t1)
        return psi, n_steps, states
    n = _initial_steps(hamiltonian_fn, t0, t1)
    prev, _ = _march(hamiltonian_fn, psi0, t0, t1, n, decay, False)
    while True:
        n *= 2
        if n > max_steps:
            raise IntegrationError("step count exceeded max_steps", t0)
        psi, states = _march(hamiltonian_fn, psi0, t0, t1, n, decay, record)
        if not np.all(np.isfinite(psi)):
            raise IntegrationError("non-finite state", t1)
        if np.max(np.abs(psi - prev)) / 63.0 <= rel_tol:
            return psi, n, states
        prev = psi


# ---------------------------------------------------------------- subspaces

_SYM_OF = {"Q10": "Q10", "Q01": "Q01", "Q11": "Q11sym"}


def resolve_basis(scheme: ModulationScheme, params: PhysicalParams, label: str) -> SubspaceBasis:
    """Map a subspace label onto the basis actually used for ``scheme``.

    One-photon schemes use two-level atoms, so ``Q10``/``Q01`` become
    ``OnePhotonSingle`` and ``Q11sym``/``Q11prod`` become ``OnePhotonPair``.
    """
    label = _SYM_OF.get(label, label)
    if scheme.kind is SchemeKind.ONE_PHOTON:
        if label in ("Q10", "Q01", "OnePhotonSingle"):
            label = "OnePhotonSingle"
        elif label in ("Q11sym", "Q11prod", "OnePhotonPair"):
            label = "OnePhotonPair"
    return subspace_basis(label, params.infinite_blockade)


def subspace_hamiltonian(scheme: ModulationScheme, params: PhysicalParams, label: str,
                         shift_ctrl=(0.0, 0.0), shift_tgt=(0.0, 0.0), include_ee: bool = False):
    """Return a vectorized ``t -> H(t)`` for one subspace.

    ``shift_ctrl`` / ``shift_tgt`` are per-atom ``(d_Delta, d_delta)`` offsets
    in rad/us (Doppler shifts).  In ``Q10`` the driven atom is the control,
    in ``Q01`` the target.  The symmetrized ``Q11`` chain assumes identical
    atoms and therefore rejects unequal shifts.
    """
    basis = resolve_basis(scheme, params, label)
    pc = params.shifted(*shift_ctrl)
    pt = params.shifted(*shift_tgt)
    lab = basis.label
    if lab == "Q00":
        raise ValueError("Q00 does not couple to the lasers")
    if lab == "OnePhotonSingle":
        atom = pc if label == "Q10" else pt

        def fn(t):
            return h_one_photon_single(atom.delta_2photon, scheme.rabi(t)[0])
    elif lab == "OnePhotonPair":
        if tuple(shift_ctrl) != tuple(shift_tgt):
            raise ValueError("the one-photon pair model assumes identical atom detunings")

        def fn(t):
            return h_one_photon_pair(pc.delta_2photon, scheme.rabi(t)[0],
                                     params.blockade, params.forster_penalty)
    elif lab in ("Q10", "Q01"):
        atom = pc if lab == "Q10" else pt

        def fn(t):
            op, os = scheme.rabi(t)
            return h_single(atom, op, os)
    elif lab == "Q11sym":
        if tuple(shift_ctrl) != tuple(shift_tgt):
            raise ValueError("the symmetrized model assumes identical atom detunings")

        def fn(t):
            op, os = scheme.rabi(t)
            return h_11_symmetrized(pc, op, os)
    elif lab == "Q11prod":
        def fn(t):
            op, os = scheme.rabi(t)
            return h_11_product(pc, pt, op, os, include_ee=include_ee)
    else:
        raise ValueError(f"unsupported subspace {label!r}")
    return fn


def bloch_pair(basis: SubspaceBasis, states: np.ndarray):
    """Computational and aggregate singly-excited Rydberg amplitudes."""
    states = np.atleast_2d(states)
    c0 = states[:, 0]
    idx = list(basis.single_rydberg)
    c1 = np.sum(states[:, idx], axis=1) / math.sqrt(len(idx))
    return c0, c1


def bloch_vectors(basis: SubspaceBasis, states: np.ndarray) -> np.ndarray:
    """Bloch vectors of the (computational, Rydberg) pair, renormalized within the pair."""
    c0, c1 = bloch_pair(basis, states)
    norm2 = np.abs(c0) ** 2 + np.abs(c1) ** 2
    safe = np.where(norm2 > 0, norm2, 1.0)
    cross = np.conj(c0) * c1
    vec = np.stack([2 * cross.real, 2 * cross.imag, np.abs(c0) ** 2 - np.abs(c1) ** 2], axis=1)
    return np.where(norm2[:, None] > 0, vec / safe[:, None], 0.0)


@dataclass
class PropagationOutcome:
    """Final-state summary of one subspace run."""

    subspace: str
    final_amplitudes: np.ndarray
    return_population: float
    return_phase: float
    leakage: float
    peak_intermediate_population: float
    n_steps: int = 0
    states: tuple[str, ...] = field(default_factory=tuple)

    @property
    def return_amplitude(self) -> complex:
        return complex(self.final_amplitudes[0])

    @classmethod
    def from_states(cls, basis: SubspaceBasis, states: np.ndarray, n_steps: int = 0):
        final = states[-1]
        a0 = complex(final[0])
        pop = abs(a0) ** 2
        inter = list(basis.intermediate)
        peak = float(np.max(np.sum(np.abs(states[:, inter]) ** 2, axis=1))) if inter else 0.0
        return cls(basis.label, final, pop, float(np.angle(a0)), 1.0 - pop, peak, n_steps, basis.states)


def _initial(dim: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    return psi


def run_subspace(scheme: ModulationScheme, params: PhysicalParams, subspace: str,
                 rel_tol: float = 1e-10, n_steps: int | None = None,
                 method: str = "magnus") -> PropagationOutcome:
    """Propagate one subspace from its computational state over ``[0, T_g]``.

    ``method="rk"`` uses :func:`propagate` instead of the Magnus integrator;
    intermediate-state peaks are then taken from the dense RK output.
    """
    basis = resolve_basis(scheme, params, subspace)
    if basis.label == "Q00":
        return PropagationOutcome.from_states(basis, np.ones((1, 1), dtype=complex))
    fn = subspace_hamiltonian(scheme, params, subspace)
    psi0 = _initial(basis.dim)
    T = params.gate_time
    if method == "magnus":
        _, n, states = propagate_magnus(fn, psi0, 0.0, T, rel_tol, n_steps=n_steps, record=True)
        return PropagationOutcome.from_states(basis, states, n)
    if method == "rk":
        sol = solve_ivp(lambda t, y: -1j * (fn(t) @ y), (0.0, T), psi0, method="DOP853",
                        rtol=rel_tol, atol=rel_tol)
        if sol.status != 0:
            raise IntegrationError(sol.message, float(sol.t[-1]))
        return PropagationOutcome.from_states(basis, sol.y.T, len(sol.t) - 1)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class TimeSeries:
    """Uniformly sampled trajectory of one subspace run."""

    subspace: str
    states: tuple[str, ...]
    times: np.ndarray
    populations: np.ndarray
    phase: np.ndarray
    phase_unwrapped: np.ndarray
    bloch: np.ndarray
    amplitudes: np.ndarray

    @property
    def columns(self) -> list[str]:
        return (["t_us"] + [f"pop_{s}" for s in self.states]
                + ["phase_rad", "phase_unwrapped_rad", "bloch_x", "bloch_y", "bloch_z"])

    def rows(self):
        for i, t in enumerate(self.times):
            yield [t, *self.populations[i], self.phase[i], self.phase_unwrapped[i], *self.bloch[i]]

    def write_csv(self, fh, header_lines=()) -> None:
        """Write CSV with 17-significant-digit numbers; ``header_lines`` become ``#`` comments."""
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows():
            writer.writerow([format(float(v), ".17g") for v in row])


def time_series(scheme: ModulationScheme, params: PhysicalParams, subspace: str,
                n_samples: int = 201, rel_tol: float = 1e-10) -> TimeSeries:
    """Sample populations, return phase and Bloch vector on a uniform grid."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    basis = resolve_basis(scheme, params, subspace)
    T = params.gate_time
    times = np.linspace(0.0, T, n_samples)
    if basis.label == "Q00":
        states = np.ones((n_samples, 1), dtype=complex)
    else:
        fn = subspace_hamiltonian(scheme, params, subspace)
        psi0 = _initial(basis.dim)
        _, n_adapt, _ = propagate_magnus(fn, psi0, 0.0, T, rel_tol)
        per = math.ceil(n_adapt / (n_samples - 1))
        _, _, full = propagate_magnus(fn, psi0, 0.0, T, n_steps=per * (n_samples - 1), record=True)
        states = full[::per]
    pops = np.abs(states) ** 2
    phase = np.angle(states[:, 0])
    return TimeSeries(basis.label, basis.states, times, pops, phase, np.unwrap(phase),
                      bloch_vectors(basis, states), states)
