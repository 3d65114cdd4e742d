"""Hamiltonian builders for the computational subspaces of a two-atom gate.

All matrices are in rad/us.  Every builder accepts scalar or array Rabi
frequencies; array inputs of shape ``S`` give a stack of shape
``S + (dim, dim)``, which is how the propagator samples a whole time grid in
one call.  Matrices are assembled from their upper triangle and mirrored,
so they are Hermitian exactly, not to a tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .waveforms import angular

SQRT2 = math.sqrt(2.0)
INFINITE = math.inf


@dataclass(frozen=True)
class PhysicalParams:
    """Detunings, blockade and gate time; frequencies in rad/us, time in us.

    ``blockade = math.inf`` selects the ideal-blockade limit, in which the
    doubly excited Rydberg states are dropped from the basis.
    """

    delta_1photon: float
    delta_2photon: float
    blockade: float = INFINITE
    forster_penalty: float = 0.0
    gate_time: float = 0.25

    def __post_init__(self):
        for name in ("delta_1photon", "delta_2photon", "forster_penalty", "gate_time"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if math.isnan(self.blockade) or self.blockade < 0:
            raise ValueError("blockade must be >= 0 (or math.inf)")
        if self.gate_time <= 0:
            raise ValueError("gate_time must be positive")

    @property
    def infinite_blockade(self) -> bool:
        return math.isinf(self.blockade)

    @classmethod
    def from_mhz(cls, delta_1photon_mhz, delta_2photon_mhz, blockade_mhz=INFINITE,
                 forster_penalty_mhz=0.0, gate_time_us=0.25) -> PhysicalParams:
        """Build from frequencies over 2pi in MHz."""
        return cls(
            delta_1photon=angular(delta_1photon_mhz),
            delta_2photon=angular(delta_2photon_mhz),
            blockade=INFINITE if math.isinf(blockade_mhz) else angular(blockade_mhz),
            forster_penalty=angular(forster_penalty_mhz),
            gate_time=gate_time_us,
        )

    def shifted(self, d_delta_1photon: float = 0.0, d_delta_2photon: float = 0.0) -> PhysicalParams:
        return replace(
            self,
            delta_1photon=self.delta_1photon + d_delta_1photon,
            delta_2photon=self.delta_2photon + d_delta_2photon,
        )


@dataclass(frozen=True)
class SubspaceBasis:
    """Ordered basis of one subspace.  Index 0 is always the computational state.

    ``rydberg_count`` is the number of Rydberg excitations per state (sets
    its decay rate); ``intermediate`` flags states carrying an ``|e>``
    excitation; ``single_rydberg`` lists the singly excited Rydberg states
    used for the effective two-level Bloch vector.
    """

    label: str
    states: tuple[str, ...]
    rydberg_count: tuple[int, ...]
    intermediate: tuple[int, ...]
    single_rydberg: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.states)


_PRODUCT_LEVELS = ("1", "e", "r")
_PRODUCT_STATES = tuple(a + b for a in _PRODUCT_LEVELS for b in _PRODUCT_LEVELS)


def subspace_basis(label: str, infinite_blockade: bool = False) -> SubspaceBasis:
    """Return the basis for a subspace label.

    Labels: ``Q00``, ``Q01``, ``Q10``, ``Q11sym``, ``Q11prod``,
    ``OnePhotonSingle``, ``OnePhotonPair``.  With ``infinite_blockade`` the
    ``|rr>`` and ``|pp'>`` states are removed.
    """
    if label == "Q00":
        return SubspaceBasis(label, ("00",), (0,), (), ())
    if label == "Q10":
        return SubspaceBasis(label, ("10", "e0", "r0"), (0, 0, 1), (1,), (2,))
    if label == "Q01":
        return SubspaceBasis(label, ("01", "0e", "0r"), (0, 0, 1), (1,), (2,))
    if label == "Q11sym":
        states = ("11", "e~", "r~", "R~", "rr", "pp'")
        counts = (0, 0, 1, 1, 2, 2)
        n = 4 if infinite_blockade else 6
        return SubspaceBasis(label, states[:n], counts[:n], (1, 3), (2,))
    if label == "Q11prod":
        states = _PRODUCT_STATES + ("pp'",)
        counts = tuple(s.count("r") for s in _PRODUCT_STATES) + (2,)
        inter = tuple(i for i, s in enumerate(_PRODUCT_STATES) if "e" in s)
        single = tuple(i for i, s in enumerate(_PRODUCT_STATES) if s in ("1r", "r1"))
        if infinite_blockade:
            keep = [i for i, s in enumerate(states) if s not in ("rr", "pp'")]
            return SubspaceBasis(label, tuple(states[i] for i in keep),
                                 tuple(counts[i] for i in keep), inter, single)
        return SubspaceBasis(label, states, counts, inter, single)
    if label == "OnePhotonSingle":
        return SubspaceBasis(label, ("1", "r"), (0, 1), (), (1,))
    if label == "OnePhotonPair":
        states = ("11", "r1", "1r", "rr", "pp'")
        counts = (0, 1, 1, 2, 2)
        n = 3 if infinite_blockade else 5
        return SubspaceBasis(label, states[:n], counts[:n], (), (1, 2))
    raise ValueError(f"unknown subspace label {label!r}")


def _broadcast(*values):
    arrays = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values])
    return arrays, arrays[0].shape


def _assemble(shape, dim, couplings, diagonal) -> np.ndarray:
    """Upper-triangle couplings ``{(i, j): value}`` plus diagonal, mirrored."""
    H = np.zeros(shape + (dim, dim), dtype=complex)
    for (i, j), v in couplings.items():
        if not i < j:
            raise ValueError("couplings must be given on the upper triangle")
        H[..., i, j] = v
        H[..., j, i] = np.conj(v)
    for i, v in enumerate(diagonal):
        H[..., i, i] = v
    return H


def h_single(params: PhysicalParams, op, os):
    """Three-level ladder ``[|1>, |e>, |r>]`` of one driven atom (Q10 / Q01)."""
    (op, os), shape = _broadcast(op, os)
    return _assemble(
        shape, 3,
        {(0, 1): op / 2, (1, 2): os / 2},
        (0.0, params.delta_1photon, params.delta_2photon),
    )


def h_11_symmetrized(params: PhysicalParams, op, os):
    """Symmetrized ``|11>`` chain ``[|11>, |e~>, |r~>, |R~>, |rr>, |pp'>]``.

    With infinite blockade only the first four states are kept.
    """
    (op, os), shape = _broadcast(op, os)
    D, d = params.delta_1photon, params.delta_2photon
    couplings = {(0, 1): SQRT2 * op / 2, (1, 2): os / 2, (2, 3): op / 2}
    diagonal = [0.0, D, d, D + d]
    if params.infinite_blockade:
        return _assemble(shape, 4, couplings, diagonal)
    couplings[(3, 4)] = SQRT2 * os / 2
    couplings[(4, 5)] = np.full(shape, params.blockade)
    diagonal += [2 * d, 2 * d + params.forster_penalty]
    return _assemble(shape, 6, couplings, diagonal)


def h_11_product(params_ctrl: PhysicalParams, params_tgt: PhysicalParams, op, os,
                 include_ee: bool = True):
    """Two-atom product space ``{1,e,r} x {1,e,r}`` plus ``|pp'>``.

    Each atom uses its own detunings (so Doppler shifts can differ); the
    blockade and Forster penalty are taken from ``params_ctrl``.  ``|pp'>``
    sits at the sum of the two-photon detunings plus the penalty.  With
    ``include_ee=False`` all couplings into ``|ee>`` are removed, which
    reproduces the symmetrized chain on the symmetric sector.  Infinite
    blockade drops ``|rr>`` and ``|pp'>``.
    """
    if params_ctrl.blockade != params_tgt.blockade or params_ctrl.forster_penalty != params_tgt.forster_penalty:
        raise ValueError("both atoms must share blockade and Forster penalty")
    hc = h_single(params_ctrl, op, os)
    ht = h_single(params_tgt, op, os)
    shape = hc.shape[:-2]
    eye = np.eye(3)
    hp = (np.einsum("...ik,jl->...ijkl", hc, eye) + np.einsum("ik,...jl->...ijkl", eye, ht))
    hp = hp.reshape(shape + (9, 9))
    H = np.zeros(shape + (10, 10), dtype=complex)
    H[..., :9, :9] = hp
    ee = _PRODUCT_STATES.index("ee")
    rr = _PRODUCT_STATES.index("rr")
    if not include_ee:
        diag_ee = H[..., ee, ee].copy()
        H[..., ee, :] = 0.0
        H[..., :, ee] = 0.0
        H[..., ee, ee] = diag_ee
    H[..., rr, 9] = params_ctrl.blockade if not params_ctrl.infinite_blockade else 0.0
    H[..., 9, rr] = H[..., rr, 9]
    H[..., 9, 9] = params_ctrl.delta_2photon + params_tgt.delta_2photon + params_ctrl.forster_penalty
    # mirror the upper triangle so Hermiticity is exact
    iu = np.triu_indices(10, 1)
    H[..., iu[1], iu[0]] = np.conj(H[..., iu[0], iu[1]])
    H[..., range(10), range(10)] = H[..., range(10), range(10)].real
    if params_ctrl.infinite_blockade:
        keep = [i for i in range(10) if i not in (rr, 9)]
        H = H[..., keep, :][..., :, keep]
    return H


def h_one_photon_single(delta, omega):
    """Single-atom two-level model ``[|1>, |r>]`` for one-photon driving."""
    (omega,), shape = _broadcast(omega)
    return _assemble(shape, 2, {(0, 1): omega / 2}, (0.0, delta))


def h_one_photon_pair(delta, omega, blockade=INFINITE, forster_penalty=0.0, omega_tgt=None):
    """Two-atom one-photon model ``[|11>, |r1>, |1r>, |rr>, |pp'>]``.

    ``omega`` drives the control atom (first label) and ``omega_tgt`` the
    target; the target defaults to the same drive.  Infinite blockade keeps
    only the first three states.
    """
    if omega_tgt is None:
        omega_tgt = omega
    (oc, ot), shape = _broadcast(omega, omega_tgt)
    couplings = {(0, 1): oc / 2, (0, 2): ot / 2}
    diagonal = [0.0, delta, delta]
    if math.isinf(blockade):
        return _assemble(shape, 3, couplings, diagonal)
    couplings[(1, 3)] = ot / 2
    couplings[(2, 3)] = oc / 2
    couplings[(3, 4)] = np.full(shape, float(blockade))
    diagonal += [2 * delta, 2 * delta + forster_penalty]
    return _assemble(shape, 5, couplings, diagonal)
