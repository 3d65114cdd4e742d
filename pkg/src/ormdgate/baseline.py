"""Conventional blockade gate used as a comparator.

Resonant one-photon drive, piecewise constant: a pi pulse on the control
atom, a 2pi pulse on the target atom, then another control pi pulse.  With
perfect blockade the target pulse is inert whenever the control is excited,
giving ``diag(1, -1, -1, -1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .gatemetrics import GateReport
from .model import h_one_photon_pair, h_one_photon_single, subspace_basis
from .propagator import PropagationOutcome

DEFAULT_OMEGA_MHZ = 10.0


@dataclass
class BaselineResult:
    report: GateReport
    q01: PropagationOutcome
    q10: PropagationOutcome
    q11: PropagationOutcome
    duration: float

    @property
    def return_population(self) -> float:
        return self.q11.return_population


def _segments(omega: float, gap: float):
    """``(control drive, target drive, duration)`` for each step."""
    steps = [(omega, 0.0, math.pi / omega)]
    if gap > 0:
        steps.append((0.0, 0.0, gap))
    steps += [(0.0, omega, 2 * math.pi / omega), (omega, 0.0, math.pi / omega)]
    return steps


def _run(hamiltonians, basis) -> PropagationOutcome:
    psi = np.zeros(basis.dim, complex)
    psi[0] = 1.0
    states = [psi]
    for H, tau in hamiltonians:
        psi = expm(-1j * tau * H) @ psi
        states.append(psi)
    return PropagationOutcome.from_states(basis, np.array(states), len(hamiltonians))


def pi_gap_pi(omega: float, blockade: float = math.inf, forster_penalty: float = 0.0,
              gap: float = 0.0) -> BaselineResult:
    """Simulate the pi / 2pi / pi sequence.

    Parameters
    ----------
    omega : float
        Rabi frequency in rad/us, shared by both atoms.
    blockade, forster_penalty : float
        ``B`` and ``delta_p`` in rad/us; ``math.inf`` means perfect blockade.
    gap : float
        Idle time in us between the first control pulse and the target pulse.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    if gap < 0:
        raise ValueError("gap must be non-negative")
    segs = _segments(omega, gap)
    single = subspace_basis("OnePhotonSingle", True)
    pair = subspace_basis("OnePhotonPair", math.isinf(blockade))
    q10 = _run([(h_one_photon_single(0.0, c), tau) for c, _, tau in segs], single)
    q01 = _run([(h_one_photon_single(0.0, t), tau) for _, t, tau in segs], single)
    q11 = _run([(h_one_photon_pair(0.0, c, blockade, forster_penalty, omega_tgt=t), tau)
                for c, t, tau in segs], pair)
    return BaselineResult(GateReport.from_outcomes(q01, q10, q11), q01, q10, q11,
                          sum(tau for *_, tau in segs))
