import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ormdgate.gatemetrics import (CZ, GateReport, assemble_computational_block, average_fidelity,
                                  best_local_correction, effective_blockade_detuning, simulate_gate)

angle = st.floats(-math.pi, math.pi)


def test_perfect_gate():
    assert average_fidelity(CZ, CZ) == pytest.approx(1.0, abs=1e-15)
    assert average_fidelity(np.eye(4), np.eye(4)) == 1.0


def test_identity_versus_cz():
    # |Tr(CZ)|^2 = 4, Tr(X X^dag) = 4
    assert average_fidelity(np.eye(4), CZ) == pytest.approx(0.4)


def test_leakage_lowers_fidelity():
    M = np.diag([1, 1, 1, -math.sqrt(0.9)])
    assert average_fidelity(M, CZ) < 1.0


@settings(max_examples=100, deadline=None)
@given(phases=st.lists(angle, min_size=4, max_size=4))
def test_fidelity_bounds_and_global_phase(phases):
    M = np.diag([cmath.exp(1j * p) for p in phases])
    f = average_fidelity(M, CZ)
    assert 0.2 - 1e-12 <= f <= 1 + 1e-12
    assert average_fidelity(cmath.exp(0.7j) * M, CZ) == pytest.approx(f, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(c=angle)
def test_correction_recovers_local_phase(c):
    M = np.diag([1, cmath.exp(1j * c), cmath.exp(1j * c), -cmath.exp(2j * c)])
    cc, f = best_local_correction(M)
    assert f == pytest.approx(1.0, abs=1e-12)
    assert abs(math.remainder(cc - c, 2 * math.pi)) < 1e-6


def test_correction_never_worse_than_raw():
    M = np.diag([1, 0.9, 0.9, -0.8]).astype(complex)
    _, f = best_local_correction(M)
    assert f >= average_fidelity(M, CZ) - 1e-15


def test_correction_requires_symmetric_diagonal():
    with pytest.raises(ValueError):
        best_local_correction(np.diag([1, 1j, 1, -1]))
    with pytest.raises(ValueError):
        best_local_correction(np.ones((4, 4)))


def test_block_assembly():
    M = assemble_computational_block(1j, 1j, -1)
    assert np.array_equal(M, np.diag([1, 1j, 1j, -1]))


def test_effective_detuning():
    assert effective_blockade_detuning(2 * math.pi * 500, 0.0) == pytest.approx(2 * math.pi * 250)


def test_report_round_trip():
    r = GateReport.from_amplitudes(0.99j, 0.99j, 0.98)
    again = GateReport.from_dict(r.to_dict())
    assert again == r
    assert r.conditional_phase == pytest.approx(math.pi)


def test_fig1_is_cz(type_a):
    report, outcomes = simulate_gate(*type_a)
    assert report.fidelity_cz >= 0.995
    assert np.max(np.abs(report.block - CZ)) < 0.05
    assert abs(report.a_01 - report.a_10) < 1e-10


def test_fig2_needs_correction(type_c):
    report, _ = simulate_gate(*type_c)
    assert report.fidelity_cphase_corrected >= 0.995
    assert report.fidelity_cphase_corrected > report.fidelity_cz


def test_reuse_symmetric_matches(type_a):
    a, _ = simulate_gate(*type_a)
    b, _ = simulate_gate(*type_a, reuse_symmetric=True)
    assert abs(a.fidelity_cz - b.fidelity_cz) < 1e-12
