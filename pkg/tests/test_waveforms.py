import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ormdgate.waveforms import (ModulationScheme, SchemeKind, WaveformSpec, bernstein_basis,
                                evaluate_envelope)

FIG1 = WaveformSpec(10, (193.65, 85.17, 0.0, 291.53, 649.10), 0.25, symmetric=True)


def test_basis_known_values():
    assert bernstein_basis(0, 0, 0.3) == 1.0
    assert bernstein_basis(1, 2, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert bernstein_basis(2, 4, 0.5) == pytest.approx(6 / 16, abs=1e-15)
    assert bernstein_basis(3, 3, 1.0) == 1.0


@pytest.mark.parametrize("args", [(-1, 3, 0.5), (4, 3, 0.5), (0, 65, 0.5), (1, 3, 1.5), (1, 3, math.nan)])
def test_basis_rejects_bad_input(args):
    with pytest.raises(ValueError):
        bernstein_basis(*args)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(0, 64), x=st.floats(0.0, 1.0))
def test_partition_of_unity(n, x):
    total = math.fsum(bernstein_basis(nu, n, x) for nu in range(n + 1))
    assert abs(total - 1.0) < 1e-12


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 40), x=st.floats(0.0, 1.0))
def test_basis_mirror_symmetry(n, x):
    for nu in range(n + 1):
        assert bernstein_basis(nu, n, x) == pytest.approx(bernstein_basis(n - nu, n, 1.0 - x), abs=1e-14)


def test_fig1_envelope_endpoints_exactly_zero():
    assert evaluate_envelope(FIG1, 0.0) == 0.0
    assert evaluate_envelope(FIG1, 0.25) == 0.0


@settings(max_examples=100, deadline=None)
@given(coeffs=st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4), t=st.floats(0.0, 0.25))
def test_symmetric_envelope_is_time_symmetric(coeffs, t):
    spec = WaveformSpec(8, coeffs, 0.25, symmetric=True)
    a, b = evaluate_envelope(spec, t), evaluate_envelope(spec, 0.25 - t)
    assert a == pytest.approx(b, abs=1e-9 * (1 + max(map(abs, coeffs))))


def test_complement_envelope():
    spec = WaveformSpec(8, (68.95, 51.10, 324.19, 766.36), 0.25, symmetric=True, complement=True)
    plain = WaveformSpec(8, spec.coefficients, 0.25, symmetric=True)
    assert evaluate_envelope(spec, 0.125) == pytest.approx(0.0, abs=1e-12)
    assert evaluate_envelope(spec, 0.0) == pytest.approx(evaluate_envelope(plain, 0.125))
    assert evaluate_envelope(spec, 0.0) == pytest.approx(576.42, abs=0.01)


def test_envelope_rejects_times_outside_gate():
    with pytest.raises(ValueError):
        evaluate_envelope(FIG1, 0.2500001)
    with pytest.raises(ValueError):
        evaluate_envelope(FIG1, -1e-9)


def test_coefficient_count_checked():
    with pytest.raises(ValueError):
        WaveformSpec(10, (1.0, 2.0), 0.25, symmetric=True)
    with pytest.raises(ValueError):
        WaveformSpec(4, (1.0, 2.0), 0.25)
    with pytest.raises(ValueError):
        WaveformSpec(4, (1.0, 2.0, 3.0), 0.0)


def test_vectorized_matches_scalar():
    t = np.linspace(0, 0.25, 7)
    vec = evaluate_envelope(FIG1, t)
    assert np.allclose(vec, [evaluate_envelope(FIG1, float(x)) for x in t], rtol=0, atol=1e-12)


def test_scheme_invariants():
    ModulationScheme(SchemeKind.TYPE_A, FIG1, 350.0)
    with pytest.raises(ValueError):
        ModulationScheme(SchemeKind.TYPE_A, 100.0, FIG1)
    with pytest.raises(ValueError):
        ModulationScheme(SchemeKind.TYPE_C, FIG1, FIG1)
    with pytest.raises(ValueError):
        ModulationScheme(SchemeKind.ONE_PHOTON, 10.0, 10.0)
    ModulationScheme(SchemeKind.TYPE_D, FIG1, FIG1)


def test_scheme_rabi_units():
    scheme = ModulationScheme(SchemeKind.TYPE_A, FIG1, 350.0)
    op, os = scheme.rabi(np.array([0.0, 0.125]))
    assert op[0] == 0.0
    assert os == pytest.approx(2 * math.pi * 350.0)
    assert op[1] == pytest.approx(2 * math.pi * evaluate_envelope(FIG1, 0.125))


def test_scheme_dict_round_trip():
    scheme = ModulationScheme(SchemeKind.TYPE_A, FIG1, 350.0)
    assert ModulationScheme.from_dict(scheme.to_dict()) == scheme
