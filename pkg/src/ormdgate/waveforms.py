"""Bernstein-basis pulse envelopes and the drive schemes built from them.

User-facing amplitudes are Rabi frequencies over 2pi in MHz and times in
microseconds.  ``angular`` converts to the rad/us units used by the
Hamiltonian builders.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

MAX_DEGREE = 64


def angular(value_mhz):
    """Convert a frequency over 2pi in MHz to an angular frequency in rad/us."""
    return 2.0 * np.pi * value_mhz


def _binomial_row(n: int) -> np.ndarray:
    # multiplicative recurrence C(n, k) = C(n, k-1) * (n - k + 1) / k
    row = np.empty(n + 1)
    row[0] = 1.0
    for k in range(1, n + 1):
        row[k] = row[k - 1] * (n - k + 1) / k
    return row


def bernstein_basis(nu: int, n: int, x):
    """Evaluate the Bernstein basis polynomial ``C(n, nu) x^nu (1 - x)^(n - nu)``.

    Parameters
    ----------
    nu : int
        Basis index, ``0 <= nu <= n``.
    n : int
        Polynomial degree, at most ``MAX_DEGREE``.
    x : float or array_like
        Evaluation point(s) in ``[0, 1]``.

    Returns
    -------
    float or ndarray
        Basis value(s), with the same shape as ``x``.
    """
    if not (0 <= n <= MAX_DEGREE):
        raise ValueError(f"degree must lie in [0, {MAX_DEGREE}], got {n}")
    if not (0 <= nu <= n):
        raise ValueError(f"basis index must lie in [0, {n}], got {nu}")
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0.0) or np.any(xa > 1.0):
        raise ValueError("Bernstein argument must lie in [0, 1]")
    value = _binomial_row(n)[nu] * xa**nu * (1.0 - xa) ** (n - nu)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class WaveformSpec:
    """Bernstein expansion of one modulated Rabi-frequency envelope.

    With ``symmetric=False`` the envelope is ``sum_{nu=1}^{N-1} a_nu b_{nu,N}(t/T)``.
    With ``symmetric=True`` it is ``sum_{nu=1}^{N//2} a_nu (b_{nu,N} + b_{N-nu,N})``;
    for even ``N`` the middle basis function therefore enters twice.
    ``complement=True`` turns the expansion ``h`` into ``h(1/2) - h(t/T)``.
    """

    degree: int
    coefficients: tuple[float, ...]
    gate_time: float
    symmetric: bool = False
    complement: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not isinstance(self.degree, (int, np.integer)) or not (1 <= self.degree <= MAX_DEGREE):
            raise ValueError(f"degree must be an integer in [1, {MAX_DEGREE}]")
        expected = self.degree // 2 if self.symmetric else self.degree - 1
        if len(self.coefficients) != expected:
            raise ValueError(
                f"degree {self.degree} ({'symmetric' if self.symmetric else 'plain'}) "
                f"needs {expected} coefficients, got {len(self.coefficients)}"
            )
        if not all(math.isfinite(c) for c in self.coefficients):
            raise ValueError("coefficients must be finite")
        if not (math.isfinite(self.gate_time) and self.gate_time > 0):
            raise ValueError("gate_time must be positive and finite")

    @property
    def basis_coefficients(self) -> np.ndarray:
        """Coefficients on the full basis ``b_{0,N} .. b_{N,N}`` (boundary entries zero)."""
        n = self.degree
        full = np.zeros(n + 1)
        if self.symmetric:
            for nu, a in enumerate(self.coefficients, start=1):
                full[nu] += a
                full[n - nu] += a
        else:
            full[1:n] = self.coefficients
        return full

    def _expansion(self, x: np.ndarray) -> np.ndarray:
        n = self.degree
        weights = self.basis_coefficients * _binomial_row(n)
        nu = np.arange(n + 1)
        x = x[..., None]
        return np.sum(weights * x**nu * (1.0 - x) ** (n - nu), axis=-1)

    def with_coefficients(self, coefficients) -> WaveformSpec:
        return replace(self, coefficients=tuple(coefficients))

    def to_dict(self) -> dict:
        return {
            "degree": int(self.degree),
            "coefficients_mhz": list(self.coefficients),
            "gate_time_us": float(self.gate_time),
            "symmetric": bool(self.symmetric),
            "complement": bool(self.complement),
        }

    @classmethod
    def from_dict(cls, data: dict) -> WaveformSpec:
        return cls(
            degree=int(data["degree"]),
            coefficients=tuple(data["coefficients_mhz"]),
            gate_time=float(data["gate_time_us"]),
            symmetric=bool(data.get("symmetric", False)),
            complement=bool(data.get("complement", False)),
        )


def evaluate_envelope(spec: WaveformSpec, t):
    """Evaluate an envelope in MHz (value of Omega/2pi) at time(s) ``t`` in us."""
    ta = np.asarray(t, dtype=float)
    T = spec.gate_time
    if np.any(~np.isfinite(ta)) or np.any(ta < 0.0) or np.any(ta > T):
        raise ValueError(f"time must lie in [0, {T}] us")
    x = ta / T
    value = spec._expansion(x)
    if spec.complement:
        value = spec._expansion(np.asarray(0.5)) - value
    return float(value) if np.ndim(value) == 0 else value


class SchemeKind(str, enum.Enum):
    TYPE_A = "TypeA"
    TYPE_B = "TypeB"
    TYPE_C = "TypeC"
    TYPE_D = "TypeD"
    ONE_PHOTON = "OnePhoton"
    CUSTOM = "Custom"


Drive = Union[float, WaveformSpec]


def _is_wave(d) -> bool:
    return isinstance(d, WaveformSpec)


@dataclass(frozen=True)
class ModulationScheme:
    """Pair of probe (``omega_p``) and Stokes (``omega_s``) drives.

    Each drive is either a constant in MHz or a :class:`WaveformSpec`.
    ``OnePhoton`` schemes carry a single ground-Rydberg drive in ``omega_p``.
    """

    kind: SchemeKind
    omega_p: Drive
    omega_s: Drive | None = None

    def __post_init__(self):
        kind = SchemeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("omega_p", "omega_s"):
            d = getattr(self, name)
            if d is not None and not _is_wave(d):
                object.__setattr__(self, name, float(d))
                if not math.isfinite(float(d)):
                    raise ValueError(f"{name} must be finite")
        p, s = self.omega_p, self.omega_s
        if kind is SchemeKind.ONE_PHOTON:
            if s is not None:
                raise ValueError("OnePhoton schemes have no Stokes drive")
            return
        if s is None:
            raise ValueError(f"{kind.value} needs both omega_p and omega_s")
        if kind is SchemeKind.TYPE_A and not (_is_wave(p) and not _is_wave(s)):
            raise ValueError("TypeA modulates omega_p only")
        if kind is SchemeKind.TYPE_B and not (_is_wave(s) and not _is_wave(p)):
            raise ValueError("TypeB modulates omega_s only")
        if kind in (SchemeKind.TYPE_C, SchemeKind.TYPE_D) and not (_is_wave(p) and _is_wave(s)):
            raise ValueError(f"{kind.value} modulates both drives")
        if kind is SchemeKind.TYPE_C and p.coefficients == s.coefficients:
            raise ValueError("TypeC drives must use distinct coefficient lists")
        if kind is SchemeKind.TYPE_D and p.coefficients != s.coefficients:
            raise ValueError("TypeD drives share one coefficient list")

    def waveforms(self) -> list[WaveformSpec]:
        return [d for d in (self.omega_p, self.omega_s) if _is_wave(d)]

    def rabi(self, t):
        """Angular Rabi frequencies ``(omega_p, omega_s)`` in rad/us at time(s) ``t``.

        ``omega_s`` is ``None`` for one-photon schemes.
        """
        ta = np.asarray(t, dtype=float)

        def one(d):
            if d is None:
                return None
            if _is_wave(d):
                return angular(np.asarray(evaluate_envelope(d, ta)))
            return np.full(ta.shape, angular(d))

        return one(self.omega_p), one(self.omega_s)

    def to_dict(self) -> dict:
        def enc(d):
            if d is None:
                return None
            return {"waveform": d.to_dict()} if _is_wave(d) else {"constant_mhz": float(d)}

        out = {"scheme": self.kind.value, "omega_p": enc(self.omega_p)}
        if self.omega_s is not None:
            out["omega_s"] = enc(self.omega_s)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ModulationScheme:
        def dec(d):
            if d is None:
                return None
            if "waveform" in d:
                return WaveformSpec.from_dict(d["waveform"])
            return float(d["constant_mhz"])

        return cls(SchemeKind(data["scheme"]), dec(data["omega_p"]), dec(data.get("omega_s")))
