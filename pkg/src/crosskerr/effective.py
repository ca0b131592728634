"""Second-order Schrieffer-Wolff results for the driven exchange.

All rates are ordinary frequencies in MHz. ``delta`` is the detuning from
the exchange condition returned by :func:`crosskerr.models.drive_frequency`,
so the rotating-frame constant w_d - w_c + w_a - w_b equals delta - chi_b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class ResonanceError(ZeroDivisionError):
    """A perturbative denominator vanished (resonant exchange)."""


@dataclass(frozen=True)
class SwtInputs:
    g1: float
    delta: float
    chi_b: float = 0.0
    K_a: float = 0.0
    K_b: float = 0.0
    K_ab: float = 0.0
    chi_a: float = 0.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{k} must be finite")

    def with_(self, **changes) -> "SwtInputs":
        return replace(self, **changes)

    @classmethod
    def from_params(cls, params, g1: float, delta: float) -> "SwtInputs":
        return cls(g1, delta, params.chi_b, params.K_a, params.K_b, params.K_ab, params.chi_a)


def _denominator(s: SwtInputs, n_a: int, n_b: int) -> float:
    """Energy of |n_a, n_b, g> minus |n_a - 1, n_b + 1, e> in the drive frame."""
    return (
        (s.delta - s.chi_b)
        - s.K_a * (n_a - 1)
        + s.K_b * n_b
        + s.chi_a * (n_a - 1)
        + s.chi_b * (n_b + 1)
        - s.K_ab * (n_b - n_a + 1)
    )


def beta_coefficient(s: SwtInputs, n_a: int, n_b: int) -> float:
    """Generator amplitude sqrt(n_a (n_b + 1)) g1 / denominator."""
    if n_a < 0 or n_b < 0:
        raise ValueError("photon numbers must be non-negative")
    if n_a == 0:
        return 0.0
    den = _denominator(s, n_a, n_b)
    if den == 0:
        raise ResonanceError(f"resonant denominator for (n_a, n_b) = ({n_a}, {n_b})")
    return math.sqrt(n_a * (n_b + 1)) * s.g1 / den


def energy_shift(s: SwtInputs, n_a: int, n_b: int) -> float:
    """Second-order shift of |n_a, n_b, g> (MHz)."""
    if n_a == 0:
        return 0.0
    return beta_coefficient(s, n_a, n_b) * math.sqrt(n_a * (n_b + 1)) * s.g1


def engineered_crosskerr(s: SwtInputs) -> float:
    """-K_ab + (g1^2/delta) (delta - x)/(delta + x) with x = chi_b + K_b - K_ab."""
    x = s.chi_b + s.K_b - s.K_ab
    if s.delta == 0 or s.delta + x == 0:
        raise ResonanceError("engineered cross-Kerr diverges at delta = 0 or delta = -(chi_b + K_b - K_ab)")
    return -s.K_ab + (s.g1**2 / s.delta) * (s.delta - x) / (s.delta + x)


def max_coupler_excitation(g1: float, delta: float) -> float:
    """Upper bound g1^2 / (g1^2 + delta^2) on the coupler population."""
    if g1 == 0 and delta == 0:
        return 1.0
    return g1 * g1 / (g1 * g1 + delta * delta)


def gate_time(g_ab: float, target_phase: float = math.pi, n_a: int = 1, n_b: int = 1) -> float:
    """Duration (us) for a conditional phase ``target_phase`` on |n_a, n_b>."""
    if g_ab == 0:
        raise ResonanceError("zero coupling: no finite gate time")
    if n_a <= 0 or n_b <= 0:
        raise ValueError("photon numbers must be positive")
    return abs(target_phase) / (2 * math.pi * abs(g_ab) * n_a * n_b)


def code_gate_time(g_ab: float, N: int, M: int) -> float:
    """CZ time for codes with rotational symmetries N and M: g_ab T = 1/(2 N M)."""
    if g_ab == 0:
        raise ResonanceError("zero coupling: no finite gate time")
    if N <= 0 or M <= 0:
        raise ValueError("symmetry orders must be positive")
    return 1.0 / (2 * N * M * abs(g_ab))


def dressed_lifetime_estimate(beta: float, coupler_tphi: float) -> float:
    """Drive-dressed cavity lifetime Tphi / beta^2 (us)."""
    if beta == 0:
        raise ResonanceError("beta = 0: no dressing, the estimate diverges")
    return coupler_tphi / beta**2


def g1_estimate(chi_a: float, chi_b: float, xi: float) -> float:
    """Leading-order exchange rate sqrt(chi_a chi_b) |xi| (MHz)."""
    return math.sqrt(chi_a * chi_b) * abs(xi)


def swt_crosskerr_curve(params, g1: float, deltas) -> np.ndarray:
    return np.array([engineered_crosskerr(SwtInputs.from_params(params, g1, d)) for d in deltas])
