"""Hamiltonian builders for the two-cavity plus SQUID-coupler device.

Public inputs and outputs are ordinary frequencies (MHz) and times (us).
Every builder multiplies by 2*pi exactly once, so returned matrices are in
rad/us. Junction energies are given in GHz as they are usually quoted.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import PeriodicDrive, TimeDependentHamiltonian
from .hilbert import ModeSystem, annihilation, destroy, number_operator

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
INF = float("inf")

CONDITIONS = ("idle", "driven", "driven-ramsey")


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------- parameters


def _tphi(t1: float, t2: float) -> float:
    """Pure dephasing time from T1 and T2: 1/Tphi = 1/T2 - 1/(2 T1)."""
    rate = 1.0 / t2 - 0.5 / t1
    return INF if rate <= 0 else 1.0 / rate


_IDLE = {
    "a": (800.0, _tphi(800.0, 550.0)),
    "b": (900.0, _tphi(900.0, 800.0)),
    "c": (50.0, _tphi(50.0, 2.5)),
}
# error-budget set; coupler dephasing from its echo time
_DRIVEN = {"a": (210.0, 70.0), "b": (388.0, 52.0), "c": (50.0, _tphi(50.0, 10.0))}
# driven Ramsey set (T2* about 40 and 60 us under drive)
_DRIVEN_RAMSEY = {
    "a": (210.0, _tphi(210.0, 40.0)),
    "b": (390.0, _tphi(390.0, 60.0)),
    "c": (50.0, _tphi(50.0, 10.0)),
}


@dataclass(frozen=True)
class DeviceParams:
    """Hamiltonian coefficients and coherence times of the device.

    Frequencies in MHz, junction and charging energies in GHz, flux in
    units of the flux quantum, coherence times in us. ``coherences`` maps a
    condition name to ``{mode: (T1, Tphi)}``.
    """

    omega_a: float
    omega_b: float
    omega_c: float
    K_a: float
    K_b: float
    alpha_c: float
    chi_a: float
    chi_b: float
    K_ab: float
    EJ1: float
    EJ2: float
    EC: float
    flux: float
    g_ac: float
    g_bc: float
    coherences: Mapping[str, Mapping[str, tuple[float, float]]] = field(default_factory=dict)
    ej_convention: str = "squared"
    name: str = "custom"

    def __post_init__(self):
        for key in ("omega_a", "omega_b", "omega_c", "EC"):
            if not getattr(self, key) > 0:
                raise ModelError(f"{key} must be positive")
        if not self.EJ1 >= self.EJ2 > 0:
            raise ModelError("junction energies must satisfy EJ1 >= EJ2 > 0")
        if self.chi_a < 0 or self.chi_b < 0:
            raise ModelError("dispersive shifts must be non-negative")
        if self.ej_convention not in ("squared", "printed"):
            raise ModelError(f"unknown ej_convention {self.ej_convention!r}")

    def with_(self, **changes) -> "DeviceParams":
        return replace(self, **changes)

    def coherence(self, condition: str) -> dict[str, tuple[float, float]]:
        if condition not in self.coherences:
            raise ModelError(f"no coherence set named {condition!r}")
        return dict(self.coherences[condition])

    @property
    def EJ(self) -> float:
        return squid_ej(self.flux, self.EJ1, self.EJ2, self.ej_convention)

    @property
    def plasma_frequency(self) -> float:
        """Bare plasma frequency sqrt(8 EJ EC) in MHz."""
        return plasma_frequency(self.EJ, self.EC)


_COHERENCES = {"idle": _IDLE, "driven": _DRIVEN, "driven-ramsey": _DRIVEN_RAMSEY}

# Flux values are the bias points at which the full cosine model reproduces
# the listed dispersive shifts (see calibrate_operating_flux).
PRESETS: dict[str, DeviceParams] = {
    "fig3-bias": DeviceParams(
        omega_a=4120.0, omega_b=4410.0, omega_c=5220.0,
        K_a=0.0013, K_b=0.0024, alpha_c=196.0,
        chi_a=0.8, chi_b=0.5, K_ab=0.0003,
        EJ1=19.0, EJ2=5.2, EC=0.1814, flux=0.26746,
        g_ac=43.07, g_bc=22.56, coherences=_COHERENCES, name="fig3-bias",
    ),
    "fig2-bias": DeviceParams(
        omega_a=4120.0, omega_b=4410.0, omega_c=4913.0,
        K_a=0.0013, K_b=0.0024, alpha_c=196.0,
        chi_a=2.8, chi_b=3.0, K_ab=0.0003,
        EJ1=19.0, EJ2=5.2, EC=0.1814, flux=0.33838,
        g_ac=43.07, g_bc=22.56, coherences=_COHERENCES, name="fig2-bias",
    ),
}


# engineered cross-Kerr (MHz magnitude) at the gate operating point of a preset
OPERATING_CROSSKERR = {"fig3-bias": 0.09535}


def preset(name: str) -> DeviceParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ModelError(f"unknown device preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class DriveSpec:
    """Coupler drive. ``amplitude`` is epsilon in MHz or a dimensionless xi.

    ``epsilon`` follows the lab-frame tone ``2 eps cos(w_d t + phase)`` of the
    displaced-frame derivation. The cosine-model builder uses
    ``eps_F cos(w_d t)`` and therefore ``eps_F = 2 eps``.
    """

    frequency: float
    amplitude: float = 0.0
    amplitude_mode: str = "epsilon"
    phase: float = 0.0
    envelope: str = "flat"
    ramp: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        if self.amplitude_mode not in ("epsilon", "xi"):
            raise ModelError(f"amplitude_mode must be 'epsilon' or 'xi', got {self.amplitude_mode!r}")
        if self.envelope not in ("flat", "ramped"):
            raise ModelError(f"envelope must be 'flat' or 'ramped', got {self.envelope!r}")
        if not self.duration > 0:
            raise ModelError("drive duration must be positive")
        if self.ramp < 0 or self.ramp > self.duration / 2:
            raise ModelError("ramp must lie in [0, duration/2]")

    def envelope_value(self, t: float) -> float:
        return ramp_envelope(t, self.duration, self.ramp if self.envelope == "ramped" else 0.0)


def ramp_envelope(t: float, duration: float, ramp: float) -> float:
    """Flat-top envelope with cosine-squared rise and fall of length ``ramp``."""
    if t < 0 or t > duration:
        return 0.0
    if ramp <= 0:
        return 1.0
    if t < ramp:
        return math.sin(0.5 * math.pi * t / ramp) ** 2
    if t > duration - ramp:
        return math.sin(0.5 * math.pi * (duration - t) / ramp) ** 2
    return 1.0


# ---------------------------------------------------------------- SQUID basics


def squid_ej(flux: float, EJ1: float, EJ2: float, convention: str = "squared") -> float:
    """Effective Josephson energy of an asymmetric SQUID (same units as EJ1).

    ``convention="squared"`` uses d^2 with d = (EJ1 - EJ2)/(EJ1 + EJ2), the
    form that tends to |EJ1 - EJ2| at half flux; ``"printed"`` uses d.
    Written as sqrt(cos^2 + r sin^2) to stay finite at half flux.
    """
    total = EJ1 + EJ2
    d = (EJ1 - EJ2) / total
    if convention == "squared":
        r = d * d
    elif convention == "printed":
        r = d
    else:
        raise ModelError(f"unknown convention {convention!r}")
    x = math.pi * flux
    return abs(total * math.sqrt(math.cos(x) ** 2 + r * math.sin(x) ** 2))


def plasma_frequency(EJ: float, EC: float) -> float:
    """sqrt(8 EJ EC) with energies in GHz, returned in MHz."""
    return 1e3 * math.sqrt(8 * EJ * EC)


def drive_frequency(params: DeviceParams, delta: float = 0.0, n_b: int = 1) -> float:
    """Raman exchange condition w_c + w_b - w_a - n_b chi_b + delta (MHz)."""
    return params.omega_c + params.omega_b - params.omega_a - n_b * params.chi_b + delta


def xi_from_epsilon(epsilon: float, drive_freq: float, bare_coupler: float) -> float:
    """Displaced-frame amplitude xi = eps / (w_d - w_c_bare)."""
    det = drive_freq - bare_coupler
    if det == 0:
        raise ModelError("drive resonant with the bare coupler: xi undefined")
    return epsilon / det


def epsilon_from_xi(xi: float, drive_freq: float, bare_coupler: float) -> float:
    return xi * (drive_freq - bare_coupler)


def snail_effective_crosskerr(g3: float, g5: float, delta: float) -> float:
    """Second-order cross-Kerr g3 g5 / delta of the three-wave-mixing variant."""
    if delta == 0:
        raise ZeroDivisionError("delta = 0 is the resonant exchange, not the Raman regime")
    return g3 * g5 / delta


# ---------------------------------------------------------- dispersive model


def three_mode_system(dim_a: int = 4, dim_b: int = 4, dim_c: int = 2) -> ModeSystem:
    return ModeSystem((("a", dim_a), ("b", dim_b), ("c", dim_c)))


def _require(system: ModeSystem, labels) -> None:
    missing = [lab for lab in labels if not system.has(lab)]
    if missing:
        raise ModelError(f"system lacks mode(s) {missing}")


def stark_shifted(params: DeviceParams, xi: float) -> DeviceParams:
    """Mode frequencies with the drive-induced AC Stark shifts applied."""
    x2 = abs(xi) ** 2
    return params.with_(
        omega_a=params.omega_a - params.chi_a * x2,
        omega_b=params.omega_b - params.chi_b * x2,
        omega_c=params.omega_c - 2 * params.alpha_c * x2,
    )


def drive_xi(params: DeviceParams, drive: DriveSpec) -> float:
    if drive.amplitude_mode == "xi":
        return drive.amplitude
    return xi_from_epsilon(drive.amplitude, drive.frequency, params.plasma_frequency)


def build_dispersive_hamiltonian(
    params: DeviceParams,
    system: ModeSystem | None = None,
    frame: str = "lab",
    drive: DriveSpec | None = None,
) -> np.ndarray:
    """Diagonal three-mode Hamiltonian with self-Kerrs and dispersive shifts.

    ``frame="drive"`` rotates the coupler at the drive frequency (requires
    ``drive``). With a ``drive`` given the AC Stark shifts are applied to the
    mode frequencies; otherwise the dressed values in ``params`` are used.
    Cavity modes ``a`` or ``b`` may be absent from ``system``.
    """
    system = system or three_mode_system()
    p = params
    if drive is not None:
        p = stark_shifted(params, drive_xi(params, drive))
    coeffs = {"a": (p.omega_a, p.K_a), "b": (p.omega_b, p.K_b), "c": (p.omega_c, p.alpha_c)}
    if frame == "drive":
        if drive is None:
            raise ModelError("the drive-rotating frame needs a DriveSpec")
        w, k = coeffs["c"]
        coeffs["c"] = (w - drive.frequency, k)
    elif frame != "lab":
        raise ModelError(f"unknown frame {frame!r}")

    h = np.zeros((system.total_dim,) * 2, dtype=complex)
    nums = {}
    for label, (w, kerr) in coeffs.items():
        if not system.has(label):
            continue
        n = number_operator(system, label)
        nums[label] = n
        h += w * n - 0.5 * kerr * (n @ n - n)
    if "c" in nums:
        if "a" in nums:
            h -= p.chi_a * nums["a"] @ nums["c"]
        if "b" in nums:
            h -= p.chi_b * nums["b"] @ nums["c"]
    if "a" in nums and "b" in nums:
        h -= p.K_ab * nums["a"] @ nums["b"]
    return TWO_PI * h


def build_exchange_frame_hamiltonian(
    params: DeviceParams, g1: float, delta: float, system: ModeSystem | None = None
) -> np.ndarray:
    """Static three-mode model in the frame where the exchange is resonant at delta = 0.

    The frame removes w_a n_a + w_b n_b from the cavities and
    (w_d + w_a - w_b) n_c from the coupler with w_d from
    :func:`drive_frequency`; the coupler keeps (chi_b - delta) so that
    E(0,1,e) - E(1,0,g) = -delta. The exchange g1 (a^dag b c + h.c.) is
    time independent here.
    """
    system = system or three_mode_system()
    _require(system, "abc")
    a = annihilation(system, "a")
    b = annihilation(system, "b")
    c = annihilation(system, "c")
    na, nb, nc = (number_operator(system, k) for k in "abc")
    h = (
        -0.5 * params.K_a * (na @ na - na)
        - 0.5 * params.K_b * (nb @ nb - nb)
        + (params.chi_b - delta) * nc
        - 0.5 * params.alpha_c * (nc @ nc - nc)
        - params.chi_a * na @ nc
        - params.chi_b * nb @ nc
        - params.K_ab * na @ nb
    )
    v = g1 * a.conj().T @ b @ c
    return TWO_PI * (h + v + v.conj().T)


def _coupler_projector(system: ModeSystem, level: int) -> np.ndarray:
    dim = system.dim("c")
    p = np.zeros((dim, dim), dtype=complex)
    p[level, level] = 1.0
    return system.embed("c", p)


def build_exchange_hamiltonian(
    g1: float, delta: float, system: ModeSystem | None = None
) -> TimeDependentHamiltonian:
    """H(t) = 2 pi g1 (exp(i 2 pi delta t) a^dag b |g><e| + h.c.)."""
    system = system or three_mode_system()
    _require(system, "abc")
    if system.dim("c") < 2:
        raise ModelError("coupler needs at least two levels")
    a = annihilation(system, "a")
    b = annihilation(system, "b")
    ge = np.zeros((system.dim("c"),) * 2, dtype=complex)
    ge[0, 1] = 1.0
    op = TWO_PI * g1 * a.conj().T @ b @ system.embed("c", ge)
    opd = op.conj().T
    zero = np.zeros_like(op)
    if delta == 0:
        return TimeDependentHamiltonian(op + opd)
    w = TWO_PI * delta
    return TimeDependentHamiltonian(
        zero,
        ((op, lambda t: np.exp(1j * w * t)), (opd, lambda t: np.exp(-1j * w * t))),
        period=1.0 / abs(delta),
    )


def build_effective_crosskerr(g_ab: float, system: ModeSystem | None = None) -> np.ndarray:
    """2 pi g_ab n_a n_b, times |g><g| when the system carries a coupler."""
    system = system or ModeSystem((("a", 4), ("b", 4)))
    _require(system, "ab")
    h = number_operator(system, "a") @ number_operator(system, "b")
    if system.has("c"):
        h = h @ _coupler_projector(system, 0)
    return TWO_PI * g_ab * h


# ------------------------------------------------------------ cosine model


@dataclass(frozen=True)
class CouplerSpectrum:
    """Lowest eigenstates of the isolated coupler (MHz, zero at ground).

    ``momentum`` is (c^dag - c) and ``position`` is (c + c^dag) in the
    eigenbasis, i.e. n / (i n_zpf) and phi / phi_zpf.
    """

    energies: np.ndarray
    momentum: np.ndarray
    position: np.ndarray
    n_zpf: float
    phi_zpf: float


def zero_point(EJ: float, EC: float) -> tuple[float, float]:
    """(n_zpf, phi_zpf) = ((EJ/32EC)^1/4, (2EC/EJ)^1/4); their product is 1/2."""
    return (EJ / (32 * EC)) ** 0.25, (2 * EC / EJ) ** 0.25


@lru_cache(maxsize=64)
def coupler_spectrum(EJ: float, EC: float, dim: int = 12, basis: str = "charge", ncut: int = 40) -> CouplerSpectrum:
    """Diagonalize 4 EC n^2 - EJ cos(phi) and keep ``dim`` levels.

    ``basis="charge"`` diagonalizes in the integer charge basis, where the
    cosine is exact nearest-neighbour hopping; phi matrix elements follow
    from [H, phi] = -8 i EC n. ``basis="oscillator"`` builds n and phi from
    zero-point amplitudes on ``dim`` oscillator levels and takes cos(phi) as
    a Hermitian matrix function.
    """
    if dim < 4:
        raise ModelError("coupler truncation must be at least 4")
    n_zpf, phi_zpf = zero_point(EJ, EC)
    if basis == "charge":
        ns = np.arange(-ncut, ncut + 1, dtype=float)
        hop = np.ones(ns.size - 1)
        h = 1e3 * (np.diag(4 * EC * ns**2) - 0.5 * EJ * (np.diag(hop, 1) + np.diag(hop, -1)))
        e, u = np.linalg.eigh(h)
        e = e[:dim] - e[0]
        u = u[:, :dim]
        # fix eigenvector signs so that <k|n|k+1> is negative real (like i n_zpf (c^dag - c))
        n_op = u.T @ (ns[:, None] * u)
        for k in range(dim - 1):
            if n_op[k, k + 1] > 0:
                u[:, k + 1] *= -1
                n_op[:, k + 1] *= -1
                n_op[k + 1, :] *= -1
        gaps = e[:, None] - e[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(np.abs(gaps) > 0, -8j * EC * 1e3 * n_op / gaps, 0.0)
        momentum = -1j * n_op / n_zpf
        position = phi / phi_zpf
    elif basis == "oscillator":
        c = destroy(dim)
        phi_m = phi_zpf * (c + c.conj().T)
        n_m = 1j * n_zpf * (c.conj().T - c)
        w, v = np.linalg.eigh(phi_m)
        cos_phi = (v * np.cos(w)) @ v.conj().T
        h = 1e3 * (4 * EC * n_m @ n_m - EJ * cos_phi)
        e, u = np.linalg.eigh((h + h.conj().T) / 2)
        e = e - e[0]
        # align phases so that <k|(c^dag - c)|k+1> is real negative, as for c
        mom = u.conj().T @ (c.conj().T - c) @ u
        for k in range(dim - 1):
            z = mom[k, k + 1]
            if abs(z) > 0:
                ph = -z / abs(z)
                u[:, k + 1] *= np.conj(ph)
                mom = u.conj().T @ (c.conj().T - c) @ u
        momentum = mom
        position = u.conj().T @ (c + c.conj().T) @ u
    else:
        raise ModelError(f"unknown coupler basis {basis!r}")
    momentum = 0.5 * (momentum - momentum.conj().T)
    position = 0.5 * (position + position.conj().T)
    return CouplerSpectrum(e, momentum, position, n_zpf, phi_zpf)


@dataclass(frozen=True)
class FullSquidModel:
    """Cosine coupler plus two cavities, static part diagonal-ready.

    ``static`` and ``drive_operator`` are in rad/us; the drive enters as
    ``2 pi eps_F cos(2 pi f t) * drive_operator / (2 pi)`` i.e. the operator is
    2 pi (c + c^dag) and the amplitude is eps_F in MHz.
    """

    system: ModeSystem
    static: np.ndarray
    drive_operator: np.ndarray
    bare_cavities: tuple[float, float]
    coupler: CouplerSpectrum
    params: DeviceParams

    def periodic(self, epsilon_f: float, frequency: float, phase: float = 0.0) -> PeriodicDrive:
        return PeriodicDrive(self.static, self.drive_operator, epsilon_f, frequency, phase)

    def hamiltonian(self, epsilon_f: float, frequency: float, envelope=None) -> TimeDependentHamiltonian:
        w = TWO_PI * frequency
        if envelope is None:
            coeff = lambda t: epsilon_f * math.cos(w * t)  # noqa: E731
        else:
            coeff = lambda t: epsilon_f * envelope(t) * math.cos(w * t)  # noqa: E731
        return TimeDependentHamiltonian(self.static, ((self.drive_operator, coeff),), period=1.0 / frequency)

    def dressed(self) -> "DressedSpectrum":
        return dressed_spectrum(self.static, self.system)


@dataclass(frozen=True)
class DressedSpectrum:
    """Undriven eigenvalues (MHz, ground at 0) labelled by bare (n_a, n_b, n_c)."""

    energies: np.ndarray
    vectors: np.ndarray
    labels: tuple[tuple[int, ...], ...]
    overlaps: np.ndarray
    ground: float

    def energy(self, *label) -> float:
        return float(self.energies[self.labels.index(tuple(label))])

    def vector(self, *label) -> np.ndarray:
        return self.vectors[:, self.labels.index(tuple(label))]

    def dispersive(self) -> dict[str, float]:
        """chi, Kerr and cross-Kerr values read off the dressed spectrum (MHz)."""
        E = self.energy
        e0 = E(0, 0, 0)
        return {
            "omega_a": E(1, 0, 0) - e0,
            "omega_b": E(0, 1, 0) - e0,
            "omega_c": E(0, 0, 1) - e0,
            "alpha_c": -(E(0, 0, 2) - 2 * E(0, 0, 1) + e0),
            "K_a": -(E(2, 0, 0) - 2 * E(1, 0, 0) + e0),
            "K_b": -(E(0, 2, 0) - 2 * E(0, 1, 0) + e0),
            "chi_a": -(E(1, 0, 1) - E(1, 0, 0) - E(0, 0, 1) + e0),
            "chi_b": -(E(0, 1, 1) - E(0, 1, 0) - E(0, 0, 1) + e0),
            "K_ab": -(E(1, 1, 0) - E(1, 0, 0) - E(0, 1, 0) + e0),
        }


def dressed_spectrum(static: np.ndarray, system: ModeSystem) -> DressedSpectrum:
    """Diagonalize and label each eigenvector by its largest bare component.

    Labels are assigned greedily in order of overlap so that they stay
    unique even where two bare states mix strongly.
    """
    e, v = np.linalg.eigh((static + static.conj().T) / 2)
    e = e / TWO_PI
    weights = np.abs(v) ** 2  # rows: bare index, cols: eigenvector
    dim = e.size
    assigned_bare = np.full(dim, -1)
    used = np.zeros(dim, dtype=bool)
    order = np.argsort(-weights, axis=None)
    taken_eig = np.zeros(dim, dtype=bool)
    for flat in order:
        bare, eig = divmod(int(flat), dim)
        if used[bare] or taken_eig[eig]:
            continue
        assigned_bare[eig] = bare
        used[bare] = True
        taken_eig[eig] = True
        if taken_eig.all():
            break
    labels = tuple(system.levels_of(int(i)) for i in assigned_bare)
    overlaps = weights[assigned_bare, np.arange(dim)]
    ground = float(e[labels.index((0,) * len(system.dims))])
    return DressedSpectrum(e - ground, v, labels, overlaps, ground)


def build_full_squid_hamiltonian(
    params: DeviceParams,
    dims: tuple[int, int, int] = (4, 4, 12),
    basis: str = "charge",
    match_cavities: bool = True,
) -> FullSquidModel:
    """Cosine-coupler model with charge couplings to both cavities.

    H = 4 EC n^2 - EJ cos(phi) + w_a a^dag a + w_b b^dag b
        - g_ac (a^dag - a)(c^dag - c) - g_bc (b^dag - b)(c^dag - c)
        + eps_F cos(w_d t)(c + c^dag).
    The coupler is represented by its lowest ``dims[2]`` eigenstates.
    With ``match_cavities`` the bare cavity frequencies are adjusted so that
    the dressed single-photon energies equal ``params.omega_a/b``.
    """
    dim_a, dim_b, dim_c = dims
    system = three_mode_system(dim_a, dim_b, dim_c)
    spec = coupler_spectrum(params.EJ, params.EC, dim_c, basis)
    hc = system.embed("c", np.diag(spec.energies).astype(complex))
    mom = system.embed("c", spec.momentum)
    a = annihilation(system, "a")
    b = annihilation(system, "b")
    na = a.conj().T @ a
    nb = b.conj().T @ b
    coupling = -params.g_ac * (a.conj().T - a) @ mom - params.g_bc * (b.conj().T - b) @ mom
    wa, wb = params.omega_a, params.omega_b

    def assemble(wa, wb):
        return TWO_PI * (hc + wa * na + wb * nb + coupling)

    static = assemble(wa, wb)
    if match_cavities:
        for _ in range(3):
            d = dressed_spectrum(static, system).dispersive()
            wa += params.omega_a - d["omega_a"]
            wb += params.omega_b - d["omega_b"]
            static = assemble(wa, wb)
    drive_op = TWO_PI * system.embed("c", spec.position)
    return FullSquidModel(system, static, drive_op, (wa, wb), spec, params)


def build_quartic_hamiltonian(
    params: DeviceParams, dims: tuple[int, int, int] = (4, 4, 12)
) -> FullSquidModel:
    """Fourth-order expansion of the cosine: 4 EC n^2 + EJ (phi^2/2 - phi^4/24)."""
    dim_a, dim_b, dim_c = dims
    system = three_mode_system(dim_a, dim_b, dim_c)
    n_zpf, phi_zpf = zero_point(params.EJ, params.EC)
    c = destroy(dim_c)
    phi = phi_zpf * (c + c.conj().T)
    n = 1j * n_zpf * (c.conj().T - c)
    hc = 1e3 * (4 * params.EC * n @ n + params.EJ * (phi @ phi / 2 - np.linalg.matrix_power(phi, 4) / 24))
    a = annihilation(system, "a")
    b = annihilation(system, "b")
    mom = system.embed("c", c.conj().T - c)
    h = (
        system.embed("c", hc)
        + params.omega_a * a.conj().T @ a
        + params.omega_b * b.conj().T @ b
        - params.g_ac * (a.conj().T - a) @ mom
        - params.g_bc * (b.conj().T - b) @ mom
    )
    spec = CouplerSpectrum(np.linalg.eigvalsh(hc), c.conj().T - c, c + c.conj().T, n_zpf, phi_zpf)
    return FullSquidModel(system, TWO_PI * h, TWO_PI * system.embed("c", c + c.conj().T),
                          (params.omega_a, params.omega_b), spec, params)


def full_model_dispersive(params: DeviceParams, dims=(4, 4, 12), basis: str = "charge") -> dict[str, float]:
    """Dispersive coefficients (MHz) of the undriven cosine model."""
    return build_full_squid_hamiltonian(params, dims, basis).dressed().dispersive()


def calibrate_operating_flux(
    params: DeviceParams,
    bounds: tuple[float, float] = (0.0, 0.45),
    dims=(4, 4, 12),
) -> tuple[float, dict[str, float]]:
    """Flux at which the cosine model best reproduces ``chi_a`` and ``chi_b``.

    Minimizes the summed squared relative errors of the two dispersive
    shifts; the couplings g_ac, g_bc are held fixed. Returns the flux and the
    dispersive coefficients there.
    """

    def cost(f):
        d = full_model_dispersive(params.with_(flux=f), dims=(3, 3, dims[2]))
        return ((d["chi_a"] - params.chi_a) / params.chi_a) ** 2 + ((d["chi_b"] - params.chi_b) / params.chi_b) ** 2

    res = minimize_scalar(cost, bounds=bounds, method="bounded", options={"xatol": 1e-5})
    flux = float(res.x)
    return flux, full_model_dispersive(params.with_(flux=flux), dims)
