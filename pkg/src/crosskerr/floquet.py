"""Quasi-energy analysis of the driven cosine-coupler model.

Drive amplitudes here are the cosine-model amplitude ``eps_F`` (MHz) of
``eps_F cos(w_d t)(c + c^dag)``; see :class:`crosskerr.models.DriveSpec`
for the relation to the displaced-frame epsilon.

Floquet modes of a strongly driven coupler are displaced copies of the
undriven states, so labels are assigned against drive-dressed references:
the undriven dressed states with the coupler factor replaced by the
Floquet modes of the driven coupler alone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import period_propagator
from .hilbert import ModeSystem
from .models import DeviceParams, DressedSpectrum, FullSquidModel, coupler_spectrum

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
CONFIDENCE_MIN = 0.5
CROSSKERR_LABELS = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0))


class FloquetError(RuntimeError):
    pass


@dataclass
class FloquetSpectrum:
    """Labelled quasi-energies (MHz) unwrapped next to the undriven energies.

    ``confidence`` is the squared overlap between the assigned Floquet mode
    and the reference state of the label; labels below 0.5 are listed in
    ``flagged``.
    """

    labels: list[tuple[int, ...]]
    quasi_energies: np.ndarray
    confidence: np.ndarray
    frequency: float
    flagged: list[tuple[int, ...]] = field(default_factory=list)

    def energy(self, label) -> float:
        return float(self.quasi_energies[self.labels.index(tuple(label))])

    def confidence_of(self, label) -> float:
        return float(self.confidence[self.labels.index(tuple(label))])


def floquet_decomposition(u: np.ndarray, frequency: float) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-energies (MHz, principal zone) and normalized Floquet modes."""
    evals, evecs = np.linalg.eig(u)
    eps = -np.angle(evals) * frequency / TWO_PI
    return eps, evecs / np.linalg.norm(evecs, axis=0)


def _unwrap(eps, reference, frequency):
    return eps + frequency * np.round((reference - eps) / frequency)


def _greedy_match(weights: np.ndarray) -> np.ndarray:
    """Row -> column assignment, largest remaining weight first."""
    rows, cols = weights.shape
    match = np.full(rows, -1)
    used = np.zeros(cols, dtype=bool)
    for flat in np.argsort(-weights, axis=None):
        r, c = divmod(int(flat), cols)
        if match[r] >= 0 or used[c]:
            continue
        match[r] = c
        used[c] = True
        if np.all(match >= 0):
            break
    return match


# ------------------------------------------------------------ references


def coupler_only_model(params: DeviceParams, dim: int = 12, basis: str = "charge") -> FullSquidModel:
    system = ModeSystem((("c", dim),))
    spec = coupler_spectrum(params.EJ, params.EC, dim, basis)
    static = TWO_PI * np.diag(spec.energies).astype(complex)
    return FullSquidModel(system, static, TWO_PI * spec.position, (0.0, 0.0), spec, params)


def coupler_floquet_frame(model: FullSquidModel, epsilon_f: float, frequency: float):
    """Unitary on the coupler taking level k to its driven Floquet mode.

    Also returns the coupler-only quasi-energies (MHz) of each level,
    unwrapped next to the undriven level energies.
    """
    spec = model.coupler
    dim = spec.energies.size
    if epsilon_f == 0:
        return np.eye(dim, dtype=complex), spec.energies.copy()
    static = TWO_PI * np.diag(spec.energies).astype(complex)
    cmodel = FullSquidModel(ModeSystem((("c", dim),)), static, TWO_PI * spec.position, (0.0, 0.0), spec, model.params)
    u = period_propagator(cmodel.periodic(epsilon_f, frequency), tol=1e-6)
    eps, modes = floquet_decomposition(u, frequency)
    match = _greedy_match(np.abs(modes) ** 2)
    frame = modes[:, match]
    d = np.diag(frame)
    frame = frame * (np.conj(d) / np.maximum(np.abs(d), 1e-300))[None, :]
    return frame, _unwrap(eps[match], spec.energies, frequency)


def coupler_stark_shift(params: DeviceParams, epsilon_f: float, frequency: float, dim: int = 12) -> float:
    """Drive-induced shift (MHz) of the coupler g-e quasi-energy difference."""
    model = coupler_only_model(params, dim)
    _, energies = coupler_floquet_frame(model, epsilon_f, frequency)
    return float(energies[1] - energies[0] - model.coupler.energies[1])


class DrivenReferences:
    """Drive-dressed reference states for labelling Floquet modes."""

    def __init__(self, model: FullSquidModel, epsilon_f: float, frequency: float, dressed: DressedSpectrum | None = None):
        self.dressed = dressed or model.dressed()
        frame, _ = coupler_floquet_frame(model, epsilon_f, frequency)
        self.frame = model.system.embed("c", frame)

    def matrix(self, labels) -> np.ndarray:
        return self.frame @ np.column_stack([self.dressed.vector(*lab) for lab in labels])


def label_modes(u: np.ndarray, frequency: float, refs: DrivenReferences, labels, zones: dict | None = None) -> FloquetSpectrum:
    """Assign Floquet modes of ``u`` to ``labels`` and unwrap their quasi-energies.

    ``zones`` optionally maps a label to the energy its quasi-energy is
    unwrapped next to (default: the undriven dressed energy).
    """
    labels = [tuple(x) for x in labels]
    eps, modes = floquet_decomposition(u, frequency)
    eps = eps - refs.dressed.ground
    overlaps = np.abs(refs.matrix(labels).conj().T @ modes) ** 2
    match = _greedy_match(overlaps)
    conf = overlaps[np.arange(len(labels)), match]
    ref_e = np.array([(zones or {}).get(lab, refs.dressed.energy(*lab)) for lab in labels])
    qe = _unwrap(eps[match], ref_e, frequency)
    flagged = [lab for lab, c in zip(labels, conf) if c < CONFIDENCE_MIN]
    return FloquetSpectrum(labels, qe, conf, frequency, flagged)


def quasi_energy_spectrum(
    model: FullSquidModel,
    epsilon_f: float,
    frequency: float,
    labels=CROSSKERR_LABELS,
    tol: float = 1e-4,
    dressed: DressedSpectrum | None = None,
) -> FloquetSpectrum:
    """Quasi-energies of ``labels`` under a flat drive.

    The period propagator is refined until the labelled quasi-energies move
    by less than ``tol`` MHz.
    """
    refs = DrivenReferences(model, epsilon_f, frequency, dressed)
    labels = [tuple(x) for x in labels]
    if epsilon_f == 0:
        energies = np.array([refs.dressed.energy(*lab) for lab in labels])
        return FloquetSpectrum(labels, energies, np.ones(len(labels)), frequency)

    def monitor(u):
        return label_modes(u, frequency, refs, labels).quasi_energies

    u = period_propagator(model.periodic(epsilon_f, frequency), tol=tol, min_steps=32, monitor=monitor)
    return label_modes(u, frequency, refs, labels)


def crosskerr_from_spectrum(spectrum: FloquetSpectrum) -> float:
    """E11 - E10 - E01 + E00 over the coupler-ground labels (MHz)."""
    missing = [lab for lab in CROSSKERR_LABELS if lab not in spectrum.labels]
    bad = [lab for lab in CROSSKERR_LABELS if lab in spectrum.flagged]
    if missing or bad:
        raise FloquetError(f"labels unassigned: {missing + bad}")
    e = [spectrum.energy(lab) for lab in CROSSKERR_LABELS]
    return e[3] - e[1] - e[2] + e[0]


def static_crosskerr(dressed: DressedSpectrum) -> float:
    e = [dressed.energy(*lab) for lab in CROSSKERR_LABELS]
    return e[3] - e[1] - e[2] + e[0]


# ---------------------------------------------------------------- exchange


@dataclass
class ExchangeResonance:
    """Stark-shifted exchange condition between |1,0,g> and |0,1,e>.

    ``frequency`` is the drive frequency (MHz) at which the pair is
    degenerate, ``g1`` the exchange rate (MHz) and ``mismatch`` the residual
    detuning at the last evaluation.
    """

    frequency: float
    g1: float
    mismatch: float
    iterations: int


def exchange_block(model: FullSquidModel, epsilon_f: float, frequency: float, dressed=None, tol: float = 1e-5):
    """Effective 2x2 Floquet Hamiltonian (MHz) on the |1,0,g>, |0,1,e> pair.

    The two Floquet modes with most weight on the pair are projected onto
    it and the block is Loewdin-normalized. |0,1,e> is referred to the zone
    of |1,0,g>. Returns the block and the smaller captured weight.
    """
    refs = DrivenReferences(model, epsilon_f, frequency, dressed)
    basis = refs.matrix([(1, 0, 0), (0, 1, 1)])
    ref = refs.dressed.energy(1, 0, 0)

    def block(u):
        eps, modes = floquet_decomposition(u, frequency)
        eps = eps - refs.dressed.ground
        proj = basis.conj().T @ modes
        weight = np.sum(np.abs(proj) ** 2, axis=0)
        pick = np.argsort(-weight)[:2]
        h = np.zeros((2, 2), dtype=complex)
        s = np.zeros((2, 2), dtype=complex)
        for j in pick:
            p = proj[:, j]
            h += _unwrap(eps[j], ref, frequency) * np.outer(p, p.conj())
            s += np.outer(p, p.conj())
        w, v = np.linalg.eigh(s)
        s_half = (v / np.sqrt(np.clip(w, 1e-12, None))) @ v.conj().T
        return s_half @ h @ s_half, float(np.min(weight[pick]))

    def monitor(u):
        h, _ = block(u)
        return [h[0, 0].real, h[1, 1].real, abs(h[0, 1])]

    u = period_propagator(model.periodic(epsilon_f, frequency), tol=tol, min_steps=32, monitor=monitor)
    return block(u)


def find_exchange_resonance(
    model: FullSquidModel,
    epsilon_f: float,
    dressed: DressedSpectrum | None = None,
    start: float | None = None,
    tol: float = 1e-4,
    max_iter: int = 20,
) -> ExchangeResonance:
    """Locate the exchange condition at drive amplitude ``epsilon_f``.

    Secant iteration on the diagonal mismatch of :func:`exchange_block`.
    The Stark shifts move with the drive frequency, so a plain fixed-point
    update can stall.
    """
    dressed = dressed or model.dressed()

    def mismatch(f):
        h, weight = exchange_block(model, epsilon_f, f, dressed, tol=tol / 10)
        if weight < 0.3:
            raise FloquetError(f"exchange pair lost at w_d = {f:.4f} MHz (weight {weight:.2f})")
        return float(np.real(h[1, 1] - h[0, 0])), float(abs(h[0, 1]))

    x0 = start if start is not None else dressed.energy(0, 1, 1) - dressed.energy(1, 0, 0)
    m0, g1 = mismatch(x0)
    if abs(m0) < tol:
        return ExchangeResonance(x0, g1, m0, 1)
    x1 = x0 + m0
    for it in range(2, max_iter + 1):
        m1, g1 = mismatch(x1)
        if abs(m1) < tol:
            return ExchangeResonance(x1, g1, m1, it)
        slope = (m1 - m0) / (x1 - x0)
        if not np.isfinite(slope) or abs(slope) < 1e-3:
            slope = -1.0
        x0, m0 = x1, m1
        x1 = x1 - m1 / slope
    raise FloquetError(f"exchange resonance not converged (mismatch {m1:.3g} MHz)")


# ------------------------------------------------------------- calibration


def stark_target_from_xi(params: DeviceParams, xi: float) -> float:
    """Coupler Stark shift -2 alpha |xi|^2 (MHz) defining an effective xi."""
    return -2 * params.alpha_c * abs(xi) ** 2


def xi_from_stark(params: DeviceParams, shift: float) -> float:
    return float(np.sqrt(abs(shift) / (2 * params.alpha_c)))


def calibrate_drive_amplitude(
    params: DeviceParams,
    target_shift: float,
    frequency: float,
    dim: int = 12,
    tol: float = 1e-3,
    eps_max: float = 5000.0,
) -> float:
    """Cosine-model amplitude eps_F (MHz) whose coupler Stark shift matches ``target_shift``.

    Bisection on |shift| to ``tol`` MHz (1 kHz by default).
    """
    target = abs(target_shift)
    if target == 0:
        return 0.0
    model = coupler_only_model(params, dim)

    def shift(e):
        _, en = coupler_floquet_frame(model, e, frequency)
        return abs(en[1] - en[0] - model.coupler.energies[1])

    lo, hi = 0.0, 10.0
    while shift(hi) < target:
        lo, hi = hi, 2 * hi
        if hi > eps_max:
            raise FloquetError(f"Stark shift {target} MHz not reachable below eps_F = {eps_max} MHz")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        s = shift(mid)
        if abs(s - target) < tol:
            return mid
        if s < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class DriveCalibration:
    xi: float
    epsilon_f: float
    resonance: ExchangeResonance
    stark_shift: float


def calibrate_for_xi(model: FullSquidModel, xi: float, dressed: DressedSpectrum | None = None, rounds: int = 4) -> DriveCalibration:
    """Self-consistent drive amplitude for an effective ``xi``.

    The Stark shift depends on the drive frequency, which follows the
    Stark-shifted exchange condition, so amplitude and resonance are
    iterated together.
    """
    params = model.params
    dressed = dressed or model.dressed()
    target = stark_target_from_xi(params, xi)
    freq = dressed.energy(0, 1, 1) - dressed.energy(1, 0, 0) + target
    dim = model.coupler.energies.size
    eps, res = 0.0, None
    for _ in range(rounds):
        eps_new = calibrate_drive_amplitude(params, target, freq, dim)
        res = find_exchange_resonance(model, eps_new, dressed, start=freq)
        done = abs(res.frequency - freq) < 1e-3 and abs(eps_new - eps) < 1e-2
        eps, freq = eps_new, res.frequency
        if done:
            break
    return DriveCalibration(xi, eps, res, coupler_stark_shift(params, eps, freq, dim))


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepPoint:
    delta: float
    frequency: float
    g_ab: float
    confidence: float
    flags: str = ""


@dataclass
class CrossKerrSweep:
    epsilon_f: float
    resonance: ExchangeResonance | None
    static_k: float
    points: list[SweepPoint]

    @property
    def deltas(self) -> np.ndarray:
        return np.array([p.delta for p in self.points])

    @property
    def g_ab(self) -> np.ndarray:
        return np.array([np.nan if p.flags else p.g_ab for p in self.points])

    @property
    def n_flagged(self) -> int:
        return sum(1 for p in self.points if p.flags)

    def rows(self):
        for p in self.points:
            yield {"delta_MHz": p.delta, "g_ab_kHz": p.g_ab * 1e3, "confidence": p.confidence, "flags": p.flags}


def crosskerr_point(model, epsilon_f, frequency, dressed=None, tol=1e-4) -> tuple[float, float, list]:
    """(g_ab in MHz, min label confidence, flagged labels) at one drive frequency."""
    spec = quasi_energy_spectrum(model, epsilon_f, frequency, CROSSKERR_LABELS, tol=tol, dressed=dressed)
    conf = float(np.min(spec.confidence))
    if spec.flagged:
        return float("nan"), conf, spec.flagged
    return crosskerr_from_spectrum(spec), conf, []


def _point_task(args):
    model, eps, f, tol = args
    return crosskerr_point(model, eps, f, None, tol)


def crosskerr_sweep(
    model: FullSquidModel,
    epsilon_f: float,
    deltas,
    resonance: ExchangeResonance | None = None,
    workers: int = 1,
    tol: float = 1e-4,
) -> CrossKerrSweep:
    """g_ab versus delta, measured from the Stark-shifted exchange condition.

    Unassigned points stay in the output as NaN with a flag. A point off its
    neighbours' line by more than three local slope steps is flagged as a
    branch jump.
    """
    dressed = model.dressed()
    if resonance is None and epsilon_f:
        resonance = find_exchange_resonance(model, epsilon_f, dressed)
    centre = resonance.frequency if resonance else dressed.energy(0, 1, 1) - dressed.energy(1, 0, 0)
    deltas = [float(d) for d in deltas]
    freqs = [centre + d for d in deltas]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_point_task, [(model, epsilon_f, f, tol) for f in freqs]))
    else:
        results = [crosskerr_point(model, epsilon_f, f, dressed, tol) for f in freqs]
    points = [
        SweepPoint(d, f, g, conf, "unassigned" if flagged else "")
        for d, f, (g, conf, flagged) in zip(deltas, freqs, results)
    ]
    _flag_jumps(points)
    return CrossKerrSweep(epsilon_f, resonance, static_crosskerr(dressed), points)


def _flag_jumps(points: list[SweepPoint]) -> None:
    good = [p for p in points if not p.flags]
    for i in range(1, len(good) - 1):
        a, b, c = good[i - 1], good[i], good[i + 1]
        slope = (c.g_ab - a.g_ab) / (c.delta - a.delta)
        pred = a.g_ab + slope * (b.delta - a.delta)
        scale = abs(slope) * max(b.delta - a.delta, c.delta - b.delta)
        if scale > 0 and abs(b.g_ab - pred) > 3 * scale:
            b.flags = "branch-jump"
