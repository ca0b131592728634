"""Closed and open system time evolution plus the exchange fit model.

Units throughout: time in microseconds, Hamiltonians in angular units
(rad/us), i.e. already multiplied by 2*pi by the builders in
:mod:`crosskerr.models`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from .hilbert import DensityMatrix, ModeSystem, annihilation, number_operator

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


class SolverError(RuntimeError):
    """Integration or fit failure; carries the failing time when known."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t = {time:.6g} us)")
        self.time = time


# ------------------------------------------------------------- Hamiltonians


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """H(t) = static + sum_k f_k(t) * op_k.

    ``terms`` holds ``(operator, coefficient)`` pairs; a coefficient is a
    callable of time returning a complex number. When the coefficient of a
    term is complex, its Hermitian partner must be present as another term.
    ``period`` is set when the whole Hamiltonian is periodic.
    """

    static: np.ndarray
    terms: tuple[tuple[np.ndarray, Callable[[float], complex]], ...] = ()
    period: float | None = None

    def __call__(self, t: float) -> np.ndarray:
        h = np.array(self.static, dtype=complex)
        for op, coeff in self.terms:
            c = coeff(t)
            if c != 0:
                h = h + c * op
        return h

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    @property
    def is_constant(self) -> bool:
        return not self.terms


@dataclass(frozen=True)
class PeriodicDrive:
    """H(t) = static + amplitude * cos(2 pi f t + phase) * operator.

    ``static`` and ``amplitude * operator`` are angular (rad/us);
    ``frequency`` is an ordinary frequency in MHz. The structure lets
    :func:`period_propagator` work in the interaction picture of ``static``.
    """

    static: np.ndarray
    operator: np.ndarray
    amplitude: float
    frequency: float
    phase: float = 0.0

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def coefficient(self, t: float) -> float:
        return self.amplitude * np.cos(TWO_PI * self.frequency * t + self.phase)

    def __call__(self, t: float) -> np.ndarray:
        return self.static + self.coefficient(t) * self.operator


# ---------------------------------------------------------------- Lindblad


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian (constant matrix or callable of t) plus collapse channels.

    ``collapse_ops`` holds ``(operator, rate)`` with rate in 1/us; the
    dissipator uses ``sqrt(rate) * operator``.
    """

    hamiltonian: object
    collapse_ops: tuple[tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        for _, rate in self.collapse_ops:
            if rate < 0:
                raise ValueError(f"collapse rate must be >= 0, got {rate}")


@dataclass
class Trajectory:
    times: np.ndarray
    expectations: dict[str, np.ndarray] = field(default_factory=dict)
    states: list[np.ndarray] | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")


def _hamiltonian_fn(h) -> Callable[[float], np.ndarray]:
    if callable(h):
        return h
    h = np.asarray(h, dtype=complex)
    return lambda t: h


def _is_constant(h) -> bool:
    if isinstance(h, TimeDependentHamiltonian):
        return h.is_constant
    return not callable(h)


def evolve_lindblad(
    model: LindbladModel,
    rho0,
    times: Sequence[float],
    e_ops: dict[str, np.ndarray] | None = None,
    store_states: bool = False,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    max_step: float | None = None,
    method: str = "DOP853",
) -> Trajectory:
    """Integrate drho/dt = -i[H, rho] + sum_k D[L_k] rho.

    Adaptive embedded Runge-Kutta on the vectorized density matrix with
    dense output at ``times``. The first entry of ``times`` is the initial
    time. ``e_ops`` maps names to operators whose real expectation values
    are recorded.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    r0 = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    if r0.ndim == 1:
        r0 = np.outer(r0, r0.conj())
    dim = r0.shape[0]

    ops = [(np.sqrt(rate) * np.asarray(op, dtype=complex)) for op, rate in model.collapse_ops if rate > 0]
    ldag = [L.conj().T for L in ops]
    hfun = _hamiltonian_fn(model.hamiltonian)
    constant = _is_constant(model.hamiltonian)

    # effective non-Hermitian part, -i H - 1/2 sum L^dag L
    lsum = sum((Ld @ L for L, Ld in zip(ops, ldag)), np.zeros((dim, dim), dtype=complex))
    if constant:
        heff = -1j * np.asarray(hfun(times[0]), dtype=complex) - 0.5 * lsum

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        h = heff if constant else -1j * hfun(t) - 0.5 * lsum
        out = h @ rho
        out = out + out.conj().T
        for L, Ld in zip(ops, ldag):
            out += L @ rho @ Ld
        return out.ravel()

    e_ops = e_ops or {}
    expect = {k: np.empty(times.size) for k in e_ops}
    states = [] if store_states else None

    if times.size == 1:
        sol_y = r0.reshape(-1, 1)
    else:
        kwargs = {"rtol": rtol, "atol": atol, "t_eval": times}
        if max_step is not None:
            kwargs["max_step"] = max_step
        sol = solve_ivp(rhs, (times[0], times[-1]), r0.ravel().astype(complex), method=method, **kwargs)
        if not sol.success:
            t_fail = float(sol.t[-1]) if sol.t.size else float(times[0])
            raise SolverError(f"Lindblad integration failed: {sol.message}", t_fail)
        sol_y = sol.y

    for i in range(times.size):
        rho = sol_y[:, i].reshape(dim, dim)
        rho = (rho + rho.conj().T) / 2
        for k, op in e_ops.items():
            expect[k][i] = float(np.real(np.trace(op @ rho)))
        if store_states:
            states.append(rho)
    return Trajectory(times, expect, states)


def final_state(model: LindbladModel, rho0, duration: float, **kwargs) -> np.ndarray:
    traj = evolve_lindblad(model, rho0, [0.0, duration], store_states=True, **kwargs)
    return traj.states[-1]


def unitary_evolve(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) for a constant Hermitian H via its eigendecomposition."""
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


# --------------------------------------------------------- period propagator

_GL_OFFSET = np.sqrt(3) / 6


def _expm_antihermitian(omega: np.ndarray) -> np.ndarray:
    """exp(omega) for anti-Hermitian omega through the Hermitian i*omega."""
    h = 1j * omega
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(-1j * w)) @ v.conj().T


def _magnus4_generic(hfun, t0: float, period: float, steps: int) -> np.ndarray:
    dim = hfun(t0).shape[0]
    u = np.eye(dim, dtype=complex)
    h = period / steps
    for k in range(steps):
        a = t0 + k * h
        h1 = hfun(a + (0.5 - _GL_OFFSET) * h)
        h2 = hfun(a + (0.5 + _GL_OFFSET) * h)
        # Omega = -i h/2 (H1 + H2) + (sqrt3/12) h^2 [H1, H2]
        omega = -0.5j * h * (h1 + h2) + (np.sqrt(3) / 12) * h * h * (h1 @ h2 - h2 @ h1)
        u = _expm_antihermitian(omega) @ u
    return u


def _magnus4_periodic(drive: PeriodicDrive, t0: float, steps: int) -> np.ndarray:
    """Interaction-picture Magnus-4 for static + f(t) X.

    The static part is diagonalized once and its phases are applied exactly,
    so the step size is set only by the drive and the level spacings seen
    through X.
    """
    static = (drive.static + drive.static.conj().T) / 2
    energies, basis = np.linalg.eigh(static)
    x = basis.conj().T @ drive.operator @ basis
    gaps = energies[:, None] - energies[None, :]
    period = drive.period
    h = period / steps
    u = np.eye(energies.size, dtype=complex)
    c3 = np.sqrt(3) / 12
    # phase factors advanced by one step per iteration instead of re-exponentiating
    step_phase = np.exp(1j * gaps * h)
    pa = x * np.exp(1j * gaps * (t0 + (0.5 - _GL_OFFSET) * h))
    pb = x * np.exp(1j * gaps * (t0 + (0.5 + _GL_OFFSET) * h))
    for k in range(steps):
        a = t0 + k * h
        h1 = drive.coefficient(a + (0.5 - _GL_OFFSET) * h) * pa
        h2 = drive.coefficient(a + (0.5 + _GL_OFFSET) * h) * pb
        omega = -0.5j * h * (h1 + h2) + c3 * h * h * (h1 @ h2 - h2 @ h1)
        u = _expm_antihermitian(omega) @ u
        pa = pa * step_phase
        pb = pb * step_phase
    # back to the Schrodinger picture: U(t0+T, t0) = e^{-iE(t0+T)} U_I e^{iE t0}
    u = (np.exp(-1j * energies * (t0 + period))[:, None] * u) * np.exp(1j * energies * t0)[None, :]
    return basis @ u @ basis.conj().T


def _spectrum_distance(u1: np.ndarray, u2: np.ndarray, period: float) -> float:
    """Largest quasi-energy shift (MHz) between two propagators' spectra."""
    p1 = np.sort(np.angle(np.linalg.eigvals(u1)))
    p2 = np.sort(np.angle(np.linalg.eigvals(u2)))
    d = np.angle(np.exp(1j * (p1 - p2)))
    return float(np.max(np.abs(d)) / (TWO_PI * period))


def period_propagator(
    hamiltonian,
    period: float | None = None,
    substeps: int | None = None,
    t0: float = 0.0,
    tol: float = 1e-3,
    min_steps: int = 64,
    max_steps: int = 8192,
    richardson: bool = True,
    monitor=None,
) -> np.ndarray:
    """Time-ordered propagator over one drive period.

    Fourth-order Magnus integration with two Gauss-Legendre nodes per step.
    A :class:`PeriodicDrive` is integrated in the interaction picture of its
    static part. With ``substeps`` given, exactly that many steps are used;
    otherwise the step count doubles from ``min_steps`` until the
    quasi-energy spectrum moves by less than ``tol`` (MHz), and the last two
    estimates are Richardson-combined (global error is O(h^4)).
    ``monitor`` maps a propagator to the quantities (MHz) whose change is
    tested instead of the full spectrum.
    """
    if isinstance(hamiltonian, PeriodicDrive):
        period = hamiltonian.period if period is None else period
        step = lambda n: _magnus4_periodic(hamiltonian, t0, n)  # noqa: E731
    else:
        if period is None:
            period = getattr(hamiltonian, "period", None)
        if period is None:
            raise ValueError("a period is required for a generic Hamiltonian")
        hfun = _hamiltonian_fn(hamiltonian)
        step = lambda n: _magnus4_generic(hfun, t0, period, n)  # noqa: E731
    if substeps is not None:
        return step(int(substeps))

    n = min_steps
    prev = step(n)
    while True:
        n *= 2
        cur = step(n)
        if monitor is None:
            moved = _spectrum_distance(prev, cur, period)
        else:
            moved = float(np.max(np.abs(np.asarray(monitor(cur)) - np.asarray(monitor(prev)))))
        if moved < tol:
            if richardson:
                cur = _unitary_project(cur + (cur - prev) / 15.0)
            return cur
        if n >= max_steps:
            raise SolverError(
                f"period propagator not converged: spectrum moved {moved:.3g} MHz at {n} substeps"
            )
        prev = cur


def _unitary_project(m: np.ndarray) -> np.ndarray:
    """Closest unitary (polar factor) to ``m``."""
    try:
        w, _, vh = np.linalg.svd(m)
    except np.linalg.LinAlgError:
        # divide-and-conquer occasionally fails on near-unitary input
        w, _, vh = sla.svd(m, lapack_driver="gesvd")
    return w @ vh


def quasi_energies(u: np.ndarray, period: float) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-energies (MHz, in (-f/2, f/2]) and Floquet modes of ``u``."""
    evals, evecs = np.linalg.eig(u)
    eps = -np.angle(evals) / (TWO_PI * period)
    # eig of a unitary: re-orthonormalize degenerate blocks via QR of the modes
    q, _ = np.linalg.qr(evecs)
    phases = np.diag(q.conj().T @ evecs)
    q = q * (phases / np.abs(phases))[None, :]
    return eps, q


# ----------------------------------------------------------------- decoherence


INF = float("inf")


def collapse_set(
    system: ModeSystem,
    coherences: dict[str, tuple[float, float]],
    dephasing: str = "coherence",
) -> list[tuple[np.ndarray, float]]:
    """Amplitude-damping and pure-dephasing channels per mode.

    ``coherences`` maps a mode label to ``(T1, Tphi)`` in us; ``inf`` (or
    ``None``) disables a channel, and labels missing from ``system`` are
    skipped. With ``dephasing="coherence"`` the dephasing channel is
    ``n`` at rate ``2/Tphi`` so the 0-1 coherence decays as ``exp(-t/Tphi)``;
    ``dephasing="rate"`` uses rate ``1/Tphi`` (decay ``exp(-t/(2 Tphi))``).
    """
    factor = {"coherence": 2.0, "rate": 1.0}.get(dephasing)
    if factor is None:
        raise ValueError(f"unknown dephasing convention {dephasing!r}")
    out: list[tuple[np.ndarray, float]] = []
    for label in system.labels:
        if label not in coherences:
            continue
        t1, tphi = coherences[label]
        if t1 is not None and np.isfinite(t1):
            if t1 <= 0:
                raise ValueError(f"T1 for {label!r} must be positive")
            out.append((annihilation(system, label), 1.0 / t1))
        if tphi is not None and np.isfinite(tphi):
            if tphi <= 0:
                raise ValueError(f"Tphi for {label!r} must be positive")
            out.append((number_operator(system, label), factor / tphi))
    return out


# ----------------------------------------------------------------- fit model


@dataclass
class DampedCosineFit:
    """P(t) = A e^{-k1 t} (1 + e^{-kphi t} cos(2 * 2pi g1 t + phi0)) + B."""

    A: float
    B: float
    kappa1: float
    kappa_phi: float
    g1: float
    phi0: float
    covariance: np.ndarray

    @property
    def stderr(self) -> dict[str, float]:
        err = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return dict(zip(("A", "B", "kappa1", "kappa_phi", "g1", "phi0"), map(float, err)))

    def __call__(self, t):
        return damped_cosine(np.asarray(t, dtype=float), self.A, self.B, self.kappa1, self.kappa_phi, self.g1, self.phi0)


def damped_cosine(t, A, B, kappa1, kappa_phi, g1, phi0):
    return A * np.exp(-kappa1 * t) * (1 + np.exp(-kappa_phi * t) * np.cos(2 * TWO_PI * g1 * t + phi0)) + B


def fit_damped_cosine(times, values, max_nfev: int = 20000) -> DampedCosineFit:
    """Nonlinear least-squares fit of the exchange oscillation model.

    ``g1`` is returned in MHz (the oscillation runs at 2*g1), decay rates in
    1/us. Starting values: the oscillation frequency from the FFT peak,
    ``A`` and ``B`` from the sample mean and the late-time mean.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 8:
        raise SolverError("need at least 8 samples to fit the exchange model")
    if np.ptp(y) < 1e-9:
        raise SolverError("flat input: nothing to fit")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("times must be strictly increasing")

    # FFT on a uniform resampling
    tu = np.linspace(t[0], t[-1], max(t.size, 64))
    yu = np.interp(tu, t, y)
    spec = np.abs(np.fft.rfft(yu - yu.mean()))
    freqs = np.fft.rfftfreq(tu.size, tu[1] - tu[0])
    spec[0] = 0
    k = int(np.argmax(spec))
    if 0 < k < spec.size - 1:
        # parabolic refinement of the peak bin
        a, b, c = np.log(spec[k - 1] + 1e-300), np.log(spec[k] + 1e-300), np.log(spec[k + 1] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        f_osc = (k + shift) * (freqs[1] - freqs[0])
    else:
        f_osc = freqs[k]
    span = t[-1] - t[0]
    if f_osc * span < 1.0:
        raise SolverError("samples span less than one oscillation")
    g1_0 = f_osc / 2

    tail = y[-max(2, y.size // 8):]
    B0 = float(np.min(y)) if np.ptp(tail) > 0.5 * np.ptp(y) else float(np.mean(tail)) - 0.5 * float(np.ptp(tail))
    A0 = max(float(np.mean(y)) - B0, 1e-3)
    # phase from projection onto the oscillation at the start
    w = 2 * TWO_PI * g1_0
    c = np.sum((y - y.mean()) * np.cos(w * (t - t[0])))
    s = np.sum((y - y.mean()) * np.sin(w * (t - t[0])))
    phi0_0 = float(np.arctan2(-s, c) - w * t[0])
    kap0 = 1.0 / max(span, 1e-9)

    p0 = [A0, B0, kap0 * 0.1, kap0 * 0.1, g1_0, phi0_0]
    lower = [0.0, -np.inf, 0.0, 0.0, 0.0, -np.inf]
    upper = [np.inf, np.inf, np.inf, np.inf, np.inf, np.inf]
    try:
        popt, pcov = curve_fit(
            damped_cosine, t, y, p0=p0, bounds=(lower, upper), max_nfev=max_nfev,
            xtol=1e-14, ftol=1e-14, gtol=1e-14,
        )
    except RuntimeError as exc:
        raise SolverError(f"damped-cosine fit did not converge: {exc}") from exc
    A, B, k1, kphi, g1, phi0 = (float(v) for v in popt)
    phi0 = float(np.angle(np.exp(1j * phi0)))
    return DampedCosineFit(A, B, k1, kphi, g1, phi0, pcov)
