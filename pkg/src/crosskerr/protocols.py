"""Simulated experiments: exchange chevrons, Ramsey cross-Kerr, CPHASE gates,
SNAP unitaries, the bosonic parity check and the gate error budget.

Times are in us and frequencies in MHz throughout.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit, minimize

from .dynamics import (
    DampedCosineFit,
    LindbladModel,
    TimeDependentHamiltonian,
    collapse_set,
    evolve_lindblad,
    fit_damped_cosine,
)
from .effective import SwtInputs, engineered_crosskerr, gate_time
from .hilbert import (
    DensityMatrix,
    ModeSystem,
    displacement_matrix,
    fock,
    number_operator,
    pauli_bars,
    projector,
    state_fidelity,
    uhlmann_fidelity,
)
from .models import (
    DeviceParams,
    build_effective_crosskerr,
    build_exchange_frame_hamiltonian,
    build_exchange_hamiltonian,
    ramp_envelope,
    three_mode_system,
)

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


class ProtocolError(RuntimeError):
    pass


# ------------------------------------------------------------------- SNAP


@dataclass(frozen=True)
class SnapSpec:
    """D(alpha2) S(thetas) D(alpha1); thetas[n] is the phase on Fock n."""

    alpha1: complex
    thetas: tuple[float, ...]
    alpha2: complex


SNAP_TABLE = {
    "fock1": SnapSpec(1.14, (math.pi, 0.0), -0.58),
    "plus": SnapSpec(0.56, (math.pi, 0.0), -0.24),
    "parity-map": SnapSpec(-0.35, (math.pi, math.pi), 1.04),
}


def snap_unitary(spec: SnapSpec, dim: int, system: ModeSystem | None = None, label: str | None = None) -> np.ndarray:
    """SNAP as an instantaneous unitary on a ``dim``-level mode (embedded if ``system`` given)."""
    if len(spec.thetas) > dim:
        raise ValueError("more SNAP phases than mode levels")
    phases = np.zeros(dim)
    phases[: len(spec.thetas)] = spec.thetas
    u = displacement_matrix(dim, spec.alpha2) @ np.diag(np.exp(1j * phases)) @ displacement_matrix(dim, spec.alpha1)
    if system is not None:
        return system.embed(label, u)
    return u


# ---------------------------------------------------------------- chevron


def exchange_system(dim_a: int = 2, dim_b: int = 2, dim_c: int = 2) -> ModeSystem:
    return three_mode_system(dim_a, dim_b, dim_c)


def _exchange_model(g1, delta, system, coherences, envelope=None, dephasing="coherence"):
    h = build_exchange_hamiltonian(g1, delta, system)
    if envelope is not None:
        terms = h.terms if h.terms else ((h.static, lambda t: 1.0),)
        h = TimeDependentHamiltonian(
            np.zeros_like(h.static),
            tuple((op, (lambda t, fn=fn: envelope(t) * fn(t))) for op, fn in terms),
        )
    ops = tuple(collapse_set(system, coherences, dephasing)) if coherences else ()
    return LindbladModel(h, ops)


@dataclass
class ChevronMaps:
    deltas: np.ndarray
    times: np.ndarray
    p_alice_vac: np.ndarray
    p_bob_vac: np.ndarray
    p_coupler_e: np.ndarray

    def rows(self):
        for i, d in enumerate(self.deltas):
            for j, t in enumerate(self.times):
                yield {
                    "delta_MHz": d,
                    "t_us": t,
                    "p_alice_vac": self.p_alice_vac[i, j],
                    "p_bob_vac": self.p_bob_vac[i, j],
                    "p_coupler_e": self.p_coupler_e[i, j],
                }


def chevron_scan(
    g1: float,
    deltas,
    times,
    coherences: dict | None = None,
    system: ModeSystem | None = None,
    dephasing: str = "coherence",
) -> ChevronMaps:
    """Populations after exchange under the rotating-frame exchange model, from |1,0,g>."""
    system = system or exchange_system()
    deltas = np.asarray(deltas, dtype=float)
    times = np.asarray(times, dtype=float)
    psi0 = system.basis_state(a=1, b=0, c=0)
    e_ops = {
        "a0": projector(system, "a", 0),
        "b0": projector(system, "b", 0),
        "ce": projector(system, "c", 1),
    }
    maps = {k: np.empty((deltas.size, times.size)) for k in e_ops}
    for i, d in enumerate(deltas):
        model = _exchange_model(g1, d, system, coherences, dephasing=dephasing)
        tr = evolve_lindblad(model, psi0, times, e_ops, max_step=_max_step(g1, d))
        for k in e_ops:
            maps[k][i] = tr.expectations[k]
    return ChevronMaps(deltas, times, maps["a0"], maps["b0"], maps["ce"])


def _max_step(g1, delta):
    return 0.05 / max(abs(g1), abs(delta), 1e-3)


def exchange_calibration(
    g1: float, coherences: dict | None = None, t_max: float = 5.0, points: int = 401, dephasing="coherence"
) -> tuple[DampedCosineFit, ChevronMaps]:
    """Resonant exchange and a damped-cosine fit of the coupler population."""
    times = np.linspace(0.0, t_max, points)
    maps = chevron_scan(g1, [0.0], times, coherences, dephasing=dephasing)
    return fit_damped_cosine(times, maps.p_coupler_e[0]), maps


def coupler_population_peak(
    g1: float,
    delta: float,
    ramp: float | None = None,
    hold: float | None = None,
    coherences: dict | None = None,
    points: int = 2001,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest coupler excitation during a ramped exchange drive from |1,0,g>.

    The exchange is switched on with cosine-squared ramps so that the state
    follows the dressed eigenstate; defaults use a ramp of 10/|delta| and a
    hold of the same length.
    """
    scale = max(abs(delta), abs(g1))
    ramp = 10.0 / scale if ramp is None else ramp
    hold = ramp if hold is None else hold
    duration = 2 * ramp + hold
    system = exchange_system()
    env = lambda t: ramp_envelope(t, duration, ramp)  # noqa: E731
    model = _exchange_model(g1, delta, system, coherences, envelope=env)
    times = np.linspace(0.0, duration, points)
    tr = evolve_lindblad(
        model, system.basis_state(a=1, b=0, c=0), times, {"ce": projector(system, "c", 1)}, max_step=_max_step(g1, delta)
    )
    pe = tr.expectations["ce"]
    return float(pe.max()), times, pe


# ----------------------------------------------------------------- Ramsey


@dataclass
class RamseyResult:
    g_ab: float
    slope_0: float
    slope_1: float
    times: np.ndarray
    phases_0: np.ndarray
    phases_1: np.ndarray


def _alice_phase(rho: np.ndarray, system: ModeSystem) -> float:
    red = system.ptrace(rho, ["a"])
    return float(np.angle(red[0, 1]))


def ramsey_crosskerr(
    hamiltonian,
    system: ModeSystem,
    durations,
    collapse=(),
    min_phase: float = 0.1,
) -> RamseyResult:
    """Cross-Kerr from the Bob-conditioned precession of Alice's 0-1 coherence.

    Alice starts in (|0> + |1>)/sqrt2 and Bob in |0> or |1>; other modes in
    their ground state. The phase of <0|rho_A|1> is unwrapped and fitted
    with a line; g_ab is the difference of the two slopes over 2 pi. The
    individual slopes are the frame frequencies to track.
    """
    times = np.asarray(durations, dtype=float)
    if times[0] != 0:
        times = np.concatenate([[0.0], times])
    model = LindbladModel(hamiltonian, tuple(collapse))
    plus = (fock(system.dim("a"), 0) + fock(system.dim("a"), 1)) / np.sqrt(2)
    slopes, series = [], []
    for nb in (0, 1):
        kets = {"a": plus, "b": fock(system.dim("b"), nb)}
        for lab in system.labels:
            kets.setdefault(lab, fock(system.dim(lab), 0))
        psi = system.product_state(kets)
        tr = evolve_lindblad(model, psi, times, store_states=True)
        ph = np.unwrap([_alice_phase(r, system) for r in tr.states])
        slopes.append(np.polyfit(times, ph, 1)[0] / TWO_PI)
        series.append(ph)
    diff = series[1] - series[0]
    if abs(diff[-1] - diff[0]) < min_phase:
        raise ProtocolError(f"differential phase {abs(diff[-1] - diff[0]):.3g} rad below {min_phase} rad")
    return RamseyResult(slopes[1] - slopes[0], slopes[0], slopes[1], times, series[0], series[1])


def ramsey_crosskerr_floquet(model, epsilon_f: float, frequency: float, periods, min_phase: float = 0.1) -> RamseyResult:
    """Ramsey cross-Kerr of the driven cosine model at stroboscopic times.

    ``periods`` lists integer multiples of the drive period. States start
    as bare products (sudden drive switch-on) and are propagated with
    powers of the one-period propagator.
    """
    from .dynamics import period_propagator

    system = model.system
    u = period_propagator(model.periodic(epsilon_f, frequency), tol=1e-4, min_steps=32)
    w, v = np.linalg.eig(u)
    vinv = np.linalg.inv(v)
    periods = np.asarray(periods, dtype=int)
    times = periods / frequency
    plus = (fock(system.dim("a"), 0) + fock(system.dim("a"), 1)) / np.sqrt(2)
    series, slopes = [], []
    for nb in (0, 1):
        psi = system.product_state({"a": plus, "b": fock(system.dim("b"), nb), "c": fock(system.dim("c"), 0)})
        c0 = vinv @ psi
        ph = []
        for k in periods:
            st = v @ (w**k * c0)
            ph.append(_alice_phase(np.outer(st, st.conj()), system))
        series.append(np.array(ph))
    diff = np.unwrap(series[1] - series[0])
    if abs(diff[-1] - diff[0]) < min_phase:
        raise ProtocolError(f"differential phase {abs(diff[-1] - diff[0]):.3g} rad below {min_phase} rad")
    g = np.polyfit(times, diff, 1)[0] / TWO_PI
    return RamseyResult(g, float("nan"), float("nan"), times, series[0], series[1])


# ------------------------------------------------------------------ gates


def two_mode_system(dim: int = 3) -> ModeSystem:
    return ModeSystem((("a", dim), ("b", dim)))


def liouvillian(h: np.ndarray, collapse=()) -> np.ndarray:
    """Row-major vectorized generator: vec(d rho/dt) = L vec(rho)."""
    dim = h.shape[0]
    eye = np.eye(dim)
    out = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in collapse:
        if rate <= 0:
            continue
        lk = np.sqrt(rate) * op
        ld = lk.conj().T @ lk
        out += np.kron(lk, lk.conj()) - 0.5 * np.kron(ld, eye) - 0.5 * np.kron(eye, ld.T)
    return out


def gate_channel(h: np.ndarray, duration: float, collapse=()) -> np.ndarray:
    return expm(liouvillian(h, collapse) * duration)


def apply_channel(channel: np.ndarray, rho: np.ndarray) -> np.ndarray:
    dim = rho.shape[0]
    out = (channel @ rho.reshape(-1)).reshape(dim, dim)
    return (out + out.conj().T) / 2


def cphase_gate(
    rho0,
    g_ab: float,
    target_phase: float = math.pi,
    n_a: int = 1,
    n_b: int = 1,
    coherences: dict | None = None,
    dephasing: str = "coherence",
) -> DensityMatrix:
    """Evolve under 2 pi g_ab n_a n_b for the time giving ``target_phase`` on |n_a, n_b>."""
    rho = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(two_mode_system(int(round(np.sqrt(len(rho0))))), rho0)
    system = rho.system
    t = gate_time(g_ab, target_phase, n_a, n_b)
    h = build_effective_crosskerr(g_ab, system)
    collapse = collapse_set(system, coherences, dephasing) if coherences else ()
    return DensityMatrix(system, apply_channel(gate_channel(h, t, collapse), rho.matrix))


def plus_state(dim: int, codewords=(0, 1)) -> np.ndarray:
    return (fock(dim, codewords[0]) + fock(dim, codewords[1])) / np.sqrt(2)


def bell_target(dim: int = 3) -> np.ndarray:
    """(|00> + |01> + |10> - |11>)/2."""
    s = two_mode_system(dim)
    out = np.zeros(dim * dim, dtype=complex)
    for (i, j), sign in {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}.items():
        out[s.index_of((i, j))] = sign / 2
    return out


@dataclass
class BellResult:
    fidelity: float
    bars: dict
    rho: DensityMatrix


def bell_state(g_ab: float, coherences: dict | None = None, dim: int = 3, dephasing="coherence") -> BellResult:
    s = two_mode_system(dim)
    psi = np.kron(plus_state(dim), plus_state(dim))
    out = cphase_gate(DensityMatrix.from_ket(s, psi), g_ab, math.pi, coherences=coherences, dephasing=dephasing)
    return BellResult(state_fidelity(out.matrix, bell_target(dim)), pauli_bars(out), out)


@dataclass
class RepeatedGates:
    n_gates: np.ndarray
    fidelities: np.ndarray
    per_gate_infidelity: float
    intercept: float


def repeated_gate_fidelity(
    psi0: np.ndarray,
    system: ModeSystem,
    g_ab: float,
    n_gates: int,
    coherences: dict | None = None,
    target_phase: float = math.pi,
    drive_on: bool = True,
    dephasing: str = "coherence",
    gate_duration: float | None = None,
) -> RepeatedGates:
    """Fidelity to the ideal gate orbit after 0..n_gates applications.

    With ``drive_on=False`` the cross-Kerr is off and the state only waits
    for the gate duration (idle control). The per-gate infidelity is minus
    the slope of a line through all points, including N = 0.
    """
    if n_gates < 1:
        raise ValueError("n_gates must be >= 1")
    t = gate_duration or gate_time(g_ab, target_phase)
    g_eff = target_phase / (TWO_PI * t)
    h_ideal = build_effective_crosskerr(g_eff, system)
    h = h_ideal if drive_on else np.zeros_like(h_ideal)
    collapse = collapse_set(system, coherences, dephasing) if coherences else ()
    chan = gate_channel(h, t, collapse)
    u = expm(-1j * h * t)
    rho = np.outer(psi0, psi0.conj())
    target = np.asarray(psi0, dtype=complex)
    fids = [state_fidelity(rho, target)]
    for _ in range(n_gates):
        rho = apply_channel(chan, rho)
        target = u @ target
        fids.append(state_fidelity(rho, target))
    n = np.arange(n_gates + 1)
    slope, icpt = np.polyfit(n, fids, 1)
    return RepeatedGates(n, np.array(fids), float(-slope), float(icpt))


# ---------------------------------------------------------------- parity


def p_odd_analytic(t, T1: float):
    """Odd-parity population 2x(1 - x), x = exp(-t/T1), of a decaying |2>."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    x = np.exp(-t / T1)
    return 2 * x * (1 - x)


def damping_populations(T1: float, times, dim: int = 4) -> np.ndarray:
    """Master-equation populations p0, p1, p2 of an initial |2> under loss."""
    s = ModeSystem((("a", dim),))
    model = LindbladModel(np.zeros((dim, dim)), tuple(collapse_set(s, {"a": (T1, None)})))
    e_ops = {f"p{k}": projector(s, "a", k) for k in range(3)}
    tr = evolve_lindblad(model, s.basis_state(a=2), times, e_ops)
    return np.vstack([tr.expectations[f"p{k}"] for k in range(3)])


@dataclass
class ParityCheckResult:
    delays: np.ndarray
    p_odd: np.ndarray
    p2: np.ndarray
    p2_post: np.ndarray
    p_keep: np.ndarray
    t1_unconditioned: float
    t1_post_selected: float

    def rows(self):
        for i, t in enumerate(self.delays):
            yield {
                "delay_us": t,
                "p_e": self.p_odd[i],
                "p2": self.p2[i],
                "p2_post": self.p2_post[i],
                "p_keep": self.p_keep[i],
            }


def c2pi_gate(system: ModeSystem) -> np.ndarray:
    """exp(-i (pi/2) n_a n_b): pi on |1>|2>, 2 pi on |2>|2>, so odd Alice flips Bob's 0/2 phase."""
    nn = np.real(np.diag(number_operator(system, "a") @ number_operator(system, "b")))
    return np.diag(np.exp(-0.5j * math.pi * nn))


def _fit_lifetime(t, p):
    """T in p = A exp(-2 t / T): the single-photon lifetime implied by a |2> decay."""
    p = np.asarray(p, dtype=float)
    if p.size < 3:
        return float("nan")
    (a, T), _ = curve_fit(lambda t, a, T: a * np.exp(-2 * t / T), t, p, p0=(p[0], max(t[-1], 1.0)), maxfev=20000)
    return float(T)


def parity_check_protocol(
    delays,
    T1: float = 750.0,
    snap: SnapSpec | None = None,
    confusion: np.ndarray | None = None,
    dim_a: int = 3,
    dim_b: int = 5,
) -> ParityCheckResult:
    """Bosonic parity check of Alice via the C_2pi gate and Bob's superposition.

    Alice starts in |2> and decays for each delay; Bob holds
    (|0> + |2>)/sqrt2. C_2pi imparts pi per Alice photon on Bob's |2>, so an
    odd Alice flips Bob to (|0> - |2>)/sqrt2. Readout reports ``e`` for
    that state: ideally as a projection, or through ``snap`` followed by a
    vacuum-selective measurement. ``confusion`` (rows g, e) adds readout
    error. Post-selection keeps runs that read ``g``.
    """
    delays = np.asarray(delays, dtype=float)
    s = ModeSystem((("a", dim_a), ("b", dim_b)))
    pops = damping_populations(T1, delays, max(dim_a, 3))
    gate = c2pi_gate(s)
    bob0 = (fock(dim_b, 0) + fock(dim_b, 2)) / np.sqrt(2)
    minus = (fock(dim_b, 0) - fock(dim_b, 2)) / np.sqrt(2)
    if snap is None:
        e_b = np.outer(minus, minus.conj())
    else:
        u = snap_unitary(snap, dim_b)
        vac = np.zeros((dim_b, dim_b))
        vac[0, 0] = 1
        e_b = u.conj().T @ vac @ u
    if confusion is not None:
        c = np.asarray(confusion, dtype=float)
        e_b = c[1, 1] * e_b + c[0, 1] * (np.eye(dim_b) - e_b)
    e_op = s.embed("b", e_b)
    g_op = np.eye(e_op.shape[0]) - e_op
    two = s.embed("a", np.diag(np.eye(dim_a)[2]))
    p_e, p2, p2p, keep = [], [], [], []
    for k in range(delays.size):
        rho_a = np.diag(np.concatenate([pops[:, k], np.zeros(dim_a - 3)]))
        rho = gate @ np.kron(rho_a, np.outer(bob0, bob0.conj())) @ gate.conj().T
        pe = float(np.real(np.trace(e_op @ rho)))
        pg = 1 - pe
        p_e.append(pe)
        p2.append(float(np.real(np.trace(two @ rho))))
        p2p.append(float(np.real(np.trace(two @ g_op @ rho))) / pg)
        keep.append(pg)
    return ParityCheckResult(
        delays, np.array(p_e), np.array(p2), np.array(p2p), np.array(keep), _fit_lifetime(delays, p2), _fit_lifetime(delays, p2p)
    )


# ----------------------------------------------------------- error budget


@dataclass
class ErrorBudget:
    """Infidelity increments of passes that add one error source at a time."""

    state: str
    contributions: dict[str, float]
    fidelities: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.contributions.values()))


INITIAL_STATES = {
    "++": ((0, 1), (0, 1)),
    "+0": ((0, 1), (0,)),
    "1+": ((1,), (0, 1)),
}


BUDGET_PASSES = ("ideal", "spam", "coupler", "alice", "bob")


def _initial_ket(name: str, dim: int) -> np.ndarray:
    kets = []
    for levels in INITIAL_STATES[name]:
        v = sum(fock(dim, n) for n in levels)
        kets.append(v / np.linalg.norm(v))
    return np.kron(kets[0], kets[1])


@dataclass
class BudgetConfig:
    g_ab: float = 0.09535
    delta: float = -6.0
    coupler_dims: tuple[int, int, int] = (2, 3, 2)
    ramp: float = 0.2
    prep_time: float = 2.0
    confusion: tuple | None = None
    plan_count: int = 25
    plan_seed: int = 0
    dephasing: str = "coherence"
    include_spam: bool = True
    include_coupler: bool = True
    include_alice: bool = True
    include_bob: bool = True


def _local_phase_fidelity(rho: np.ndarray, target: np.ndarray, system: ModeSystem) -> float:
    """Fidelity after the best single-mode Z-frame corrections."""
    na = np.diag(number_operator(system, "a")).real
    nb = np.diag(number_operator(system, "b")).real

    def infid(x):
        ph = np.exp(1j * (x[0] * na + x[1] * nb))
        return 1 - state_fidelity((ph[:, None] * rho) * ph.conj()[None, :], target)

    best = min((minimize(infid, x0, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12}) for x0 in ([0, 0], [1, -1])), key=lambda r: r.fun)
    return 1 - float(best.fun)


def _coupler_gate(params: DeviceParams, rho_ab: np.ndarray, cfg: BudgetConfig) -> np.ndarray:
    """CZ through the ramped exchange in the exchange frame; returns the cavity state.

    g1 is chosen so the second-order cross-Kerr equals ``cfg.g_ab`` and the
    flat top is set so the accumulated conditional phase is pi.
    """
    s = three_mode_system(*cfg.coupler_dims)
    g1 = swt_g1_for(params, -abs(cfg.g_ab), cfg.delta)
    h0 = build_exchange_frame_hamiltonian(params, 0.0, cfg.delta, s)
    v = build_exchange_frame_hamiltonian(params, g1, cfg.delta, s) - h0

    def propagate(hold):
        duration = 2 * cfg.ramp + hold
        env = lambda t: ramp_envelope(t, duration, cfg.ramp)  # noqa: E731
        ham = TimeDependentHamiltonian(h0, ((v, env),))
        steps = max(200, int(duration / 0.002))
        ts = np.linspace(0, duration, steps + 1)
        u = np.eye(h0.shape[0], dtype=complex)
        for t0, t1 in zip(ts[:-1], ts[1:]):
            u = expm(-1j * ham(0.5 * (t0 + t1)) * (t1 - t0)) @ u
        return u

    def cond_phase(u):
        e = {lab: u[s.index_of(lab), s.index_of(lab)] for lab in [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)]}
        return np.angle(e[(1, 1, 0)] * e[(0, 0, 0)] / (e[(1, 0, 0)] * e[(0, 1, 0)]))

    nominal = 1 / (2 * abs(cfg.g_ab))
    hold = max(nominal - cfg.ramp, 0.0)
    for _ in range(6):
        u = propagate(hold)
        ph = cond_phase(u)
        err = (abs(ph) - math.pi)
        if abs(err) < 1e-4:
            break
        hold -= err / (TWO_PI * abs(cfg.g_ab))
    u = propagate(hold)
    dim = int(round(np.sqrt(rho_ab.shape[0])))
    emb = np.zeros((s.total_dim, rho_ab.shape[0]), dtype=complex)
    ab = two_mode_system(dim)
    for i in range(rho_ab.shape[0]):
        la, lb = ab.levels_of(i)
        if la < cfg.coupler_dims[0] and lb < cfg.coupler_dims[1]:
            emb[s.index_of((la, lb, 0)), i] = 1
    full = u @ emb @ rho_ab @ emb.conj().T @ u.conj().T
    red = s.ptrace(full, ["a", "b"])
    out = np.zeros_like(rho_ab)
    sub = ModeSystem((("a", cfg.coupler_dims[0]), ("b", cfg.coupler_dims[1])))
    for i in range(red.shape[0]):
        for j in range(red.shape[1]):
            li, lj = sub.levels_of(i), sub.levels_of(j)
            if max(li) < dim and max(lj) < dim:
                out[ab.index_of(li), ab.index_of(lj)] += red[i, j]
    return out


def _spam(rho: np.ndarray, cfg: BudgetConfig, idle: dict, dim: int) -> np.ndarray:
    from .tomography import (
        CONFUSION_ALICE,
        CONFUSION_BOB,
        apply_confusion,
        linear_inversion,
        optimize_displacements,
        outcome_probabilities,
        project_physical,
    )

    s = two_mode_system(dim)
    chan = gate_channel(np.zeros_like(rho), cfg.prep_time, collapse_set(s, idle, cfg.dephasing))
    rho = apply_channel(chan, rho)
    conf = cfg.confusion or (CONFUSION_ALICE, CONFUSION_BOB)
    # readout errors enter the reconstruction uncorrected
    plan = optimize_displacements(2, cfg.plan_count, cfg.plan_seed)
    small = rho.reshape(dim, dim, dim, dim)[:2, :2, :2, :2].reshape(4, 4)
    probs = apply_confusion(outcome_probabilities(small, plan), conf[0], conf[1])
    rec = project_physical(linear_inversion(probs, plan))
    out = np.zeros_like(rho)
    idx = [s.index_of((i, j)) for i in range(2) for j in range(2)]
    out[np.ix_(idx, idx)] = rec
    return out


def error_budget(params: DeviceParams, states=("++", "+0", "1+"), config: BudgetConfig | None = None) -> list[ErrorBudget]:
    """Single-CZ infidelity split into SPAM, coupler population and cavity decoherence.

    Passes are cumulative: ideal gate, then SPAM (idle decay during a 2 us
    preparation plus uncorrected readout confusion in the reconstruction),
    then the exchange-frame gate with coupler dynamics, then Alice and
    finally Bob decoherence during the gate. Each contribution is the
    infidelity increment of its pass. Every source acts on the ideal
    preparation, so the increments add without cross terms between
    preparation errors and gate errors.
    """
    cfg = config or BudgetConfig()
    dim = 2
    s = two_mode_system(dim)
    t_gate = gate_time(cfg.g_ab, math.pi)
    h = build_effective_crosskerr(cfg.g_ab, s)
    u = expm(-1j * h * t_gate)
    idle = params.coherence("idle")
    driven = params.coherence("driven")
    out = []
    for name in states:
        psi = _initial_ket(name, dim)
        target = u @ psi
        rho0 = np.outer(psi, psi.conj())
        ideal = apply_channel(gate_channel(h, t_gate), rho0)
        fids = {"ideal": state_fidelity(ideal, target)}
        spam_loss = 0.0
        if cfg.include_spam:
            spam_loss = 1.0 - state_fidelity(apply_channel(gate_channel(h, t_gate), _spam(rho0, cfg, idle, dim)), target)
        coupler_loss = 0.0
        if cfg.include_coupler:
            coupler_loss = max(1.0 - _local_phase_fidelity(_coupler_gate(params, rho0, cfg), target, s), 0.0)
        fids["spam"] = fids["ideal"] - spam_loss
        fids["coupler"] = fids["spam"] - coupler_loss
        coh = {}
        for mode, key in (("a", "alice"), ("b", "bob")):
            if getattr(cfg, f"include_{key}"):
                coh[mode] = driven[mode]
            chan = gate_channel(h, t_gate, collapse_set(s, coh, cfg.dephasing))
            fids[key] = state_fidelity(apply_channel(chan, rho0), target) - spam_loss - coupler_loss
        contrib = {"ideal": 1.0 - fids["ideal"]}
        for prev, k in zip(BUDGET_PASSES[:-1], BUDGET_PASSES[1:]):
            contrib[k] = fids[prev] - fids[k]
        out.append(ErrorBudget(name, contrib, fids))
    return out


def swt_g1_for(params: DeviceParams, g_ab: float, delta: float) -> float:
    """g1 whose second-order cross-Kerr at ``delta`` equals ``g_ab`` (same sign convention)."""
    s = SwtInputs.from_params(params, 1.0, delta)
    unit = engineered_crosskerr(s) + params.K_ab
    val = (g_ab + params.K_ab) / unit
    if val < 0:
        raise ProtocolError("requested cross-Kerr has the wrong sign for this detuning")
    return math.sqrt(val)
