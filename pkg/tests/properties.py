"""Module invariants as named checks.

Each check returns ``(passed, detail)``. The per-module test files run them
individually and the acceptance suite runs them all.
"""
from __future__ import annotations

import math
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from crosskerr import dynamics, effective, floquet, hilbert, models, protocols, tomography

CHECKS = {}
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def check(module):
    def register(fn):
        CHECKS[f"{module}:{fn.__name__}"] = fn
        return fn

    return register


def _random_rho(dim, rng, rank=None):
    return tomography.random_density_matrix(dim, rng, rank)


# ------------------------------------------------------------------ hilbert


@check("hilbert")
def number_diagonal():
    off, diag = 0.0, 0.0
    for dim in (2, 5, 12):
        a = hilbert.destroy(dim)
        n = a.conj().T @ a
        off = max(off, float(np.max(np.abs(n - np.diag(np.diag(n))))))
        # sqrt(n)^2 is exact up to one rounding of the square root
        diag = max(diag, float(np.max(np.abs(np.diag(n) - np.arange(dim)) / np.maximum(np.arange(dim), 1))))
    return off == 0.0 and diag <= 4 * np.finfo(float).eps, f"off-diagonal {off:g}, diagonal relative error {diag:.1e}"


@check("hilbert")
def displacement_unitarity():
    worst = 0.0
    for mag in (0.5, 1.0, 2.0):
        dim = int(math.ceil(4 * mag**2 + 10))
        for ph in (0.0, 1.1, 2.7):
            d = hilbert.displacement_matrix(dim, mag * np.exp(1j * ph))
            worst = max(worst, float(np.max(np.abs(d @ d.conj().T - np.eye(dim)))))
    return worst < 1e-9, f"max |D D^dag - I| = {worst:.2e}"


@check("hilbert")
def displacement_round_trip():
    worst = 0.0
    for alpha in (0.3, 1.2 - 0.4j, -1.5j):
        d = hilbert.displacement_matrix(20, alpha) @ hilbert.displacement_matrix(20, -alpha)
        worst = max(worst, float(np.max(np.abs(d - np.eye(20)))))
    return worst < 1e-9, f"max |D(a) D(-a) - I| = {worst:.2e}"


@check("hilbert")
def wigner_normalization():
    rng = np.random.default_rng(3)
    s = hilbert.ModeSystem.of(a=4)
    grid = hilbert.PhaseSpaceGrid.square(4.0, 61)
    worst = 0.0
    for _ in range(3):
        rho = hilbert.DensityMatrix(s, _random_rho(4, rng))
        worst = max(worst, abs(hilbert.wigner(rho, "a", grid).integrate() - rho.trace))
    return worst < 2e-3, f"max |int W - tr rho| = {worst:.2e}"


@check("hilbert")
def fidelity_bounds():
    rng = np.random.default_rng(5)
    ok, worst_self = True, 0.0
    for _ in range(20):
        r, s = _random_rho(6, rng), _random_rho(6, rng)
        f = hilbert.uhlmann_fidelity(r, s)
        ok &= 0.0 <= f <= 1.0 and f < 1 - 1e-8
        worst_self = max(worst_self, abs(1 - hilbert.uhlmann_fidelity(r, r)))
    return ok and worst_self < 1e-8, f"F in [0,1], distinct pairs < 1, max |1 - F(rho, rho)| = {worst_self:.1e}"


@check("hilbert")
def pauli_bar_ranges():
    rng = np.random.default_rng(7)
    worst_ii, ok = 0.0, True
    for enc in ("0/1", "0/2"):
        cw, dim, _ = tomography.ENCODINGS[enc]
        s = hilbert.ModeSystem.of(a=dim, b=dim)
        for _ in range(5):
            pure = tomography.random_code_state(enc, rng)
            leak = _random_rho(dim * dim, rng)
            rho = hilbert.DensityMatrix(s, 0.8 * pure + 0.2 * leak)
            bars = hilbert.pauli_bars(rho, cw)
            ok &= all(-1 - 1e-12 <= bars[k] <= 1 + 1e-12 for k in hilbert.PAULI_LABELS)
            code = [s.index_of((i, j)) for i in cw for j in cw]
            pop = float(np.real(np.trace(rho.matrix[np.ix_(code, code)])))
            worst_ii = max(worst_ii, abs(bars["II"] - pop))
    return ok and worst_ii < 1e-12, f"bars in [-1, 1], max |II - code population| = {worst_ii:.1e}"


# ------------------------------------------------------------------- models


@check("models")
def builders_hermitian():
    p = models.preset("fig3-bias")
    s = models.three_mode_system(3, 3, 3)
    mats = [
        models.build_dispersive_hamiltonian(p, s),
        models.build_exchange_frame_hamiltonian(p, 0.3, -5.0, s),
        models.build_effective_crosskerr(0.1, s),
    ]
    ex = models.build_exchange_hamiltonian(0.3, -5.0, s)
    full = models.build_full_squid_hamiltonian(p, dims=(3, 3, 8)).hamiltonian(40.0, 5370.0)
    for t in np.linspace(0, 0.37, 7):
        mats += [ex(t), full(t)]
    worst = max(float(np.max(np.abs(h - h.conj().T)) / max(np.max(np.abs(h)), 1e-300)) for h in mats)
    return worst < 1e-10, f"max relative anti-Hermitian part {worst:.1e}"


@check("models")
def dispersive_bookkeeping():
    p = models.preset("fig3-bias")
    s = models.three_mode_system(3, 3, 3)
    e = np.real(np.diag(models.build_dispersive_hamiltonian(p, s))) / (2 * np.pi)
    E = lambda *n: e[s.index_of(n)]  # noqa: E731
    got = {
        "chi_a": -(E(1, 0, 1) - E(1, 0, 0) - E(0, 0, 1) + E(0, 0, 0)),
        "chi_b": -(E(0, 1, 1) - E(0, 1, 0) - E(0, 0, 1) + E(0, 0, 0)),
        "K_ab": -(E(1, 1, 0) - E(1, 0, 0) - E(0, 1, 0) + E(0, 0, 0)),
        "K_a": -(E(2, 0, 0) - 2 * E(1, 0, 0) + E(0, 0, 0)),
        "K_b": -(E(0, 2, 0) - 2 * E(0, 1, 0) + E(0, 0, 0)),
        "alpha_c": -(E(0, 0, 2) - 2 * E(0, 0, 1) + E(0, 0, 0)),
    }
    worst = max(abs(v - getattr(p, k)) for k, v in got.items())
    return worst < 1e-9, f"max coefficient error {worst:.1e} MHz"


@check("models")
def static_crosskerr_scale():
    d = models.build_full_squid_hamiltonian(models.preset("fig3-bias")).dressed()
    k = abs(floquet.static_crosskerr(d)) * 1e3
    return 0.3 / 5 <= k <= 0.3 * 5, f"|K_ab| = {k:.3f} kHz (target 0.3 kHz within x5)"


# ----------------------------------------------------------------- dynamics


def _decay_run():
    s = models.three_mode_system(3, 3, 2)
    p = models.preset("fig3-bias")
    model = dynamics.LindbladModel(
        models.build_exchange_hamiltonian(1.024, 0.5, s), tuple(dynamics.collapse_set(s, p.coherence("driven")))
    )
    psi = (s.basis_state(a=1) + s.basis_state(a=2, b=1)) / np.sqrt(2)
    return dynamics.evolve_lindblad(model, psi, np.linspace(0, 3, 31), store_states=True, max_step=0.01)


@check("dynamics")
def trace_preservation():
    tr = _decay_run()
    worst = max(abs(np.real(np.trace(r)) - 1) for r in tr.states)
    return worst < 1e-8, f"max |tr rho - 1| = {worst:.1e}"


@check("dynamics")
def positivity():
    tr = _decay_run()
    worst = min(float(np.linalg.eigvalsh(r).min()) for r in tr.states)
    return worst >= -1e-7, f"min eigenvalue {worst:.1e}"


@check("dynamics")
def unitary_consistency():
    rng = np.random.default_rng(11)
    g = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    h = (g + g.conj().T) / 2
    rho0 = _random_rho(6, rng)
    times = np.linspace(0, 2.0, 5)
    tr = dynamics.evolve_lindblad(dynamics.LindbladModel(h), rho0, times, store_states=True, rtol=1e-10, atol=1e-12)
    worst = 0.0
    for t, r in zip(times, tr.states):
        u = expm(-1j * h * t)
        worst = max(worst, float(np.max(np.abs(r - u @ rho0 @ u.conj().T))))
    return worst < 1e-7, f"max deviation from exp(-iHt) rho exp(iHt): {worst:.1e}"


@check("dynamics")
def fit_round_trip():
    truth = dict(A=0.45, B=0.05, kappa1=0.02, kappa_phi=0.3, g1=1.024, phi0=math.pi)
    t = np.linspace(0, 5, 401)
    fit = dynamics.fit_damped_cosine(t, dynamics.damped_cosine(t, **truth))
    worst = max(abs(getattr(fit, k) - v) / max(abs(v), 1e-3) for k, v in truth.items() if k != "phi0")
    return worst < 1e-6, f"max relative parameter error {worst:.1e}"


# ---------------------------------------------------------------- effective


def _random_inputs(rng):
    return effective.SwtInputs(
        g1=rng.uniform(0.01, 0.5),
        delta=rng.choice([-1, 1]) * rng.uniform(2, 30),
        chi_b=rng.uniform(0.1, 3),
        K_a=rng.uniform(0, 0.01),
        K_b=rng.uniform(0, 0.01),
        K_ab=rng.uniform(0, 0.01),
        chi_a=rng.uniform(0.1, 3),
    )


@check("effective")
def eq4_limit():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(200):
        s = _random_inputs(rng).with_(K_b=0.0, K_ab=0.0)
        ref = (s.g1**2 / s.delta) * (s.delta - s.chi_b) / (s.delta + s.chi_b)
        worst = max(worst, abs(effective.engineered_crosskerr(s) - ref) / abs(ref))
    return worst < 1e-12, f"max relative difference {worst:.1e}"


@check("effective")
def two_routes_agree():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(200):
        s = _random_inputs(rng)
        route = effective.energy_shift(s, 1, 1) - effective.energy_shift(s, 1, 0) - effective.energy_shift(s, 0, 1) - s.K_ab
        worst = max(worst, abs(route - effective.engineered_crosskerr(s)) / abs(route))
    return worst < 1e-12, f"max relative difference {worst:.1e}"


@check("effective")
def weak_coupling_oracle():
    p = models.preset("fig3-bias")
    s = models.three_mode_system(3, 3, 3)
    worst = 0.0
    for delta in (-20.0, -8.0, 6.0, 15.0):
        g1 = 0.02 * abs(delta)
        e0 = np.real(np.diag(models.build_exchange_frame_hamiltonian(p, 0.0, delta, s))) / (2 * np.pi)
        w, v = np.linalg.eigh(models.build_exchange_frame_hamiltonian(p, g1, delta, s))
        w = w / (2 * np.pi)
        inputs = effective.SwtInputs.from_params(p, g1, delta)
        for na, nb in ((1, 0), (1, 1), (2, 0)):
            idx = s.index_of((na, nb, 0))
            k = int(np.argmax(np.abs(v[idx]) ** 2))
            shift = w[k] - e0[idx]
            worst = max(worst, abs(shift - effective.energy_shift(inputs, na, nb)) / abs(shift))
    return worst < 0.01, f"max relative deviation {worst:.1e}"


@check("effective")
def excitation_bound_shape():
    g1 = 0.5
    vals = [effective.max_coupler_excitation(g1, d) for d in np.linspace(0, 20, 41)]
    ok = all(0 < v <= 1 for v in vals) and all(b < a for a, b in zip(vals, vals[1:]))
    return ok, f"bound from {vals[0]:.3f} to {vals[-1]:.2e}, strictly decreasing"


# ------------------------------------------------------------------ floquet


@check("floquet")
def propagator_unitarity():
    p = models.preset("fig3-bias")
    m = models.build_full_squid_hamiltonian(p, dims=(3, 3, 12))
    u = dynamics.period_propagator(m.periodic(37.93, 5367.0), tol=1e-4, min_steps=32)
    dev = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
    mod = float(np.max(np.abs(np.abs(np.linalg.eigvals(u)) - 1)))
    return dev < 1e-8 and mod < 1e-8, f"max |U^dag U - I| = {dev:.1e}, max ||lambda| - 1| = {mod:.1e}"


@check("floquet")
def jump_detector():
    pts = [floquet.SweepPoint(d, 0.0, -1.0 / (d + 2.0), 1.0) for d in np.linspace(-20, -4, 9)]
    floquet._flag_jumps(pts)
    clean = all(not p.flags for p in pts)
    pts[4].g_ab *= -5
    floquet._flag_jumps(pts)
    return clean and pts[4].flags == "branch-jump", "smooth curve unflagged, injected jump flagged"


# --------------------------------------------------------------- tomography


@check("tomography")
def bme_always_physical():
    rng = np.random.default_rng(19)
    plan = tomography.random_plan(2, 25, seed=1)
    worst = {"hermitian_err": 0.0, "trace": 0.0, "min_eig": 0.0}
    for kind in ("random", "zeros", "ones", "spiky"):
        if kind == "random":
            freqs = rng.dirichlet(np.ones(4), size=plan.size)
        elif kind == "zeros":
            freqs = np.tile([0.0, 0.0, 0.0, 1.0], (plan.size, 1))
        elif kind == "ones":
            freqs = np.tile([1.0, 0.0, 0.0, 0.0], (plan.size, 1))
        else:
            freqs = np.zeros((plan.size, 4))
            freqs[np.arange(plan.size), rng.integers(0, 4, plan.size)] = 1.0
        post = tomography.bayesian_refine(tomography.linear_inversion(freqs, plan), 500 * plan.size, 128, 16, seed=3)
        rep = hilbert.physicality_report(post.rho_bme.matrix)
        worst["hermitian_err"] = max(worst["hermitian_err"], rep["hermitian_err"])
        worst["trace"] = max(worst["trace"], abs(rep["trace"] - 1))
        worst["min_eig"] = min(worst["min_eig"], rep["min_eig"])
    ok = worst["hermitian_err"] <= 1e-10 and worst["trace"] <= 1e-9 and worst["min_eig"] >= -1e-10
    return ok, f"worst hermitian {worst['hermitian_err']:.1e}, trace {worst['trace']:.1e}, min eig {worst['min_eig']:.1e}"


@check("tomography")
def infinite_statistics_round_trip():
    rng = np.random.default_rng(23)
    worst = 1.0
    for dim, count in ((2, 25), (3, 100)):
        plan = tomography.random_plan(dim, count, seed=dim)
        for _ in range(20):
            rho = _random_rho(dim * dim, rng)
            rec = tomography.reconstruct(tomography.outcome_probabilities(rho, plan), plan, truth=rho)
            worst = min(worst, rec.fidelity_ls)
    return worst >= 0.999, f"min fidelity {worst:.6f} over 40 random states"


@check("tomography")
def pcn_acceptance_and_variance():
    rng = np.random.default_rng(29)
    plan = tomography.random_plan(2, 25, seed=2)
    rho = _random_rho(4, rng)
    freqs = tomography.sample_counts(tomography.outcome_probabilities(rho, plan), 500, rng) / 500
    rho_ls = tomography.linear_inversion(freqs, plan)
    spread, accept = {}, []
    for r in (256, 1024):
        ests = []
        for seed in range(6):
            post = tomography.bayesian_refine(rho_ls, 500 * plan.size, r, 32, seed=seed)
            ests.append(post.rho_bme.matrix)
            accept.append(post.acceptance)
        mean = np.mean(ests, axis=0)
        spread[r] = float(np.mean([np.linalg.norm(e - mean) ** 2 for e in ests]))
    ok = spread[1024] < spread[256] and all(0.05 <= a <= 0.9 for a in accept)
    return ok, f"estimator variance {spread[256]:.2e} (R=256) > {spread[1024]:.2e} (R=1024), acceptance {min(accept):.2f}-{max(accept):.2f}"


@check("tomography")
def confusion_identity():
    rng = np.random.default_rng(31)
    p = rng.dirichlet(np.ones(4), size=10)
    ca, cb = tomography.CONFUSION_ALICE, tomography.CONFUSION_BOB
    fwd = tomography.apply_confusion(p, ca, cb)
    back = tomography.apply_confusion(fwd, ca, cb, inverse=True)
    one = tomography.apply_confusion(tomography.apply_confusion(p[:, :2] / p[:, :2].sum(1, keepdims=True), ca), ca, inverse=True)
    worst = max(float(np.max(np.abs(back - p))), float(np.max(np.abs(one - p[:, :2] / p[:, :2].sum(1, keepdims=True)))))
    return worst < 1e-12, f"max |C^-1 C p - p| = {worst:.1e}"


# ---------------------------------------------------------------- protocols


@check("protocols")
def binomial_damping():
    t = np.linspace(0, 2000, 21)
    pops = protocols.damping_populations(750.0, t)
    x = np.exp(-t / 750.0)
    ref = np.vstack([(1 - x) ** 2, 2 * x * (1 - x), x**2])
    worst = float(np.max(np.abs(pops - ref)))
    return worst < 1e-6, f"max population error {worst:.1e}"


@check("protocols")
def c2pi_even_alice():
    s = hilbert.ModeSystem.of(a=3, b=5)
    bob = (hilbert.fock(5, 0) + hilbert.fock(5, 2)) / np.sqrt(2)
    u = protocols.c2pi_gate(s)
    worst = 1.0
    for na in (0, 2):
        out = u @ s.product_state({"a": hilbert.fock(3, na), "b": bob})
        red = s.ptrace(np.outer(out, out.conj()), ["b"])
        worst = min(worst, hilbert.state_fidelity(red, bob))
    return worst >= 1 - 1e-6, f"Bob fidelity after C_2pi with even Alice {worst:.9f}"


@check("protocols")
def repeated_gates_idempotent():
    s = protocols.two_mode_system(3)
    psi = np.kron(protocols.plus_state(3), protocols.plus_state(3))
    r = protocols.repeated_gate_fidelity(psi, s, 0.09535, 10)
    worst = float(np.max(np.abs(r.fidelities - 1)))
    return worst < 1e-6, f"max |F - 1| over 10 gates = {worst:.1e}"


@check("protocols")
def budget_non_negative():
    budgets = protocols.error_budget(models.preset("fig3-bias"))
    worst = min(v for b in budgets for v in b.contributions.values())
    return worst >= -1e-6, f"smallest increment {worst:.2e}"


# ---------------------------------------------------------------------- cli


def run_cli(config, out, *extra):
    env = dict(os.environ)
    return subprocess.run(
        [sys.executable, "-m", "crosskerr.cli", "run", str(config), "--out", str(out), *extra],
        capture_output=True, text=True, env=env,
    )


@check("cli")
def cli_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for k in range(2):
            r = run_cli(CONFIGS / "tomography.cfg", Path(tmp) / f"r{k}", "--override", "states=2", "--override", "samples=64", "--override", "thinning=32")
            if r.returncode:
                return False, r.stderr
            outs.append([(Path(tmp) / f"r{k}" / n).read_bytes() for n in ("tomography.csv", "summary.json", "resolved.cfg")])
        return outs[0] == outs[1], "tomography run twice with one seed: identical bytes"


@check("cli")
def cli_validation():
    from crosskerr.cli import EXPERIMENTS

    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for exp, sections in EXPERIMENTS.items():
            for missing in ("run",) + sections:
                lines = [f"[run]\nexperiment = {exp}\nseed = 1\n"] if missing != "run" else []
                for sec in sections:
                    if sec != missing:
                        lines.append(f"[{sec}]\n" + ("preset = fig3-bias\n" if sec == "device" else ""))
                cfg = Path(tmp) / f"{exp}-{missing}.cfg"
                cfg.write_text("\n".join(lines))
                from crosskerr.cli import run

                if run(cfg, out=str(Path(tmp) / "out")) != 1:
                    bad.append(f"{exp} without [{missing}]")
    return not bad, "all experiments reject missing blocks with exit 1" if not bad else ", ".join(bad)
