import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from crosskerr import dynamics as D
from crosskerr.hilbert import ModeSystem, fock
from crosskerr.models import preset
from properties import CHECKS

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


@pytest.mark.parametrize("name", [k for k in CHECKS if k.startswith("dynamics:")])
def test_invariant(name):
    passed, detail = CHECKS[name]()
    assert passed, detail


def test_amplitude_damping_one_over_e():
    s = ModeSystem.of(a=3)
    model = D.LindbladModel(np.zeros((3, 3)), tuple(D.collapse_set(s, {"a": (800.0, None)})))
    traj = D.evolve_lindblad(model, fock(3, 1), [0.0, 400.0, 800.0], e_ops={"n": np.diag([0.0, 1, 2])})
    assert abs(traj.expectations["n"][-1] - np.exp(-1)) < 1e-4


def test_purity_conserved_without_collapse():
    h = 2 * np.pi * np.array([[0.3, 0.2], [0.2, -0.1]], dtype=complex)
    traj = D.evolve_lindblad(D.LindbladModel(h), np.array([1.0, 0]), np.linspace(0, 5, 11), store_states=True)
    assert max(abs(np.trace(r @ r).real - 1) for r in traj.states) < 1e-8


def test_coherence_convention():
    s = ModeSystem.of(a=2)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    for conv, expected in (("coherence", np.exp(-1)), ("rate", np.exp(-0.5))):
        model = D.LindbladModel(np.zeros((2, 2)), tuple(D.collapse_set(s, {"a": (None, 10.0)}, conv)))
        rho = D.evolve_lindblad(model, plus, [0.0, 10.0], store_states=True).states[-1]
        assert abs(2 * abs(rho[0, 1]) - expected) < 1e-6


def test_collapse_set_entries():
    s = ModeSystem.of(a=3, b=3)
    idle = preset("fig3-bias").coherence("idle")
    rates = [r for _, r in D.collapse_set(s, {"a": (800.0, None)})]
    assert rates == [pytest.approx(0.00125)]
    driven = preset("fig3-bias").coherence("driven")
    assert driven["a"] == (210.0, 70.0) and driven["b"] == (388.0, 52.0)
    assert len(D.collapse_set(s, idle)) >= 2
    with pytest.raises(ValueError):
        D.collapse_set(s, {"a": (-1.0, None)})


def test_constant_propagator():
    h = 2 * np.pi * np.array([[0.5, 0.3], [0.3, -0.2]], dtype=complex)
    ham = D.TimeDependentHamiltonian(h, (), period=0.7)
    u = D.period_propagator(ham, tol=1e-10)
    assert np.max(np.abs(u - expm(-1j * h * 0.7))) < 1e-9


def test_driven_two_level_matches_fine_integrator():
    f = 2.0
    drive = D.PeriodicDrive(2 * np.pi * 0.4 * SZ, SX, 2 * np.pi * 1.3, f)
    u = D.period_propagator(drive, tol=1e-10)

    def rhs(t, y):
        return (-1j * drive(t) @ y.reshape(2, 2)).ravel()

    ref = solve_ivp(rhs, (0, 1 / f), np.eye(2, dtype=complex).ravel(), method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]
    assert np.max(np.abs(u - ref.reshape(2, 2))) < 1e-7
    assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-8


def test_start_phase_covariance():
    drive = D.PeriodicDrive(2 * np.pi * 0.4 * SZ, SX, 2 * np.pi * 1.3, 2.0)
    e0 = np.sort(D.quasi_energies(D.period_propagator(drive, tol=1e-9), 0.5)[0])
    e1 = np.sort(D.quasi_energies(D.period_propagator(drive, t0=0.13, tol=1e-9), 0.5)[0])
    assert np.max(np.abs(e0 - e1)) < 1e-6


def _synthetic(t, **kw):
    p = dict(A=0.45, B=0.05, kappa1=1 / 94, kappa_phi=1 / 28, g1=1.024, phi0=0.0)
    p.update(kw)
    return D.damped_cosine(t, **p), p


def test_fit_exact_recovery():
    t = np.linspace(0, 5, 401)
    y, p = _synthetic(t)
    fit = D.fit_damped_cosine(t, y)
    for k in ("A", "B", "g1"):
        assert getattr(fit, k) == pytest.approx(p[k], rel=1e-3)
    assert fit.kappa1 == pytest.approx(p["kappa1"], rel=1e-3, abs=1e-4)
    assert fit.kappa_phi == pytest.approx(p["kappa_phi"], rel=1e-3)
    y, _ = _synthetic(t, kappa1=0.0, kappa_phi=0.0)
    assert D.fit_damped_cosine(t, y).g1 == pytest.approx(1.024, rel=1e-4)


def test_fit_noisy_median():
    t = np.linspace(0, 5, 200)
    y, _ = _synthetic(t)
    errs = []
    for seed in range(100):
        noisy = y + np.random.default_rng(seed).normal(0, 0.02, t.size)
        errs.append(abs(D.fit_damped_cosine(t, noisy).g1 - 1.024) / 1.024)
    assert np.median(errs) < 0.01


def test_fit_errors():
    with pytest.raises(D.SolverError):
        D.fit_damped_cosine(np.arange(5.0), np.ones(5))
    with pytest.raises(D.SolverError):
        D.fit_damped_cosine(np.linspace(0, 5, 50), np.ones(50))


def test_time_validation():
    with pytest.raises(ValueError):
        D.evolve_lindblad(D.LindbladModel(np.zeros((2, 2))), np.array([1.0, 0]), [0.0, 1.0, 0.5])
