import math

import numpy as np
import pytest

from crosskerr import protocols as P
from crosskerr.effective import max_coupler_excitation
from crosskerr.hilbert import DensityMatrix, fock
from crosskerr.models import build_effective_crosskerr, preset
from properties import CHECKS


@pytest.mark.parametrize("name", [k for k in CHECKS if k.startswith("protocols:")])
def test_invariant(name):
    passed, detail = CHECKS[name]()
    assert passed, detail


def test_snap_rows():
    dim = 15
    u = P.snap_unitary(P.SNAP_TABLE["fock1"], dim)
    assert abs(u[1, 0]) ** 2 >= 0.95
    assert np.max(np.abs(P.snap_unitary(P.SnapSpec(0.7, (0.0, 0.0), -0.7), dim) - np.eye(dim))) < 1e-9
    u = P.snap_unitary(P.SNAP_TABLE["parity-map"], dim)
    minus = (fock(dim, 0) - fock(dim, 2)) / math.sqrt(2)
    plus = (fock(dim, 0) + fock(dim, 2)) / math.sqrt(2)
    assert abs((u @ minus)[0]) ** 2 >= 0.9
    assert abs((u @ plus)[0]) ** 2 <= 0.1


def test_chevron_resonant_cut():
    g1 = 1.024
    t = np.array([0.0, 1 / (4 * g1), 1 / (2 * g1)])
    maps = P.chevron_scan(g1, [0.0, 8.0], t)
    assert maps.p_alice_vac[0, 1] == pytest.approx(1.0, abs=1e-6)
    assert maps.p_coupler_e[0, 1] == pytest.approx(1.0, abs=1e-6)
    assert maps.p_alice_vac[0, 2] == pytest.approx(0.0, abs=1e-6)
    # a sudden switch-on gives the detuned-Rabi contrast with coupling 2 g1
    detuned = P.chevron_scan(g1, [8.0], np.linspace(0, 2, 2001))
    rabi = (2 * g1) ** 2 / ((2 * g1) ** 2 + 8.0**2)
    assert detuned.p_coupler_e.max() == pytest.approx(rabi, abs=1e-4)
    assert rabi > max_coupler_excitation(g1, 8.0)


def test_ramsey_effective_model():
    s = P.two_mode_system(2)
    h = build_effective_crosskerr(-0.126, s)
    res = P.ramsey_crosskerr(h, s, np.linspace(0, 4, 41))
    assert res.g_ab == pytest.approx(-0.126, rel=0.01)
    assert np.max(np.abs(res.phases_0)) < 1e-9
    with pytest.raises(P.ProtocolError):
        P.ramsey_crosskerr(h, s, np.linspace(0, 0.05, 5))


def test_ideal_cz_flips_alice():
    s = P.two_mode_system(3)
    psi = np.kron(P.plus_state(3), fock(3, 1))
    out = P.cphase_gate(DensityMatrix.from_ket(s, psi), 0.09535)
    target = np.kron((fock(3, 0) - fock(3, 1)) / math.sqrt(2), fock(3, 1))
    assert np.real(target.conj() @ out.matrix @ target) >= 0.9999


def test_bell_and_gate_times():
    assert P.bell_state(0.09535).fidelity >= 0.9999
    s = P.two_mode_system(2)
    psi = np.kron(P.plus_state(2), P.plus_state(2))
    res = P.repeated_gate_fidelity(psi, s, 0.09535, 4)
    np.testing.assert_allclose(res.fidelities, 1.0, atol=1e-6)
    with pytest.raises(ValueError):
        P.repeated_gate_fidelity(psi, s, 0.09535, 0)


def test_p_odd_examples():
    assert P.p_odd_analytic(0.0, 750.0) == 0
    assert P.p_odd_analytic(750.0 * math.log(2), 750.0) == pytest.approx(0.5)
    assert P.p_odd_analytic(1e6, 750.0) == pytest.approx(0.0, abs=1e-12)


def test_parity_ideal_floor():
    ideal = P.parity_check_protocol([0.0, 100.0, 500.0])
    assert ideal.p_odd[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all((ideal.p_odd >= 0) & (ideal.p_odd <= 1))


def test_parity_with_bob_confusion():
    from crosskerr.tomography import CONFUSION_BOB

    res = P.parity_check_protocol([0.0], confusion=CONFUSION_BOB)
    assert res.p_odd[0] == pytest.approx(CONFUSION_BOB[0, 1], abs=1e-12)


def test_budget_consistency():
    p = preset("fig3-bias")
    (b,) = P.error_budget(p, ("++",))
    s = P.two_mode_system(2)
    psi = np.kron(P.plus_state(2), P.plus_state(2))
    single = 1 - P.repeated_gate_fidelity(psi, s, 0.09535, 1, p.coherence("driven")).fidelities[1]
    assert abs(b.contributions["alice"] + b.contributions["bob"] - single) < 0.005
    assert max(b.contributions, key=b.contributions.get) == "spam"
    off = P.BudgetConfig(include_spam=False, include_coupler=False, include_alice=False, include_bob=False)
    (z,) = P.error_budget(p, ("++",), off)
    assert z.total < 1e-4
