import numpy as np
import pytest
from scipy.linalg import expm

from conftest import calibration, full_model
from crosskerr import effective, floquet
from crosskerr.models import preset
from properties import CHECKS


@pytest.mark.parametrize("name", [k for k in CHECKS if k.startswith("floquet:")])
def test_invariant(name):
    passed, detail = CHECKS[name]()
    assert passed, detail


def test_undriven_spectrum_is_dressed():
    model, dressed = full_model("fig3-bias")
    f = dressed.energy(0, 1, 1) - dressed.energy(1, 0, 0)
    spec = floquet.quasi_energy_spectrum(model, 0.0, f, dressed=dressed)
    np.testing.assert_allclose(spec.confidence, 1.0)
    assert floquet.crosskerr_from_spectrum(spec) == pytest.approx(floquet.static_crosskerr(dressed))
    # same through the one-period propagator of the static model
    refs = floquet.DrivenReferences(model, 0.0, f, dressed)
    labelled = floquet.label_modes(expm(-1j * model.static / f), f, refs, floquet.CROSSKERR_LABELS)
    assert labelled.confidence_of((0, 0, 0)) > 0.99
    np.testing.assert_allclose(labelled.quasi_energies, spec.quasi_energies, atol=1e-6)


def test_calibration_symmetry():
    p = preset("fig3-bias")
    f = p.omega_c - 500.0
    assert floquet.calibrate_drive_amplitude(p, 0.0, f) == 0.0
    eps = floquet.calibrate_drive_amplitude(p, -2.0, f)
    s_plus = floquet.coupler_stark_shift(p, eps, f)
    s_minus = floquet.coupler_stark_shift(p, -eps, f)
    assert abs(abs(s_plus) - 2.0) < 1e-3
    assert abs(s_plus - s_minus) < 1e-3


def test_unreachable_target():
    p = preset("fig3-bias")
    with pytest.raises(floquet.FloquetError):
        floquet.calibrate_drive_amplitude(p, 1e5, p.omega_c - 500.0, eps_max=50.0)


def test_xi_round_trip():
    p = preset("fig2-bias")
    assert floquet.xi_from_stark(p, floquet.stark_target_from_xi(p, 0.2)) == pytest.approx(0.2)


def test_unassigned_labels_raise():
    spec = floquet.FloquetSpectrum([(0, 0, 0)], np.zeros(1), np.ones(1), 1.0)
    with pytest.raises(floquet.FloquetError):
        floquet.crosskerr_from_spectrum(spec)


@pytest.mark.slow
def test_weak_drive_matches_swt():
    model, dressed = full_model("fig3-bias")
    cal = calibration("fig3-bias", 0.02)
    f = cal.resonance.frequency - 10.0
    g, conf, flagged = floquet.crosskerr_point(model, cal.epsilon_f, f, dressed)
    d = dressed.dispersive()
    swt = effective.engineered_crosskerr(
        effective.SwtInputs(cal.resonance.g1, -10.0, d["chi_b"], d["K_a"], d["K_b"], d["K_ab"], d["chi_a"])
    )
    assert not flagged and conf > 0.9
    assert abs(g - swt) / abs(g) < 0.10
