import math

import pytest

from crosskerr import effective as E
from properties import CHECKS


@pytest.mark.parametrize("name", [k for k in CHECKS if k.startswith("effective:")])
def test_invariant(name):
    passed, detail = CHECKS[name]()
    assert passed, detail


def test_energy_shift_examples():
    assert E.energy_shift(E.SwtInputs(0.8, -6.0), 1, 0) == pytest.approx(-0.10667, abs=1e-4)
    assert E.energy_shift(E.SwtInputs(0.8, -6.0, chi_b=0.5), 1, 1) == pytest.approx(-0.23273, abs=1e-4)
    assert E.energy_shift(E.SwtInputs(0.8, -6.0), 0, 3) == 0


def test_engineered_crosskerr_examples():
    s = E.SwtInputs(0.8, -6.0, chi_b=0.5)
    assert E.engineered_crosskerr(s) == pytest.approx(-0.12606, abs=1e-4)
    combo = E.energy_shift(s, 1, 1) - E.energy_shift(s, 1, 0) - E.energy_shift(s, 0, 1)
    assert E.engineered_crosskerr(s) == pytest.approx(combo, rel=1e-12)
    assert E.engineered_crosskerr(E.SwtInputs(0.8, -6.0)) == pytest.approx(0.64 / -6)
    with pytest.raises(E.ResonanceError):
        E.engineered_crosskerr(E.SwtInputs(0.8, -0.5, chi_b=0.5))
    with pytest.raises(E.ResonanceError):
        E.engineered_crosskerr(E.SwtInputs(0.8, 0.0))


def test_coupler_bound():
    assert E.max_coupler_excitation(0.8, -6.0) == pytest.approx(0.0175, abs=1e-4)
    assert E.max_coupler_excitation(1.0, 0.0) == 1.0


def test_gate_times():
    assert E.gate_time(0.09535) == pytest.approx(5.244, abs=1e-3)
    assert E.gate_time(0.09535, math.pi / 2) == pytest.approx(2.622, abs=1e-3)
    assert E.gate_time(0.09535, math.pi / 4) == pytest.approx(1.311, abs=1e-3)
    assert E.code_gate_time(0.09535, 1, 1) == pytest.approx(E.gate_time(0.09535))
    with pytest.raises(E.ResonanceError):
        E.gate_time(0.0)
    with pytest.raises(ValueError):
        E.gate_time(0.1, n_a=0)


def test_dressed_lifetime():
    assert E.dressed_lifetime_estimate(0.1, 2.0) == pytest.approx(200.0)
    with pytest.raises(E.ResonanceError):
        E.dressed_lifetime_estimate(0.0, 2.0)


def test_inputs_validation():
    with pytest.raises(ValueError):
        E.SwtInputs(float("nan"), -6.0)
    with pytest.raises(ValueError):
        E.beta_coefficient(E.SwtInputs(0.8, -6.0), -1, 0)
