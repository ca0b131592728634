import math

import numpy as np
import pytest

from crosskerr import hilbert as H
from properties import CHECKS


@pytest.mark.parametrize("name", [k for k in CHECKS if k.startswith("hilbert:")])
def test_invariant(name):
    passed, detail = CHECKS[name]()
    assert passed, detail


def test_lowering_matrix():
    s = H.ModeSystem.of(a=3)
    a = H.annihilation(s, "a")
    expected = np.zeros((3, 3))
    expected[0, 1], expected[1, 2] = 1, math.sqrt(2)
    np.testing.assert_allclose(a, expected, atol=0)


def test_commutator_below_edge():
    a = H.destroy(8)
    c = H.commutator(a, a.conj().T)
    np.testing.assert_allclose(c[:7, :7], np.eye(7), atol=1e-12)


def test_embedding_second_mode():
    s = H.ModeSystem.of(a=2, b=2)
    np.testing.assert_allclose(H.annihilation(s, "b"), np.kron(np.eye(2), H.destroy(2)))


def test_displacement_examples():
    s = H.ModeSystem.of(a=20)
    np.testing.assert_allclose(H.displacement(s, "a", 0), np.eye(20), atol=1e-15)
    d = H.displacement_matrix(12, 0.7 + 0.3j) @ H.displacement_matrix(12, -0.7 - 0.3j)
    np.testing.assert_allclose(d, np.eye(12), atol=1e-9)
    psi = H.displacement_matrix(20, 0.8) @ H.fock(20, 0)
    assert abs(np.vdot(psi, H.number(20) @ psi).real - 0.64) < 1e-6


def test_parity_examples():
    p = H.parity_matrix(20)
    assert p[1, 1] == -1
    np.testing.assert_allclose(p @ p, np.eye(20))
    psi = H.coherent_state(20, 1.0)
    assert abs(np.vdot(psi, p @ psi).real - math.exp(-2)) < 1e-4


def test_wigner_values():
    s = H.ModeSystem.of(a=6)
    grid = H.PhaseSpaceGrid(np.array([0.0]), np.array([0.0]))
    vac = H.wigner(H.DensityMatrix.from_ket(s, H.fock(6, 0)), "a", grid).values[0, 0]
    one = H.wigner(H.DensityMatrix.from_ket(s, H.fock(6, 1)), "a", grid).values[0, 0]
    assert abs(vac - 2 / math.pi) < 1e-12 and abs(one + 2 / math.pi) < 1e-12
    w = H.wigner(H.DensityMatrix.from_ket(s, H.fock(6, 0)), "a", H.PhaseSpaceGrid.square(4, 81))
    assert abs(w.integrate() - 1) < 0.02


def test_wigner_coherent_is_displaced_gaussian():
    s = H.ModeSystem.of(a=25)
    alpha = 1.0 - 0.5j
    grid = H.PhaseSpaceGrid(np.array([-0.4, 1.0, 1.7]), np.array([-0.5, 0.3]))
    w = H.wigner(H.DensityMatrix.from_ket(s, H.coherent_state(25, alpha)), "a", grid).values
    z = grid.re[None, :] + 1j * grid.im[:, None]
    np.testing.assert_allclose(w, 2 / math.pi * np.exp(-2 * np.abs(z - alpha) ** 2), atol=1e-9)


def test_fidelity_examples():
    r0, r1 = np.diag([1.0, 0]), np.diag([0.0, 1])
    assert abs(H.uhlmann_fidelity(r0, r0) - 1) < 1e-12
    assert H.uhlmann_fidelity(r0, r1) < 1e-12
    assert abs(H.uhlmann_fidelity(r0, np.eye(2) / 2) - 0.5) < 1e-12


def test_pauli_bars_examples():
    s = H.ModeSystem.of(a=3, b=3)
    bars = H.pauli_bars(H.DensityMatrix.from_ket(s, s.basis_state()))
    for k in H.PAULI_LABELS:
        assert bars[k] == pytest.approx(1.0 if k in ("II", "ZI", "IZ", "ZZ") else 0.0, abs=1e-12)
    bell = np.zeros(9, dtype=complex)
    for (i, j), sign in {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}.items():
        bell[s.index_of((i, j))] = sign / 2
    bars = H.pauli_bars(H.DensityMatrix.from_ket(s, bell))
    # CZ acting on |+>|+>: stabilizers XZ, ZX and YY
    assert bars["XZ"] == pytest.approx(1) and bars["ZX"] == pytest.approx(1) and bars["YY"] == pytest.approx(1)
    assert sum(abs(bars[k]) for k in H.PAULI_LABELS) == pytest.approx(4)
    mixed = np.zeros((9, 9))
    for i in range(2):
        for j in range(2):
            mixed[s.index_of((i, j)), s.index_of((i, j))] = 0.25
    bars = H.pauli_bars(H.DensityMatrix(s, mixed))
    assert all(abs(bars[k]) < 1e-12 for k in H.PAULI_LABELS if k != "II")


def test_ptrace_and_validation():
    s = H.ModeSystem.of(a=2, b=3)
    psi = s.product_state({"a": H.fock(2, 1), "b": (H.fock(3, 0) + H.fock(3, 2)) / math.sqrt(2)})
    rho = H.DensityMatrix.from_ket(s, psi)
    np.testing.assert_allclose(rho.reduced(["a"]).matrix, np.diag([0, 1]), atol=1e-15)
    with pytest.raises(H.HilbertError):
        H.ModeSystem.of(a=1)
    with pytest.raises(H.HilbertError):
        H.DensityMatrix(s, np.eye(5))
