"""Truncated Fock-space algebra shared by every other module.

Operators are plain complex ``numpy`` arrays acting on the tensor product
space described by a :class:`ModeSystem`. Density matrices are wrapped in
:class:`DensityMatrix` so they carry the mode layout needed for partial
traces and phase-space functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid as _trapezoid
from scipy.special import eval_genlaguerre

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
PSD_TOL = -1e-10


class HilbertError(ValueError):
    """Raised for inconsistent mode layouts or non-physical inputs."""


def destroy(dim: int) -> np.ndarray:
    """Single-mode lowering matrix of dimension ``dim``."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def fock(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise HilbertError(f"Fock level {n} outside dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def ket2dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True)
class ModeSystem:
    """Ordered collection of truncated modes.

    ``modes`` is a sequence of ``(label, dimension)`` pairs; the first mode is
    the most significant tensor factor.
    """

    modes: tuple[tuple[str, int], ...]
    total_dim: int = field(init=False)

    def __post_init__(self):
        modes = tuple((str(label), int(dim)) for label, dim in self.modes)
        labels = [m[0] for m in modes]
        if not modes:
            raise HilbertError("a ModeSystem needs at least one mode")
        if len(set(labels)) != len(labels):
            raise HilbertError(f"mode labels must be unique, got {labels}")
        for label, dim in modes:
            if dim < 2:
                raise HilbertError(f"mode {label!r} has dimension {dim} < 2")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "total_dim", int(np.prod([d for _, d in modes])))

    @classmethod
    def of(cls, **dims: int) -> "ModeSystem":
        """``ModeSystem.of(a=4, b=4, c=12)`` keeps keyword order."""
        return cls(tuple(dims.items()))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.modes)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise HilbertError(f"unknown mode label {label!r}; have {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def has(self, label: str) -> bool:
        return label in self.labels

    def embed(self, label: str, local_op: np.ndarray) -> np.ndarray:
        """Place ``local_op`` on mode ``label``, identity elsewhere."""
        k = self.index(label)
        local_op = np.asarray(local_op, dtype=complex)
        if local_op.shape != (self.dims[k], self.dims[k]):
            raise HilbertError(
                f"operator shape {local_op.shape} does not match mode {label!r} "
                f"of dimension {self.dims[k]}"
            )
        factors = [np.eye(d, dtype=complex) for d in self.dims]
        factors[k] = local_op
        return reduce(np.kron, factors)

    def identity(self) -> np.ndarray:
        return np.eye(self.total_dim, dtype=complex)

    def basis_state(self, **levels: int) -> np.ndarray:
        """Product Fock ket; unspecified modes are in vacuum."""
        for label in levels:
            self.index(label)
        kets = [fock(d, int(levels.get(lab, 0))) for lab, d in self.modes]
        return reduce(np.kron, kets)

    def product_state(self, kets: dict[str, np.ndarray]) -> np.ndarray:
        vecs = []
        for lab, d in self.modes:
            v = np.asarray(kets.get(lab, fock(d, 0)), dtype=complex).ravel()
            if v.size != d:
                raise HilbertError(f"ket for {lab!r} has size {v.size}, expected {d}")
            vecs.append(v)
        return reduce(np.kron, vecs)

    def index_of(self, levels: Sequence[int]) -> int:
        """Flat index of the product Fock state with the given occupations."""
        return int(np.ravel_multi_index(tuple(levels), self.dims))

    def levels_of(self, flat_index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat_index, self.dims))

    def ptrace(self, matrix: np.ndarray, keep: Iterable[str]) -> np.ndarray:
        """Partial trace retaining ``keep`` (in system order)."""
        keep_idx = sorted(self.index(lab) for lab in keep)
        n = len(self.dims)
        rho = np.asarray(matrix).reshape(self.dims + self.dims)
        trace_idx = [i for i in range(n) if i not in keep_idx]
        # trace pairs one at a time, highest index first so axes stay valid
        for offset, i in enumerate(sorted(trace_idx, reverse=True)):
            cur_n = n - offset
            rho = np.trace(rho, axis1=i, axis2=i + cur_n)
        d = int(np.prod([self.dims[i] for i in keep_idx]))
        return rho.reshape(d, d)

    def subsystem(self, keep: Iterable[str]) -> "ModeSystem":
        keep = set(keep)
        return ModeSystem(tuple(m for m in self.modes if m[0] in keep))


@dataclass(frozen=True)
class DensityMatrix:
    """A density matrix tied to its mode layout."""

    system: ModeSystem
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.system.total_dim, self.system.total_dim):
            raise HilbertError(
                f"matrix shape {m.shape} does not match total dimension {self.system.total_dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, system: ModeSystem, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        return cls(system, ket2dm(psi / np.linalg.norm(psi)))

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ op))

    def reduced(self, keep: Iterable[str]) -> "DensityMatrix":
        keep = list(keep)
        sub = self.system.subsystem(keep)
        return DensityMatrix(sub, self.system.ptrace(self.matrix, sub.labels))

    def physicality(self) -> dict:
        return physicality_report(self.matrix)

    def is_physical(self) -> bool:
        rep = self.physicality()
        return rep["hermitian_err"] < HERMITIAN_TOL and abs(rep["trace"] - 1) < TRACE_TOL and rep["min_eig"] >= PSD_TOL


def physicality_report(matrix: np.ndarray) -> dict:
    m = np.asarray(matrix)
    herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    evals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    return {"hermitian_err": herm, "trace": float(np.real(np.trace(m))), "min_eig": float(evals.min())}


# ---------------------------------------------------------------- operators


def annihilation(system: ModeSystem, label: str) -> np.ndarray:
    return system.embed(label, destroy(system.dim(label)))


def creation(system: ModeSystem, label: str) -> np.ndarray:
    return dag(annihilation(system, label))


def number_operator(system: ModeSystem, label: str) -> np.ndarray:
    return system.embed(label, number(system.dim(label)))


def projector(system: ModeSystem, label: str, n: int) -> np.ndarray:
    v = fock(system.dim(label), n)
    return system.embed(label, np.outer(v, v))


def displacement_matrix(dim: int, alpha: complex) -> np.ndarray:
    """exp(alpha a^dag - alpha^* a) on a ``dim``-level truncation."""
    a = destroy(dim)
    return sla.expm(alpha * a.conj().T - np.conj(alpha) * a)


def displacement(system: ModeSystem, label: str, alpha: complex) -> np.ndarray:
    return system.embed(label, displacement_matrix(system.dim(label), complex(alpha)))


def parity_matrix(dim: int) -> np.ndarray:
    return np.diag((-1.0) ** np.arange(dim)).astype(complex)


def parity_operator(system: ModeSystem, label: str) -> np.ndarray:
    return system.embed(label, parity_matrix(system.dim(label)))


def coherent_state(dim: int, alpha: complex) -> np.ndarray:
    return displacement_matrix(dim, alpha)[:, 0]


# ------------------------------------------------------------ phase space


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Real/imaginary axis samples of a phase-space function.

    ``values[i, j]`` is the function at ``re[j] + 1j * im[i]``.
    """

    re: np.ndarray
    im: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        re = np.asarray(self.re, dtype=float)
        im = np.asarray(self.im, dtype=float)
        if re.size == 0 or im.size == 0:
            raise HilbertError("phase-space grid is empty")
        if np.any(np.diff(re) <= 0) or np.any(np.diff(im) <= 0):
            raise HilbertError("grid axes must be strictly increasing")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def square(cls, extent: float, points: int) -> "PhaseSpaceGrid":
        ax = np.linspace(-extent, extent, points)
        return cls(ax, ax)

    def integrate(self) -> float:
        if self.values is None:
            raise HilbertError("grid carries no values")
        inner = _trapezoid(self.values, self.re, axis=1)
        return float(_trapezoid(inner, self.im))


def wigner(rho: DensityMatrix, label: str, grid: PhaseSpaceGrid) -> PhaseSpaceGrid:
    """W(alpha) = (2/pi) tr[rho D(alpha) P D^dag(alpha)] for mode ``label``.

    Other modes are traced out first. Uses the closed-form Fock matrix
    elements of the displaced parity (generalized Laguerre polynomials), so
    no displacement is truncated.
    """
    red = rho.reduced([label]).matrix
    dim = red.shape[0]
    alpha = grid.re[None, :] + 1j * grid.im[:, None]
    x = 4 * np.abs(alpha) ** 2
    gauss = np.exp(-x / 2)
    vals = np.zeros(alpha.shape)
    for n in range(dim):
        for m in range(n, dim):
            if red[m, n] == 0:
                continue
            norm = math.exp(0.5 * (math.lgamma(n + 1) - math.lgamma(m + 1)))
            f = (-1) ** n * norm * (2 * np.conj(alpha)) ** (m - n) * gauss * eval_genlaguerre(n, m - n, x)
            term = np.real(red[m, n] * f)
            vals += 2 * term if m > n else term
    return PhaseSpaceGrid(grid.re, grid.im, (2 / np.pi) * vals)


# ------------------------------------------------------------ figures of merit


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, -1e-10, None)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def uhlmann_fidelity(rho, sigma) -> float:
    """F = (tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2, clipped to [0, 1]."""
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    s = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    if r.shape != s.shape:
        raise HilbertError(f"dimension mismatch {r.shape} vs {s.shape}")
    sq = _psd_sqrt(s)
    inner = sq @ r @ sq
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """<psi|rho|psi> for a normalized pure target."""
    psi = np.asarray(psi, dtype=complex).ravel()
    return float(np.real(np.vdot(psi, rho @ psi)))


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LABELS = tuple(p + q for p in "IXYZ" for q in "IXYZ")


def logical_pauli(dim: int, codewords: tuple[int, int], which: str) -> np.ndarray:
    """Pauli ``which`` on span{|n0>, |n1>}, zero outside the code space."""
    n0, n1 = codewords
    if max(n0, n1) >= dim or n0 == n1:
        raise HilbertError(f"codewords {codewords} invalid for dimension {dim}")
    iso = np.zeros((dim, 2), dtype=complex)
    iso[n0, 0] = 1
    iso[n1, 1] = 1
    return iso @ _PAULI[which] @ iso.conj().T


def pauli_bars(
    rho: DensityMatrix,
    codewords: dict[str, tuple[int, int]] | tuple[int, int] = (0, 1),
    modes: tuple[str, str] | None = None,
) -> dict[str, float]:
    """Two-qubit Pauli expectation values of a two-mode bosonic state.

    Returns the 16 bars keyed ``"II" ... "ZZ"`` plus ``"leakage"``, the
    population outside the product code space.
    """
    system = rho.system
    if modes is None:
        if len(system.labels) != 2:
            raise HilbertError("pauli_bars needs exactly two modes or an explicit mode pair")
        modes = system.labels  # type: ignore[assignment]
    if isinstance(codewords, tuple):
        codewords = {m: codewords for m in modes}
    red = rho.reduced(modes)
    dims = red.system.dims
    bars = {}
    for label in PAULI_LABELS:
        pa = logical_pauli(dims[0], codewords[modes[0]], label[0])
        pb = logical_pauli(dims[1], codewords[modes[1]], label[1])
        bars[label] = float(np.real(np.trace(red.matrix @ np.kron(pa, pb))))
    bars["leakage"] = float(red.trace - bars["II"])
    return bars
