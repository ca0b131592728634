"""Two-mode state reconstruction from displaced photon-number measurements.

Each displacement pair (alpha_a, alpha_b) is followed by a photon-number
selective readout on both modes, giving four joint outcomes
(ee, eg, ge, gg), where ``e`` means "the mode held ``n`` photons". The
outcome probabilities are linear in rho; the linear map is the measurement
matrix acting on the D^2 real coordinates of rho in an orthonormal
Hermitian basis.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .hilbert import DensityMatrix, HilbertError, ModeSystem, physicality_report, uhlmann_fidelity

log = logging.getLogger(__name__)

# rows: true state (g, e); columns: measured (g, e)
CONFUSION_ALICE = np.array([[0.975, 0.025], [0.028, 0.972]])
CONFUSION_BOB = np.array([[0.959, 0.041], [0.064, 0.936]])

OUTCOMES = ("ee", "eg", "ge", "gg")


class TomographyError(RuntimeError):
    pass


# ------------------------------------------------------------ displaced Fock


def displaced_fock_element(m: int, n: int, alpha: complex) -> complex:
    """<m|D(alpha)|n> in closed form (generalized Laguerre polynomials)."""
    x = abs(alpha) ** 2
    if m >= n:
        pref = np.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)) - 0.5 * x)
        return pref * alpha ** (m - n) * eval_genlaguerre(n, m - n, x)
    pref = np.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)) - 0.5 * x)
    return pref * (-np.conj(alpha)) ** (n - m) * eval_genlaguerre(m, n - m, x)


def displaced_projector(dim: int, alpha: complex, n: int) -> np.ndarray:
    """D(alpha)|n><n|D(alpha)^dag restricted to the lowest ``dim`` levels.

    Exact for any state supported on those levels, since no truncated
    displacement matrix is involved.
    """
    col = np.array([displaced_fock_element(m, n, alpha) for m in range(dim)])
    return np.outer(col, col.conj())


# ---------------------------------------------------------- Hermitian basis


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal Hermitian basis, shape (dim^2, dim, dim), real coordinates."""
    out = []
    for j in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[j, j] = 1
        out.append(e)
    s = 1 / np.sqrt(2)
    for j in range(dim):
        for k in range(j + 1, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[j, k] = e[k, j] = s
            out.append(e)
            e = np.zeros((dim, dim), dtype=complex)
            e[j, k] = -1j * s
            e[k, j] = 1j * s
            out.append(e)
    return np.array(out)


def to_coordinates(rho: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("kij,ji->k", basis, rho))


def from_coordinates(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("k,kij->ij", x, basis)


# ------------------------------------------------------------------- plans


@dataclass(frozen=True)
class DisplacementPlan:
    """Per-mode displacement sets; the measured pairs are their product grid."""

    alphas_a: np.ndarray
    alphas_b: np.ndarray
    dim: int
    n: tuple[int, int] = (0, 0)

    @property
    def pairs(self) -> list[tuple[complex, complex]]:
        return [(complex(x), complex(y)) for x in self.alphas_a for y in self.alphas_b]

    @property
    def size(self) -> int:
        return len(self.alphas_a) * len(self.alphas_b)


@dataclass(frozen=True)
class MeasurementMatrix:
    matrix: np.ndarray
    basis: np.ndarray
    sigma_min: float

    @property
    def rank(self) -> int:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return int(np.sum(s > 1e-10 * s[0]))


def _outcome_operators(plan_dim: int, alpha_a, alpha_b, n_pair):
    pa = displaced_projector(plan_dim, alpha_a, n_pair[0])
    pb = displaced_projector(plan_dim, alpha_b, n_pair[1])
    ia = np.eye(plan_dim) - pa
    ib = np.eye(plan_dim) - pb
    return [np.kron(pa, pb), np.kron(pa, ib), np.kron(ia, pb), np.kron(ia, ib)]


def _mode_rows(dim: int, alphas, n: int) -> np.ndarray:
    """Projectors for each alpha of one mode, shape (k, dim, dim)."""
    return np.array([displaced_projector(dim, a, n) for a in alphas])


def measurement_matrix(plan: DisplacementPlan) -> MeasurementMatrix:
    """Rows: (pair, outcome) in plan order; columns: Hermitian basis coordinates."""
    d = plan.dim
    basis = hermitian_basis(d * d)
    pa = _mode_rows(d, plan.alphas_a, plan.n[0])
    pb = _mode_rows(d, plan.alphas_b, plan.n[1])
    eye = np.eye(d)
    rows = []
    for x in pa:
        for y in pb:
            for op in (np.kron(x, y), np.kron(x, eye - y), np.kron(eye - x, y), np.kron(eye - x, eye - y)):
                rows.append(op)
    ops = np.array(rows)
    m = np.real(np.einsum("rij,kji->rk", ops, basis))
    s = np.linalg.svd(m, compute_uv=False)
    return MeasurementMatrix(m, basis, float(s[-1]))


def single_mode_matrix(dim: int, alphas, n: int) -> np.ndarray:
    """Measurement matrix of one mode: rows (alpha, outcome), columns basis coordinates."""
    basis = hermitian_basis(dim)
    eye = np.eye(dim)
    ops = []
    for p in _mode_rows(dim, alphas, n):
        ops += [p, eye - p]
    return np.real(np.einsum("rij,kji->rk", np.array(ops), basis))


def random_plan(dim: int, count: int, seed: int, scale: float = 1.0, n=(0, 0)) -> DisplacementPlan:
    k = _per_mode(count)
    rng = np.random.default_rng(seed)
    z = scale * (rng.standard_normal((2, k)) + 1j * rng.standard_normal((2, k))) / np.sqrt(2)
    return DisplacementPlan(z[0], z[1], dim, tuple(n))


def _per_mode(count: int) -> int:
    k = int(round(np.sqrt(count)))
    if k * k != count:
        raise ValueError(f"pair count {count} is not a square (product grid)")
    return k


def _ascend(f, x, iterations, step, h=1e-5):
    """Finite-difference gradient ascent with an adaptive step."""
    best = f(x)
    for _ in range(iterations):
        grad = np.array([(f(x + h * e) - best) / h for e in np.eye(x.size)])
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        while step > 1e-6:
            trial = x + step * grad / norm
            val = f(trial)
            if val > best:
                x, best = trial, val
                step *= 1.2
                break
            step *= 0.5
        else:
            break
    return x


def optimize_displacements(
    dim: int, count: int, seed: int = 0, n=(0, 0), iterations: int = 300, step: float = 0.05
) -> DisplacementPlan:
    """Displacements maximizing the smallest singular value of the measurement matrix.

    The two-mode matrix is the Kronecker product of the single-mode ones, so
    its smallest singular value is the product of theirs and each mode is
    optimized on its own: finite-difference gradient ascent on the real and
    imaginary parts of every alpha, from a Gaussian random start.
    Deterministic for a fixed ``seed``.
    """
    start = random_plan(dim, count, seed, n=n)
    out = []
    for alphas, nm in ((start.alphas_a, n[0]), (start.alphas_b, n[1])):
        k = alphas.size

        def f(v, nm=nm, k=k):
            s = np.linalg.svd(single_mode_matrix(dim, v[:k] + 1j * v[k:], nm), compute_uv=False)
            return s[-1]

        x = _ascend(f, np.concatenate([alphas.real, alphas.imag]), iterations, step)
        out.append(x[:k] + 1j * x[k:])
    plan = DisplacementPlan(out[0], out[1], dim, tuple(n))
    mm = measurement_matrix(plan)
    if mm.rank < (dim * dim) ** 2:
        raise TomographyError(
            f"plan rank {mm.rank} < {(dim * dim) ** 2} after optimization (sigma_min {mm.sigma_min:.3g})"
        )
    return plan


# ------------------------------------------------------------ probabilities


def measurement_probability(rho: np.ndarray, alpha_pair, n_pair, dim: int | None = None) -> float:
    """P(mode a holds n_a and mode b holds n_b) after displacing by ``alpha_pair``.

    ``rho`` is a two-mode matrix with equal per-mode dimension (``dim``).
    """
    rho = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    d = dim or int(round(np.sqrt(rho.shape[0])))
    op = _outcome_operators(d, alpha_pair[0], alpha_pair[1], n_pair)[0]
    return float(np.clip(np.real(np.trace(op @ rho)), 0.0, 1.0))


def outcome_probabilities(rho: np.ndarray, plan: DisplacementPlan) -> np.ndarray:
    """Joint outcome probabilities, shape (pairs, 4) in ``OUTCOMES`` order."""
    rho = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    mm = measurement_matrix(plan)
    x = to_coordinates(rho, mm.basis)
    return (mm.matrix @ x).reshape(plan.size, 4)


def apply_confusion(probabilities, confusion_a, confusion_b=None, inverse: bool = False) -> np.ndarray:
    """Readout errors on outcome probabilities.

    With one matrix, ``probabilities`` are single-mode (..., 2) vectors in
    (g, e) order. With two, they are joint (..., 4) vectors in
    ``OUTCOMES`` order. Confusion rows (true state) sum to one. ``inverse``
    undoes the map; results are not clipped.
    """
    ca = _check_confusion(confusion_a)
    p = np.asarray(probabilities, dtype=float)
    if confusion_b is None:
        m = ca
    else:
        cb = _check_confusion(confusion_b)
        # reorder (g, e) rows into OUTCOMES order: e first
        flip = np.array([[0, 1], [1, 0]])
        m = np.kron(flip @ ca @ flip, flip @ cb @ flip)
    if inverse:
        return p @ np.linalg.inv(m)
    return p @ m


def _check_confusion(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (2, 2) or not np.allclose(c.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("confusion matrix must be 2x2 with rows summing to 1")
    if abs(np.linalg.det(c)) < 1e-12:
        raise TomographyError("singular confusion matrix")
    return c


def sample_counts(probabilities: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts per pair, shape (pairs, 4)."""
    p = np.clip(probabilities, 0, None)
    p = p / p.sum(axis=1, keepdims=True)
    return np.array([rng.multinomial(shots, row) for row in p])


# --------------------------------------------------------------- inversion


def linear_inversion(frequencies: np.ndarray, plan: DisplacementPlan) -> np.ndarray:
    """Least-squares rho from outcome frequencies (pairs, 4); not forced physical."""
    mm = measurement_matrix(plan)
    if mm.rank < mm.matrix.shape[1]:
        raise TomographyError(f"measurement matrix rank deficient ({mm.rank} < {mm.matrix.shape[1]})")
    y = np.asarray(frequencies, dtype=float).reshape(-1)
    x, *_ = np.linalg.lstsq(mm.matrix, y, rcond=None)
    return from_coordinates(x, mm.basis)


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Closest density matrix in Frobenius norm (eigenvalue simplex projection)."""
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1
    idx = np.arange(1, u.size + 1)
    k = idx[u - css / idx > 0][-1]
    w = np.clip(w - css[k - 1] / k, 0, None)
    return (v * w) @ v.conj().T


# ---------------------------------------------------------------- Bayesian


@dataclass
class PosteriorSummary:
    samples: int
    thinning: int
    acceptance: float
    beta: float
    rho_bme: DensityMatrix
    rho_ls: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _rho_from_theta(theta: np.ndarray, dim: int) -> np.ndarray:
    g = (theta[: dim * dim] + 1j * theta[dim * dim :]).reshape(dim, dim)
    r = g @ g.conj().T
    return r / np.real(np.trace(r))


def _theta_from_rho(rho: np.ndarray, scale: float = 1.0) -> np.ndarray:
    w, v = np.linalg.eigh(project_physical(rho))
    g = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    g = g * scale * np.sqrt(rho.shape[0] * 2) + 1e-6
    return np.concatenate([g.real.ravel(), g.imag.ravel()])


def bayesian_refine(
    rho_ls: np.ndarray,
    n_events: float,
    samples: int = 1024,
    thinning: int = 128,
    seed: int = 0,
    target_acceptance: float = 0.25,
    system: ModeSystem | None = None,
) -> PosteriorSummary:
    """Bayesian mean estimate with pCN Metropolis-Hastings.

    Likelihood exp(-N/2 ||rho - rho_ls||_F^2); rho = G G^dag / tr(G G^dag)
    with Gaussian G (Hilbert-Schmidt-induced prior). Proposals
    theta' = sqrt(1 - beta^2) theta + beta eta keep the prior invariant, so
    acceptance uses the likelihood ratio only. beta is adapted towards
    ``target_acceptance`` during a burn-in of 10 * ``thinning`` proposals,
    then every ``thinning``-th state is kept until ``samples`` are stored.
    """
    if not n_events > 0:
        raise ValueError("number of events must be positive")
    rho_ls = np.asarray(rho_ls, dtype=complex)
    rho_ls = (rho_ls + rho_ls.conj().T) / 2
    dim = rho_ls.shape[0]
    rng = np.random.default_rng(seed)
    half_n = 0.5 * float(n_events)

    def loglik(r):
        d = r - rho_ls
        return -half_n * float(np.real(np.vdot(d, d)))

    theta = _theta_from_rho(rho_ls)
    rho = _rho_from_theta(theta, dim)
    ll = loglik(rho)
    # posterior width scales as 1/sqrt(N); start the step there
    beta = min(0.5, 1.0 / np.sqrt(float(n_events)))
    burn = 10 * thinning
    window = 20
    acc_window = 0
    for i in range(1, burn + 1):
        prop = np.sqrt(1 - beta * beta) * theta + beta * rng.standard_normal(theta.size)
        r2 = _rho_from_theta(prop, dim)
        l2 = loglik(r2)
        if np.log(rng.random()) < l2 - ll:
            theta, rho, ll = prop, r2, l2
            acc_window += 1
        if i % window == 0:
            rate = acc_window / window
            beta = float(np.clip(beta * np.exp(2.0 * (rate - target_acceptance)), 1e-9, 1.0))
            acc_window = 0

    acc = 0
    total = samples * thinning
    mean = np.zeros((dim, dim), dtype=complex)
    for i in range(1, total + 1):
        prop = np.sqrt(1 - beta * beta) * theta + beta * rng.standard_normal(theta.size)
        r2 = _rho_from_theta(prop, dim)
        l2 = loglik(r2)
        if np.log(rng.random()) < l2 - ll:
            theta, rho, ll = prop, r2, l2
            acc += 1
        if i % thinning == 0:
            mean += rho
    rate = acc / total
    # at beta = 1 the proposals are independent prior draws; high acceptance is then ideal mixing
    if rate < 0.05 or (rate > 0.9 and beta < 1.0):
        raise TomographyError(f"pCN acceptance {rate:.3f} outside [0.05, 0.9] (beta {beta:.3g})")
    mean /= samples
    mean = (mean + mean.conj().T) / 2
    mean /= np.real(np.trace(mean))
    system = system or ModeSystem((("m", dim),))
    return PosteriorSummary(samples, thinning, rate, beta, DensityMatrix(system, mean), rho_ls)


# ------------------------------------------------------------------ pipeline


@dataclass
class Reconstruction:
    rho_ls: np.ndarray
    posterior: PosteriorSummary | None
    fidelity_ls: float | None = None
    fidelity_bme: float | None = None

    @property
    def rho(self) -> np.ndarray:
        return self.posterior.rho_bme.matrix if self.posterior else self.rho_ls


def reconstruct(
    frequencies: np.ndarray,
    plan: DisplacementPlan,
    shots: int | None = None,
    confusion=None,
    seed: int = 0,
    samples: int = 1024,
    thinning: int = 128,
    truth: np.ndarray | None = None,
) -> Reconstruction:
    """Readout correction, linear inversion and (with ``shots``) Bayesian refinement."""
    f = np.asarray(frequencies, dtype=float)
    if confusion is not None:
        f = apply_confusion(f, confusion[0], confusion[1], inverse=True)
    rho_ls = linear_inversion(f, plan)
    post = None
    if shots:
        system = ModeSystem((("a", plan.dim), ("b", plan.dim)))
        post = bayesian_refine(rho_ls, shots * plan.size, samples, thinning, seed, system=system)
    out = Reconstruction(rho_ls, post)
    if truth is not None:
        out.fidelity_ls = uhlmann_fidelity(project_physical(rho_ls), truth)
        if post:
            out.fidelity_bme = uhlmann_fidelity(post.rho_bme.matrix, truth)
    return out


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-induced random state (Hilbert-Schmidt measure for full rank)."""
    k = rank or dim
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    r = g @ g.conj().T
    return r / np.real(np.trace(r))


ENCODINGS = {"0/1": ((0, 1), 2, 25), "0/2": ((0, 2), 3, 100)}
"""Encoding name -> (codewords, mode dimension, displacement pairs)."""


def random_code_state(encoding: str, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure two-mode state inside the product code space, as a density matrix."""
    codewords, dim, _ = ENCODINGS[encoding]
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v /= np.linalg.norm(v)
    psi = np.zeros(dim * dim, dtype=complex)
    for k, (i, j) in enumerate((i, j) for i in codewords for j in codewords):
        psi[i * dim + j] = v[k]
    return np.outer(psi, psi.conj())


def check_physical(rho: np.ndarray) -> bool:
    rep = physicality_report(rho)
    return rep["hermitian_err"] <= 1e-10 and abs(rep["trace"] - 1) <= 1e-9 and rep["min_eig"] >= -1e-10


# ---------------------------------------------------------------------- I/O

COUNT_COLUMNS = ("alpha_a_re", "alpha_a_im", "alpha_b_re", "alpha_b_im", "n_a", "n_b", "shots", "successes")


def write_counts(path, plan: DisplacementPlan, counts: np.ndarray) -> None:
    """One row per (pair, outcome): successes are counts of that joint outcome.

    ``n_a``/``n_b`` carry the projected photon number n when the outcome on
    that mode is ``e`` and -(n + 1) when it is ``g`` (not n photons).
    """
    shots = counts.sum(axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COUNT_COLUMNS)
        for (aa, ab), row, s in zip(plan.pairs, counts, shots):
            for outcome, c in zip(OUTCOMES, row):
                na = plan.n[0] if outcome[0] == "e" else -(plan.n[0] + 1)
                nb = plan.n[1] if outcome[1] == "e" else -(plan.n[1] + 1)
                w.writerow([f"{aa.real:.9g}", f"{aa.imag:.9g}", f"{ab.real:.9g}", f"{ab.imag:.9g}", na, nb, int(s), int(c)])


def read_counts(path, dim: int) -> tuple[DisplacementPlan, np.ndarray]:
    """Inverse of :func:`write_counts`; rows must come in plan order."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) % 4:
        raise TomographyError("counts file must hold four outcomes per displacement pair")
    pairs, counts = [], []
    for i in range(0, len(rows), 4):
        block = rows[i : i + 4]
        r0 = block[0]
        pairs.append((complex(float(r0["alpha_a_re"]), float(r0["alpha_a_im"])), complex(float(r0["alpha_b_re"]), float(r0["alpha_b_im"]))))
        counts.append([int(r["successes"]) for r in block])
    aa = list(dict.fromkeys(p[0] for p in pairs))
    ab = list(dict.fromkeys(p[1] for p in pairs))
    n = (int(rows[0]["n_a"]), int(rows[0]["n_b"]))
    plan = DisplacementPlan(np.array(aa), np.array(ab), dim, n)
    if plan.pairs != pairs:
        raise TomographyError("counts rows are not a product grid in plan order")
    return plan, np.array(counts)


def matrix_to_json(rho: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(rho)]


__all__ = [
    "CONFUSION_ALICE",
    "CONFUSION_BOB",
    "DisplacementPlan",
    "ENCODINGS",
    "HilbertError",
    "MeasurementMatrix",
    "PosteriorSummary",
    "Reconstruction",
    "TomographyError",
    "apply_confusion",
    "bayesian_refine",
    "linear_inversion",
    "measurement_matrix",
    "measurement_probability",
    "optimize_displacements",
    "outcome_probabilities",
    "random_code_state",
    "reconstruct",
]
