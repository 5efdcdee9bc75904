"""
Dense small-dimension ground truth.

Nothing here uses the sorted-spectrum shortcuts: states are explicit vectors
and matrices, unitaries are optimized directly, and the XY chain is
diagonalized in the full 2^L space. The certification suites compare these
numbers against the spectral formulas of the other modules.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import unitary_group

from errors import ConfigError, NumericQualityError
from logger import logger
from settings import ORACLE_RESTARTS, ORACLE_SEED, ORACLE_STEPS, ORACLE_TOL, THREADS
from spectra import Spectrum, fidelity_sorted, l1_sorted, make_spectrum
from utils import parallel_map

NORM_TOL = 1e-10
MAX_SIDE = 12
MAX_MIXED_DIM = 16
MAX_CHAIN = 12

# Field added to break ground-state degeneracies deterministically
SYMMETRY_BREAKING_FIELD = 1e-8

_SWEEPS = 1000


@dataclass(frozen=True, eq=False)
class DenseState:
    """Pure bipartite state (amplitude matrix) or mixed monopartite state (rho)."""

    amplitudes: np.ndarray | None = None
    rho: np.ndarray | None = None

    def __post_init__(self):
        if (self.amplitudes is None) == (self.rho is None):
            raise ConfigError("DenseState needs exactly one of amplitudes or rho")
        if self.amplitudes is not None:
            amplitudes = np.atleast_2d(np.asarray(self.amplitudes, dtype=complex))
            if abs(np.linalg.norm(amplitudes) - 1) > NORM_TOL:
                raise ConfigError("amplitudes must have unit Frobenius norm")
            object.__setattr__(self, "amplitudes", amplitudes)
        else:
            rho = np.asarray(self.rho, dtype=complex)
            if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
                raise ConfigError("rho must be a square matrix")
            if not np.allclose(rho, rho.conj().T, atol=NORM_TOL):
                raise ConfigError("rho must be Hermitian")
            if abs(np.trace(rho).real - 1) > NORM_TOL:
                raise ConfigError("rho must have unit trace")
            if np.linalg.eigvalsh(rho).min() < -NORM_TOL:
                raise ConfigError("rho must be positive semidefinite")
            object.__setattr__(self, "rho", rho)

    @classmethod
    def pure(cls, amplitudes) -> "DenseState":
        return cls(amplitudes=amplitudes)

    @classmethod
    def mixed(cls, rho) -> "DenseState":
        return cls(rho=rho)

    @property
    def is_pure(self) -> bool:
        return self.amplitudes is not None

    @property
    def dims(self) -> tuple[int, ...]:
        return self.amplitudes.shape if self.is_pure else self.rho.shape[:1]


@dataclass(frozen=True)
class OracleReport:
    op: str
    seed: int
    instances: int
    max_abs_deviation: float
    passed: bool
    values: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "op": self.op,
            "seed": self.seed,
            "instances": self.instances,
            "max_abs_deviation": self.max_abs_deviation,
            "pass": self.passed,
        }


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(d, random_state=rng) if d > 1 else np.exp(2j * np.pi * rng.random((1, 1)))


def random_spectrum(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(n))


def random_pure_state(dA: int, dB: int, rng: np.random.Generator) -> DenseState:
    amplitudes = rng.normal(size=(dA, dB)) + 1j * rng.normal(size=(dA, dB))
    return DenseState.pure(amplitudes / np.linalg.norm(amplitudes))


def random_density_matrix(d: int, rng: np.random.Generator, rank: int | None = None) -> DenseState:
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DenseState.mixed(rho / np.trace(rho).real)


def schmidt_spectrum(state: DenseState) -> Spectrum:
    """Squared singular values of the amplitude matrix."""
    if not state.is_pure:
        raise ConfigError("schmidt_spectrum needs a pure state")
    try:
        singular = scipy.linalg.svdvals(state.amplitudes)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericQualityError(f"SVD failed: {e}") from e
    return make_spectrum(singular**2, tol=NORM_TOL)


def _alternating_overlap(X: np.ndarray, Y: np.ndarray, uB: np.ndarray, tol: float) -> float:
    """Maximize Re tr(Y^dag uA X uB^T) by alternating polar updates."""
    overlap = -math.inf
    for _ in range(_SWEEPS):
        W, _, Vh = np.linalg.svd(X @ uB.T @ Y.conj().T)
        uA = Vh.conj().T @ W.conj().T
        W, S, Vh = np.linalg.svd(Y.conj().T @ uA @ X)
        uB = W.conj() @ Vh.conj()
        current = float(np.sum(S))
        if current < overlap - 1e-12:
            raise NumericQualityError(
                f"alternating sweep decreased the overlap ({overlap!r} -> {current!r})"
            )
        if current - overlap < tol:
            return max(current, overlap)
        overlap = current
    logger.debug(f"alternating maximization stopped after {_SWEEPS} sweeps")
    return overlap


def min_vector_error_local_unitaries(
    s1: DenseState,
    s2: DenseState,
    restarts: int = ORACLE_RESTARTS,
    tol: float = ORACLE_TOL,
    seed: int = ORACLE_SEED,
    threads: int = 1,
) -> float:
    """min over uA, uB of ||(uA x uB) s1 - s2|| with seeded restarts."""
    if not (s1.is_pure and s2.is_pure):
        raise ConfigError("vector error needs pure states")
    if s1.dims != s2.dims:
        raise ConfigError(f"state dimensions differ: {s1.dims} vs {s2.dims}")
    if max(s1.dims) > MAX_SIDE:
        raise ConfigError(f"dense oracle limited to {MAX_SIDE} per side, got {s1.dims}")
    if restarts < 8:
        raise ConfigError(f"use at least 8 restarts, got {restarts}")

    X, Y = s1.amplitudes, s2.amplitudes
    dB = X.shape[1]

    def run(restart: int) -> float:
        rng = np.random.default_rng([seed, restart])
        return _alternating_overlap(X, Y, haar_unitary(dB, rng), tol)

    overlap = max(parallel_map(run, range(restarts), threads))
    return math.sqrt(max(0.0, 2 - 2 * min(overlap, 1.0)))


def _trace_norm(u: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    diff = u @ A @ u.conj().T - B
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def _random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = 0.5 * (g + g.conj().T)
    return h / np.linalg.norm(h)


def min_trace_distance_unitary_orbit(
    A: DenseState,
    B: DenseState,
    restarts: int = ORACLE_RESTARTS,
    tol: float = ORACLE_TOL,
    seed: int = ORACLE_SEED,
    steps: int = ORACLE_STEPS,
    threads: int = 1,
) -> float:
    """min over unitaries u of ||u A u* - B||_1.

    Starts from eigenbasis alignment and searches geodesic perturbations
    exp(i eps H) with step halving on failure.
    """
    if A.is_pure or B.is_pure:
        raise ConfigError("trace distance oracle needs mixed states")
    if A.dims != B.dims:
        raise ConfigError(f"state dimensions differ: {A.dims} vs {B.dims}")
    d = A.dims[0]
    if d > MAX_MIXED_DIM:
        raise ConfigError(f"dense oracle limited to d <= {MAX_MIXED_DIM}, got {d}")

    rho_a, rho_b = A.rho, B.rho
    _, Ua = np.linalg.eigh(rho_a)
    _, Ub = np.linalg.eigh(rho_b)
    aligned = Ub @ Ua.conj().T
    aligned_value = _trace_norm(aligned, rho_a, rho_b)

    def run(restart: int) -> float:
        rng = np.random.default_rng([seed, restart])
        u = aligned
        if restart:
            u = scipy.linalg.expm(0.5j * _random_hermitian(d, rng)) @ u
        value = _trace_norm(u, rho_a, rho_b)
        eps = 0.25
        for _ in range(steps):
            trial = scipy.linalg.expm(1j * eps * _random_hermitian(d, rng)) @ u
            trial_value = _trace_norm(trial, rho_a, rho_b)
            if trial_value < value - tol:
                u, value = trial, trial_value
            else:
                eps *= 0.5
        return value

    best = min(parallel_map(run, range(restarts), threads))
    if best < aligned_value - 1e-9:
        logger.warning(f"unitary search beat eigenbasis alignment: {best!r} < {aligned_value!r}")
    return min(best, aligned_value)


def _site_operator(op: sp.spmatrix, site: int, L: int) -> sp.spmatrix:
    left = sp.identity(2**site, format="csr")
    right = sp.identity(2 ** (L - site - 1), format="csr")
    return sp.kron(left, sp.kron(op, right, format="csr"), format="csr")


def xy_hamiltonian(L: int, gamma: float, h: float) -> sp.csr_matrix:
    """Open-chain XY Hamiltonian as a sparse real matrix."""
    X = sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]])
    # sigma^y (x) sigma^y is real: -[[0,1],[-1,0]] (x) [[0,1],[-1,0]]
    iY = sp.csr_matrix([[0.0, 1.0], [-1.0, 0.0]])
    Z = sp.csr_matrix([[1.0, 0.0], [0.0, -1.0]])

    H = sp.csr_matrix((2**L, 2**L))
    for j in range(L - 1):
        xx = _site_operator(X, j, L) @ _site_operator(X, j + 1, L)
        yy = -(_site_operator(iY, j, L) @ _site_operator(iY, j + 1, L))
        H = H - 0.5 * (1 + gamma) * xx - 0.5 * (1 - gamma) * yy
    for j in range(L):
        H = H - h * _site_operator(Z, j, L)
    return H.tocsr()


def exact_diag_xy(L: int, gamma: float, h: float) -> Spectrum:
    """Half-chain spectrum of the dense XY ground state."""
    if L % 2 or not 2 <= L <= MAX_CHAIN:
        raise ConfigError(f"exact diagonalization needs even L in [2, {MAX_CHAIN}], got {L}")

    H = xy_hamiltonian(L, gamma, h + SYMMETRY_BREAKING_FIELD)
    try:
        if H.shape[0] <= 256:
            energies, vectors = np.linalg.eigh(H.toarray())
        else:
            energies, vectors = spla.eigsh(H, k=2, which="SA", tol=1e-14)
            order = np.argsort(energies)
            energies, vectors = energies[order], vectors[:, order]
    except (np.linalg.LinAlgError, spla.ArpackError) as e:
        raise NumericQualityError(f"ground state eigensolver failed: {e}") from e

    gap = energies[1] - energies[0]
    if gap < 1e-10:
        raise NumericQualityError(f"ground state degenerate within {gap:.2e} at L={L}, h={h}")
    logger.debug(f"XY L={L} gamma={gamma} h={h}: E0={energies[0]:.12f}, gap={gap:.3e}")

    half = 2 ** (L // 2)
    psi = vectors[:, 0].reshape(half, half)
    rho = psi @ psi.conj().T
    if abs(np.trace(rho).real - 1) > 1e-12:
        raise NumericQualityError("partial trace lost normalization")
    eigenvalues = np.linalg.eigvalsh(rho)
    if eigenvalues.min() < -NORM_TOL:
        raise NumericQualityError(f"reduced state not positive: {eigenvalues.min()!r}")
    return make_spectrum(np.clip(eigenvalues, 0.0, None), tol=1e-12)


def _diagonal_in_random_basis(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = haar_unitary(len(weights), rng)
    return u @ np.diag(weights) @ u.conj().T


def monopartite_to_bipartite_check(
    omega: Spectrum, pair, tol: float = 1e-6, seed: int = ORACLE_SEED
) -> OracleReport:
    """Dense check of vector_error <= sqrt(trace_error) for omega (x) phi -> omega (x) psi."""
    a = np.kron(omega.expanded(), pair.phi.expanded())
    b = np.kron(omega.expanded(), pair.psi.expanded())
    dim = max(len(a), len(b))
    if dim * dim > MAX_SIDE * MAX_SIDE:
        raise ConfigError(f"dense implication check limited to {MAX_SIDE * MAX_SIDE} amplitudes")
    a = np.pad(a, (0, dim - len(a)))
    b = np.pad(b, (0, dim - len(b)))

    rng = np.random.default_rng(seed)
    trace_error = min_trace_distance_unitary_orbit(
        DenseState.mixed(_diagonal_in_random_basis(a, rng)),
        DenseState.mixed(_diagonal_in_random_basis(b, rng)),
        seed=seed,
    )
    X = haar_unitary(dim, rng) @ np.diag(np.sqrt(a)) @ haar_unitary(dim, rng).T
    Y = haar_unitary(dim, rng) @ np.diag(np.sqrt(b)) @ haar_unitary(dim, rng).T
    vector_error = min_vector_error_local_unitaries(
        DenseState.pure(X), DenseState.pure(Y), seed=seed
    )
    excess = vector_error - math.sqrt(trace_error)
    return OracleReport(
        "monopartite_to_bipartite_check",
        seed,
        1,
        max(0.0, excess),
        excess <= tol,
        {"vector_error": vector_error, "trace_error": trace_error},
    )


def _report(op: str, seed: int, deviations: list[float], tolerance: float) -> OracleReport:
    worst = max(deviations) if deviations else 0.0
    report = OracleReport(op, seed, len(deviations), worst, worst <= tolerance)
    log = logger.success if report.passed else logger.error
    log(f"{op}: {len(deviations)} instances, max deviation {worst:.3e}")
    return report


def certify_vector_error(
    seed: int = ORACLE_SEED, instances: int = 200, max_dim: int = 4, threads: int = THREADS
) -> OracleReport:
    """Alternating local-unitary oracle against sqrt(2 - 2 fidelity_sorted)."""

    def instance(i: int) -> float:
        rng = np.random.default_rng([seed, i])
        dA, dB = rng.integers(1, max_dim + 1, size=2)
        s1, s2 = random_pure_state(dA, dB, rng), random_pure_state(dA, dB, rng)
        oracle = min_vector_error_local_unitaries(s1, s2, seed=seed + i)
        overlap = fidelity_sorted(schmidt_spectrum(s1), schmidt_spectrum(s2)).lo
        return abs(oracle - math.sqrt(max(0.0, 2 - 2 * overlap)))

    return _report("min_vector_error_local_unitaries", seed, parallel_map(instance, range(instances), threads), 1e-6)


def certify_trace_distance(
    seed: int = ORACLE_SEED, instances: int = 200, max_dim: int = 6, threads: int = THREADS
) -> OracleReport:
    """Unitary-orbit trace distance oracle against l1_sorted of the eigenvalues."""

    def instance(i: int) -> float:
        rng = np.random.default_rng([seed, i])
        d = int(rng.integers(1, max_dim + 1))
        A, B = random_density_matrix(d, rng), random_density_matrix(d, rng)
        oracle = min_trace_distance_unitary_orbit(A, B, seed=seed + i)
        spectral = l1_sorted(
            make_spectrum(np.linalg.eigvalsh(A.rho), tol=NORM_TOL),
            make_spectrum(np.linalg.eigvalsh(B.rho), tol=NORM_TOL),
        ).point
        return abs(oracle - spectral)

    return _report("min_trace_distance_unitary_orbit", seed, parallel_map(instance, range(instances), threads), 1e-6)


def certify_implication(
    seed: int = ORACLE_SEED, instances: int = 100, threads: int = THREADS
) -> OracleReport:
    """Random small omega, phi, psi: vector error never exceeds sqrt(trace error)."""
    from embezzlement import TargetPair

    def instance(i: int) -> float:
        rng = np.random.default_rng([seed, i])
        r = int(rng.integers(1, 4))
        d = int(rng.integers(2, 12 // r + 1))
        omega = make_spectrum(random_spectrum(r, rng))
        pair = TargetPair.from_weights(random_spectrum(d, rng), random_spectrum(d, rng), d)
        return monopartite_to_bipartite_check(omega, pair, seed=seed + i).max_abs_deviation

    return _report("monopartite_to_bipartite_check", seed, parallel_map(instance, range(instances), threads), 1e-6)
