import math

import numpy as np
import pytest

from embezzlement import TargetPair
from errors import ConfigError
from models import xy_half_chain_spectrum
from oracle import (
    DenseState,
    certify_implication,
    certify_trace_distance,
    certify_vector_error,
    exact_diag_xy,
    min_trace_distance_unitary_orbit,
    min_vector_error_local_unitaries,
    monopartite_to_bipartite_check,
    random_density_matrix,
    random_pure_state,
    schmidt_spectrum,
    xy_hamiltonian,
)
from spectra import fidelity_sorted, l1_sorted, make_spectrum


def linf(a, b):
    a, b = a.expanded(), b.expanded()
    n = max(len(a), len(b))
    return float(np.max(np.abs(np.pad(a, (0, n - len(a))) - np.pad(b, (0, n - len(b))))))


def test_dense_state_validation():
    with pytest.raises(ConfigError):
        DenseState()
    with pytest.raises(ConfigError):
        DenseState.pure(np.ones((2, 2)))
    with pytest.raises(ConfigError):
        DenseState.mixed(np.diag([0.7, 0.7]))
    with pytest.raises(ConfigError):
        DenseState.mixed(np.diag([1.5, -0.5]))
    assert DenseState.pure(np.eye(2) / math.sqrt(2)).dims == (2, 2)


def test_schmidt_spectrum_of_bell_state():
    s = schmidt_spectrum(DenseState.pure(np.eye(2) / math.sqrt(2)))
    assert np.allclose(s.expanded(), [0.5, 0.5])


def test_vector_error_oracle_matches_sorted_fidelity():
    rng = np.random.default_rng(0)
    for i in range(5):
        s1, s2 = random_pure_state(3, 3, rng), random_pure_state(3, 3, rng)
        oracle = min_vector_error_local_unitaries(s1, s2, seed=i)
        overlap = fidelity_sorted(schmidt_spectrum(s1), schmidt_spectrum(s2)).lo
        assert abs(oracle - math.sqrt(max(0.0, 2 - 2 * overlap))) < 1e-6


def test_vector_error_needs_enough_restarts():
    rng = np.random.default_rng(1)
    s = random_pure_state(2, 2, rng)
    with pytest.raises(ConfigError):
        min_vector_error_local_unitaries(s, s, restarts=2)


def test_trace_distance_oracle_matches_sorted_l1():
    rng = np.random.default_rng(4)
    for i in range(5):
        A, B = random_density_matrix(4, rng), random_density_matrix(4, rng)
        oracle = min_trace_distance_unitary_orbit(A, B, seed=i)
        spectral = l1_sorted(
            make_spectrum(np.linalg.eigvalsh(A.rho), tol=1e-10),
            make_spectrum(np.linalg.eigvalsh(B.rho), tol=1e-10),
        )
        assert abs(oracle - spectral.point) < 1e-6


def test_xy_hamiltonian_is_symmetric():
    H = xy_hamiltonian(4, 0.3, 0.2)
    assert H.shape == (16, 16)
    assert abs(H - H.T).max() < 1e-14


@pytest.mark.parametrize("L", [2, 4, 6, 8])
def test_free_fermion_pipeline_matches_exact_diagonalization(L):
    exact = exact_diag_xy(L, 0.0, 0.0)
    pipeline = xy_half_chain_spectrum(L, 0.0, 0.0, 4096)
    assert linf(exact, pipeline) < 1e-8


def test_exact_diag_rejects_large_or_odd_chains():
    with pytest.raises(ConfigError):
        exact_diag_xy(5, 0.0, 0.0)
    with pytest.raises(ConfigError):
        exact_diag_xy(14, 0.0, 0.0)


def test_monopartite_to_bipartite_check_passes():
    omega = make_spectrum([0.6, 0.4])
    pair = TargetPair.from_weights([1.0, 0.0], [0.5, 0.5])
    report = monopartite_to_bipartite_check(omega, pair, seed=3)
    assert report.passed
    assert report.values["vector_error"] <= math.sqrt(report.values["trace_error"]) + 1e-6


def test_small_certification_suites():
    for report in (
        certify_vector_error(seed=1, instances=10, threads=1),
        certify_trace_distance(seed=1, instances=10, threads=1),
        certify_implication(seed=1, instances=5, threads=1),
    ):
        assert report.passed, report
        assert report.to_json()["pass"] is True
        assert report.max_abs_deviation <= 1e-6


def test_product_state_against_bell_pair():
    product = DenseState.pure(np.diag([1.0, 0.0]))
    bell = DenseState.pure(np.eye(2) / math.sqrt(2))
    value = min_vector_error_local_unitaries(product, bell)
    assert abs(value - math.sqrt(2 - math.sqrt(2))) < 1e-6


def test_pure_against_maximally_mixed_qubit():
    value = min_trace_distance_unitary_orbit(
        DenseState.mixed(np.diag([1.0, 0.0])), DenseState.mixed(np.eye(2) / 2)
    )
    assert abs(value - 1.0) < 1e-9


def test_exact_diag_of_polarized_pair():
    s = exact_diag_xy(2, 0.0, 10.0)
    assert s.atom_count == 1
    assert abs(s.weights[0] - 1) < 1e-9
