"""Full-scale runs; select with `pytest -m slow`."""

import numpy as np
import pytest

from embezzlement import (
    SearchConfig,
    TargetPair,
    bipartite_error,
    convergence_study,
    kappa_estimate,
    kappa_reference,
    monopartite_error,
)
from models import (
    Geometric,
    geometric_spectrum,
    half_chain_occupations,
    xy_correlation_matrix,
    xy_half_chain_spectrum,
)
from oracle import certify_implication, certify_trace_distance, certify_vector_error, exact_diag_xy
from spectra import fidelity_sorted, l1_sorted, make_spectrum, pure, uniform

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("m", [4, 8, 12])
def test_uniform_omega_plateau(m):
    omega = geometric_spectrum(1.0, m, 1 << 17)
    previous = 0.0
    for d in (2, 4, 8, 16, 32, 64):
        value = kappa_estimate(omega, d).value
        assert abs(value.lo - 2 * (1 - 1 / d)) < 1e-6
        assert value.lo > previous
        previous = value.lo


@pytest.mark.parametrize("weights", [[1.0], [0.7, 0.3], [0.4, 0.3, 0.2, 0.1]])
def test_small_omega_reaches_witness_bound(weights):
    omega = make_spectrum(weights)
    r = omega.atom_count
    for d in (8, 16):
        assert kappa_estimate(omega, d).value.hi >= 2 * (1 - r / d) - 1e-6


@pytest.mark.parametrize("lam, d_list", [(0.25, [2]), (0.1, [2, 3, 4])])
def test_kappa_converges_to_reference(lam, d_list):
    sizes = [8, 16, 20, 24, 28]
    rows = convergence_study(Geometric(lam, 1), d_list, sizes, [1 << 17], search=SearchConfig(tail_cap=1e-4))
    target = kappa_reference(lam)
    for d in d_list:
        series = [r.value.lo for r in rows if r.d == d]
        assert all(abs(a - b) < 0.01 for a, b in zip(series[-3:], series[-2:]))
    final = max(r.value.lo for r in rows if r.size == sizes[-1])
    assert abs(final - target) < 0.05


def test_half_lambda_decreases_toward_reference():
    rows = convergence_study(Geometric(0.5, 1), [2], [8, 16, 24, 28], [1 << 17])
    values = [r.value.lo for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
    assert values[-1] > kappa_reference(0.5)


def test_geometric_chain_invariance_and_decrease():
    lam = 0.25
    psi = TargetPair(pure(), make_spectrum([1 / (1 + lam), lam / (1 + lam)]), 2)
    values = []
    for sites in range(4, 29, 4):
        omega = geometric_spectrum(lam, sites, 1 << 17)
        values.append(monopartite_error(omega, psi).lo)
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_oracle_suites_full_size():
    assert certify_vector_error(seed=7, instances=200, max_dim=4).passed
    assert certify_trace_distance(seed=7, instances=200, max_dim=6).passed
    assert certify_implication(seed=7, instances=100).passed


def test_hellinger_l1_identity_on_many_pairs():
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        p = make_spectrum(rng.dirichlet(np.ones(int(rng.integers(1, 12)))), tol=1e-15)
        q = make_spectrum(rng.dirichlet(np.ones(int(rng.integers(1, 12)))), tol=1e-15)
        assert 2 - 2 * fidelity_sorted(p, q).lo <= l1_sorted(p, q).hi + 1e-12


@pytest.mark.parametrize("L", [10, 12])
def test_pipeline_matches_exact_diag_on_larger_chains(L):
    exact = exact_diag_xy(L, 0.0, 0.0).expanded()
    pipeline = xy_half_chain_spectrum(L, 0.0, 0.0, 1 << 16).expanded()
    n = max(len(exact), len(pipeline))
    gap = np.abs(np.pad(exact, (0, n - len(exact))) - np.pad(pipeline, (0, n - len(pipeline))))
    assert gap.max() < 1e-8


def test_bell_pair_error_decreases_along_xx_chain():
    # half-chain lengths share parity; L = 2 mod 4 adds an exact nu = 1/2 mode
    bell = TargetPair(pure(), uniform(2), 2)
    errors = [bipartite_error(xy_half_chain_spectrum(L, 0.0, 0.0, 1 << 16), bell) for L in (20, 52, 100, 200)]
    for longer, shorter in zip(errors[1:], errors):
        assert longer.hi < shorter.lo
    assert abs(errors[0].lo - 0.5210) < 1e-3
    assert abs(errors[1].lo - 0.4886) < 1e-3
    assert abs(errors[-1].lo - 0.4470) < 1e-3


def test_odd_half_chain_breaks_the_ordering():
    bell = TargetPair(pure(), uniform(2), 2)
    nu = half_chain_occupations(xy_correlation_matrix(50, 0.0, 0.0), 50).nu
    assert np.min(np.abs(nu - 0.5)) < 1e-9
    spectrum = xy_half_chain_spectrum(50, 0.0, 0.0, 1 << 16)
    assert abs(bipartite_error(spectrum, bell).lo - 0.6189) < 1e-3
    assert bipartite_error(spectrum, bell).lo > bipartite_error(xy_half_chain_spectrum(20, 0.0, 0.0, 1 << 16), bell).hi


def test_halved_budget_still_contains_exact_values():
    bell = TargetPair(pure(), uniform(2), 2)
    spectrum = xy_half_chain_spectrum(40, 0.0, 0.0, 1 << 16)
    full = bipartite_error(spectrum, bell, k=1 << 16)
    for k in (1 << 12, 1 << 10):
        halved = bipartite_error(xy_half_chain_spectrum(40, 0.0, 0.0, k), bell, k=k, tail_cap=0.1)
        assert halved.contains(full.lo, slack=full.width)
