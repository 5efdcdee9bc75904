import math

import numpy as np
import pytest

from embezzlement import (
    SearchConfig,
    TargetPair,
    _better,
    bipartite_error,
    convergence_study,
    kappa_estimate,
    kappa_range,
    kappa_reference,
    monopartite_error,
    powers_type,
    search_ceiling,
    simplex_grid,
    target_for,
    type_invariants,
    vdh_bound,
    witness_maximal_error,
)
from errors import ConfigError, TruncationBudgetError
from models import Geometric, VanDamHayden, compatible_qubit, geometric_spectrum, van_dam_hayden_spectrum
from spectra import make_spectrum, pure, truncate, uniform

FAST = SearchConfig(threads=1, refine_starts=2, random_starts=1, k=4096)


def bell_target(d=2):
    return TargetPair(pure(), uniform(d), d)


def test_vdh_bound_and_reference():
    assert abs(vdh_bound(4096, 2) - 1 / 3) < 1e-15
    assert abs(kappa_reference(0.25) - 2 / 3) < 1e-15
    assert kappa_reference(0) == 2
    assert kappa_reference(1) == 0
    with pytest.raises(ConfigError):
        vdh_bound(1, 2)
    with pytest.raises(ConfigError):
        kappa_reference(-0.1)


def test_target_pair_validation():
    with pytest.raises(ConfigError):
        TargetPair(pure(), uniform(4), 2)
    with pytest.raises(ConfigError):
        TargetPair(truncate(make_spectrum([0.5, 0.3, 0.2]), 2), pure(), 3)
    pair = TargetPair.from_weights([0.25, 0.75], [1.0, 0.0, 0.0])
    assert pair.d == 2
    assert np.allclose(pair.phi.weights, [0.75, 0.25])
    assert pair.psi.atom_count == 1


def test_uniform_target_from_pure_omega():
    for d in (2, 3, 8):
        assert abs(monopartite_error(pure(), bell_target(d)).lo - 2 * (1 - 1 / d)) < 1e-15
    assert abs(bipartite_error(pure(), bell_target(4)).lo - 1.0) < 1e-15


def test_errors_vanish_for_equal_targets():
    omega = van_dam_hayden_spectrum(32)
    pair = TargetPair(uniform(2), uniform(2), 2)
    assert monopartite_error(omega, pair).hi == 0
    assert bipartite_error(omega, pair).hi < 1e-7


def test_vdh_within_bound():
    for exponent in range(2, 13):
        n = 2**exponent
        for d in (2, 4, 8, 16):
            bound = vdh_bound(n, d)
            if bound >= 2:
                continue
            value = bipartite_error(van_dam_hayden_spectrum(n), bell_target(d))
            assert value.hi <= bound, (n, d, value)


def test_vdh_error_decreases_with_n():
    values = [bipartite_error(van_dam_hayden_spectrum(n), bell_target()).lo for n in (16, 256, 1024, 4096)]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert 0.29 < values[-1] < 0.30


def test_truncated_error_contains_exact_value():
    omega = van_dam_hayden_spectrum(1024)
    exact = bipartite_error(omega, bell_target(), k=8192)
    assert exact.width == 0
    halved = bipartite_error(omega, bell_target(), k=512, tail_cap=0.5)
    assert halved.width > 0
    assert halved.contains(exact.lo)
    mono = monopartite_error(omega, bell_target(), k=512, tail_cap=0.5)
    assert mono.contains(monopartite_error(omega, bell_target(), k=8192).lo)


def test_truncation_budget_is_enforced():
    with pytest.raises(TruncationBudgetError) as e:
        monopartite_error(van_dam_hayden_spectrum(1024), bell_target(), k=8, tail_cap=1e-4)
    assert e.value.k == 8
    assert e.value.tail_mass > 1e-4


def test_witness_lower_bound():
    omega = make_spectrum([0.5, 0.3, 0.2])
    for d in (4, 8, 16):
        pair = witness_maximal_error(omega, d)
        assert monopartite_error(omega, pair).lo >= 2 * (1 - 3 / d) - 1e-12
    with pytest.raises(ConfigError):
        witness_maximal_error(omega, 3)
    with pytest.raises(ConfigError):
        witness_maximal_error(truncate(omega, 2), 8)


def test_simplex_grid():
    two = simplex_grid(8, 2)
    assert two == ((1.0, 0.0), (0.875, 0.125), (0.75, 0.25), (0.625, 0.375), (0.5, 0.5))
    three = simplex_grid(8, 3)
    assert len(three) == 10
    for point in three:
        assert abs(sum(point) - 1) < 1e-15
        assert list(point) == sorted(point, reverse=True)


def test_ties_prefer_lexicographically_smaller_pair():
    a = (0.5, (0.6, 0.4), (0.5, 0.5))
    b = (0.5 + 1e-14, (0.7, 0.3), (0.5, 0.5))
    assert _better(a, b)
    assert not _better(b, a)
    assert _better((0.6, (0.9, 0.1), (0.5, 0.5)), a)


def test_kappa_of_pure_omega():
    estimate = kappa_estimate(pure(), 2, FAST)
    assert abs(estimate.value.lo - 1.0) < 1e-12
    assert estimate.search_evals > 0
    assert estimate.argmax_pair.d == 2


def test_kappa_of_uniform_omega():
    omega = geometric_spectrum(1.0, 4, 4096)
    assert omega.level_count == 1
    for d in (2, 4):
        estimate = kappa_estimate(omega, d, FAST)
        assert abs(estimate.value.lo - 2 * (1 - 1 / d)) < 1e-6


def test_kappa_at_least_witness_bound():
    omega = make_spectrum([0.6, 0.4])
    estimate = kappa_estimate(omega, 4, FAST)
    assert estimate.value.hi >= 2 * (1 - 2 / 4) - 1e-6


def test_kappa_is_deterministic():
    omega = geometric_spectrum(0.25, 4, 4096)
    a = kappa_estimate(omega, 2, FAST)
    b = kappa_estimate(omega, 2, SearchConfig(threads=4, refine_starts=2, random_starts=1, k=4096))
    assert a.value == b.value
    assert a.argmax_pair.key() == b.argmax_pair.key()


def test_kappa_rejects_small_d():
    with pytest.raises(ConfigError):
        kappa_estimate(pure(), 1, FAST)


def test_target_for():
    family = Geometric(0.25, 4)
    pair = target_for("compatible", 2, family)
    assert np.allclose(pair.psi.weights, compatible_qubit(0.25).weights)
    assert target_for("uniform", 4, family).psi.atom_count == 4
    with pytest.raises(ConfigError):
        target_for("compatible", 2, VanDamHayden(8))
    with pytest.raises(ConfigError):
        target_for("ghz", 2, family)


def test_convergence_study_uniform_plateau():
    rows = convergence_study(Geometric(1.0, 1), [2, 4], [2, 4], [4096], search=FAST)
    assert [(r.size, r.d) for r in rows] == [(2, 2), (2, 4), (4, 2), (4, 4)]
    for row in rows:
        assert abs(row.value.lo - 2 * (1 - 1 / row.d)) < 1e-6
        assert not row.flagged


def test_compatible_target_error_decreases_with_sites():
    rows = convergence_study(
        Geometric(0.25, 1), [2], [4, 8, 12, 16], [8192], objective="monopartite", target="compatible"
    )
    values = [r.value for r in rows]
    assert all(b.lo <= a.hi + 1e-12 for a, b in zip(values, values[1:]))
    assert values[-1].hi < values[0].lo


def test_convergence_study_validates_schedules():
    family = Geometric(0.5, 1)
    with pytest.raises(ConfigError):
        convergence_study(family, [2, 2], [4], [64])
    with pytest.raises(ConfigError):
        convergence_study(family, [2], [4, 8, 12], [64, 128])
    with pytest.raises(ConfigError):
        convergence_study(family, [2], [4], [64], objective="entropy")


def test_bipartite_error_bounded_by_sqrt_monopartite():
    rng = np.random.default_rng(2)
    for _ in range(200):
        omega = make_spectrum(rng.dirichlet(np.ones(int(rng.integers(1, 6)))), tol=1e-15)
        d = int(rng.integers(2, 5))
        pair = TargetPair.from_weights(rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d)), d)
        mono = monopartite_error(omega, pair)
        bi = bipartite_error(omega, pair)
        assert bi.lo <= math.sqrt(mono.hi) + 1e-12


def test_worked_examples():
    half = TargetPair.from_weights([1.0], [0.5, 0.5], 2)
    assert abs(monopartite_error(pure(), half).lo - 1.0) < 1e-15
    assert abs(bipartite_error(pure(), half).lo - math.sqrt(2 - math.sqrt(2))) < 1e-12
    assert abs(vdh_bound(2**10, 2) - 0.4) < 1e-15
    assert abs(vdh_bound(2**20, 4) - 0.4) < 1e-15
    assert abs(vdh_bound(7, 7) - 4.0) < 1e-15
    assert bipartite_error(van_dam_hayden_spectrum(2**10), half).hi <= 0.4


def test_witness_examples():
    four = make_spectrum([0.4, 0.3, 0.2, 0.1])
    assert monopartite_error(four, witness_maximal_error(four, 64)).lo >= 1.875 - 1e-12
    two = make_spectrum([0.5, 0.5])
    assert monopartite_error(two, witness_maximal_error(two, 1000)).lo >= 1.996 - 1e-12


def test_powers_types():
    assert powers_type(0.0) == "I_inf"
    assert powers_type(1.0) == "II_1"
    assert powers_type(0.25) == "III_lambda"
    assert type_invariants(0.0) == (2.0, 2.0)
    assert type_invariants(1.0) == (2.0, 2.0)
    assert type_invariants(0.25) == (0.0, kappa_reference(0.25))
    assert abs(type_invariants(0.25)[1] - 2 / 3) < 1e-15
    for lam in (-0.1, 1.5):
        with pytest.raises(ConfigError):
            powers_type(lam)


@pytest.mark.parametrize("d", [2, 64])
def test_search_stops_at_ceiling(d):
    # uniform omega reaches 2 (1 - 1/d) at the witness, so no refinement runs
    omega = geometric_spectrum(1.0, 4, 4096)
    estimate = kappa_estimate(omega, d, FAST)
    assert estimate.search_evals == len(simplex_grid(FAST.mesh, d)) ** 2 + 1
    assert abs(estimate.value.lo - search_ceiling(d)) < 1e-9


def test_kappa_never_exceeds_ceiling():
    omega = geometric_spectrum(0.25, 4, 4096)
    for d in (2, 3):
        assert kappa_estimate(omega, d, FAST).value.lo <= search_ceiling(d) + 1e-12


@pytest.mark.parametrize("d", [2, 4, 8])
def test_kappa_range_of_uniform_states(d):
    states = [geometric_spectrum(1.0, m, 4096) for m in (1, 2, 3)]
    result = kappa_range(states, d, FAST)
    assert len(result.estimates) == 3
    for interval in (result.kappa_min, result.kappa_max):
        assert abs(interval.lo - 2 * (1 - 1 / d)) < 1e-6


def test_kappa_range_of_two_atom_states():
    rng = np.random.default_rng(31)
    states = [pure()] + [make_spectrum([p, 1 - p]) for p in rng.uniform(0.5, 1.0, size=3)]
    wide = kappa_range(states, 8, FAST)
    narrow = kappa_range(states, 4, FAST)
    assert wide.kappa_min.hi >= 2 * (1 - 2 / 8) - 1e-6
    assert narrow.kappa_max.lo <= search_ceiling(4) + 1e-9
    assert wide.kappa_min.hi >= narrow.kappa_max.lo - 1e-6
    assert wide.estimates[wide.argmin].value.lo == wide.kappa_min.lo
    assert narrow.estimates[narrow.argmax].value.hi == narrow.kappa_max.hi
    assert set(wide.to_json()) == {"kappa_min", "kappa_max", "argmin", "argmax"}


def test_kappa_range_needs_states():
    with pytest.raises(ConfigError):
        kappa_range([], 2, FAST)
