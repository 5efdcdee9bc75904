"""
Embezzlement error functionals and the kappa invariant.

Both errors are unitary invariant, so they are evaluated on sorted spectra:
the monopartite error is the l1 distance between the aligned spectra of
omega (x) phi and omega (x) psi, the bipartite error is sqrt(2 - 2F) with F
the aligned overlap of the same two spectra.
"""

import math
import threading
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from tqdm import tqdm

from errors import ConfigError, TruncationBudgetError
from logger import logger
from models import EmbezzlerFamily, compatible_qubit
from settings import (
    GRID_MESH,
    MAX_D,
    MIN_STEP,
    REFINE_STARTS,
    SEED,
    TAIL_CAP,
    THREADS,
    TRUNCATION_K,
)
from spectra import (
    Interval,
    Spectrum,
    fidelity_sorted,
    l1_sorted,
    make_spectrum,
    pure,
    tensor,
    uniform,
)
from utils import parallel_map

# Values this close to the ceiling 2 (1 - 1/d) end the search
CEILING_TOL = 1e-12


@dataclass(frozen=True)
class TargetPair:
    """Resource spectrum phi and target spectrum psi of dimension d."""

    phi: Spectrum
    psi: Spectrum
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"target dimension must be positive, got {self.d}")
        for name, s in (("phi", self.phi), ("psi", self.psi)):
            if s.tail_mass > 0:
                raise ConfigError(f"target spectrum {name} must be exact, has tail {s.tail_mass:.3e}")
            if s.atom_count > self.d:
                raise ConfigError(f"{name} has {s.atom_count} atoms, more than d={self.d}")

    @classmethod
    def from_weights(
        cls, phi: Sequence[float], psi: Sequence[float], d: int | None = None
    ) -> "TargetPair":
        phi_s = make_spectrum(phi, tol=1e-12)
        psi_s = make_spectrum(psi, tol=1e-12)
        # weights below tol are zeros of the simplex, not truncation
        phi_s = Spectrum(phi_s.weights / phi_s.mass, multiplicities=phi_s.multiplicities)
        psi_s = Spectrum(psi_s.weights / psi_s.mass, multiplicities=psi_s.multiplicities)
        if d is None:
            d = max(phi_s.atom_count, psi_s.atom_count)
        return cls(phi_s, psi_s, d)

    def key(self) -> tuple:
        return (tuple(self.phi.expanded()), tuple(self.psi.expanded()))

    def to_json(self) -> dict:
        return {
            "phi": [float(x) for x in self.phi.expanded()],
            "psi": [float(x) for x in self.psi.expanded()],
            "d": self.d,
        }

    @staticmethod
    def label(s: Spectrum) -> str:
        return ";".join(format(float(x), ".17g") for x in s.expanded())


@dataclass(frozen=True)
class SearchConfig:
    mesh: int = GRID_MESH
    min_step: float = MIN_STEP
    refine_starts: int = REFINE_STARTS
    random_starts: int = 2
    seed: int = SEED
    threads: int = THREADS
    k: int = TRUNCATION_K
    tail_cap: float = TAIL_CAP


@dataclass(frozen=True)
class KappaEstimate:
    value: Interval
    d: int
    truncation_K: int
    argmax_pair: TargetPair
    search_evals: int

    def to_json(self) -> dict:
        return {
            "value": self.value.to_json(),
            "d": self.d,
            "truncation_K": self.truncation_K,
            "argmax_pair": self.argmax_pair.to_json(),
            "search_evals": self.search_evals,
        }


@dataclass(frozen=True)
class ConvergenceRow:
    size: int
    d: int
    value: Interval
    argmax_pair: TargetPair | None = None
    runtime_ms: float = 0.0
    flagged: bool = False
    extra: dict = field(default_factory=dict)


def vdh_bound(n: int, d: int) -> float:
    """van Dam-Hayden error bound 4 log d / log n."""
    if n < 2 or d < 2:
        raise ConfigError(f"vdh_bound needs n >= 2 and d >= 2, got n={n}, d={d}")
    return 4 * math.log(d) / math.log(n)


def kappa_reference(lam: float) -> float:
    """Worst-case error 2 (1 - sqrt(lam)) / (1 + sqrt(lam)) of a III_lambda factor."""
    if not 0 <= lam <= 1:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    root = math.sqrt(lam)
    return 2 * (1 - root) / (1 + root)


def powers_type(lam: float) -> str:
    """Factor type of the constant-lambda Powers chain."""
    if not 0 <= lam <= 1:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0:
        return "I_inf"
    if lam == 1:
        return "II_1"
    return "III_lambda"


def type_invariants(lam: float) -> tuple[float, float]:
    """(kappa_min, kappa_max) of the constant-lambda Powers factor.

    Types I and II admit no embezzling state, so both invariants are 2 there.
    """
    if powers_type(lam) == "III_lambda":
        return 0.0, kappa_reference(lam)
    return 2.0, 2.0


def _composite(omega: Spectrum, target: Spectrum, k: int, tail_cap: float) -> Spectrum:
    result = tensor(omega, target, k)
    if result.tail_mass > tail_cap:
        raise TruncationBudgetError(result.tail_mass, tail_cap, k)
    return result


def _budget(k: int | None, tail_cap: float | None, omega: Spectrum) -> tuple[int, float]:
    k = TRUNCATION_K if k is None else int(k)
    tail_cap = TAIL_CAP if tail_cap is None else float(tail_cap)
    if omega.tail_mass > tail_cap:
        raise TruncationBudgetError(omega.tail_mass, tail_cap, k)
    return k, tail_cap


def monopartite_error(
    omega: Spectrum, pair: TargetPair, k: int | None = None, tail_cap: float | None = None
) -> Interval:
    """inf_u || u (omega x phi) u* - omega x psi ||_1 on sorted spectra."""
    k, tail_cap = _budget(k, tail_cap, omega)
    a = _composite(omega, pair.phi, k, tail_cap)
    b = _composite(omega, pair.psi, k, tail_cap)
    return l1_sorted(a, b)


def bipartite_error(
    omega: Spectrum, pair: TargetPair, k: int | None = None, tail_cap: float | None = None
) -> Interval:
    """Minimal vector error over local unitaries, sqrt(2 - 2F)."""
    k, tail_cap = _budget(k, tail_cap, omega)
    a = _composite(omega, pair.phi, k, tail_cap)
    b = _composite(omega, pair.psi, k, tail_cap)
    overlap = fidelity_sorted(a, b)
    lo = math.sqrt(max(0.0, 2 - 2 * overlap.hi))
    hi = math.sqrt(max(0.0, 2 - 2 * overlap.lo))
    return Interval(min(lo, 2.0), min(hi, 2.0))


def witness_maximal_error(omega: Spectrum, d: int) -> TargetPair:
    """phi pure, psi uniform_d: error at least 2 (1 - r/d) for r atoms in omega."""
    if omega.tail_mass > 0:
        raise ConfigError("maximal-error witness needs an exact (untruncated) omega")
    r = omega.atom_count
    if d <= r:
        raise ConfigError(f"witness needs d > {r} (atom count of omega), got d={d}")
    return TargetPair(pure(), uniform(d), d)


@lru_cache(maxsize=64)
def simplex_grid(mesh: int, d: int) -> tuple[tuple[float, ...], ...]:
    """Nonincreasing points of the (d-1)-simplex with coordinates in multiples of 1/mesh."""

    def partitions(total: int, parts: int, cap: int):
        if total == 0:
            yield ()
            return
        if parts == 0:
            return
        for first in range(min(total, cap), 0, -1):
            for rest in partitions(total - first, parts - 1, first):
                yield (first,) + rest

    points = []
    for parts in partitions(mesh, d, mesh):
        padded = parts + (0,) * (d - len(parts))
        points.append(tuple(x / mesh for x in padded))
    return tuple(points)


class _Objective:
    """Counts evaluations of the monopartite error at fixed omega."""

    def __init__(self, omega: Spectrum, d: int, search: SearchConfig):
        self.omega = omega
        self.d = d
        self.search = search
        self.evals = 0
        self._lock = threading.Lock()

    def composite(self, weights: Sequence[float]) -> Spectrum:
        target = make_spectrum(weights, tol=1e-12)
        target = Spectrum(target.weights / target.mass, multiplicities=target.multiplicities)
        return _composite(self.omega, target, self.search.k, self.search.tail_cap)

    def pair_value(self, a: Spectrum, b: Spectrum) -> float:
        with self._lock:
            self.evals += 1
        return l1_sorted(a, b).lo

    def __call__(self, phi: Sequence[float], psi: Sequence[float]) -> float:
        return self.pair_value(self.composite(phi), self.composite(psi))


def _project(x: np.ndarray) -> np.ndarray | None:
    x = np.clip(x, 0.0, None)
    total = x.sum()
    if total <= 0:
        return None
    return np.sort(x / total)[::-1]


def search_ceiling(d: int) -> float:
    """Upper bound 2 (1 - 1/d) on the monopartite error at target dimension d.

    u = 1 (x) v already reaches the sorted l1 distance of phi and psi, which is
    convex on the sorted simplex and largest for pure phi and uniform psi.
    """
    return 2 * (1 - 1 / d)


def _pattern_search(
    objective: _Objective, phi: Sequence[float], psi: Sequence[float], step: float
) -> tuple[float, tuple, tuple]:
    """Coordinate pattern search on sorted (phi, psi), halving the step on failure."""
    d = objective.d
    ceiling = search_ceiling(d) - CEILING_TOL
    phi, psi = np.asarray(phi, dtype=float), np.asarray(psi, dtype=float)
    a, b = objective.composite(phi), objective.composite(psi)
    best = objective.pair_value(a, b)

    while step >= objective.search.min_step and best < ceiling:
        improved = False
        for which in range(2):
            for i in range(d):
                for sign in (1.0, -1.0):
                    base = phi if which == 0 else psi
                    trial = base.copy()
                    trial[i] += sign * step
                    trial = _project(trial)
                    if trial is None:
                        continue
                    moved = objective.composite(trial)
                    value = objective.pair_value(moved, b) if which == 0 else objective.pair_value(a, moved)
                    if value > best + 1e-15:
                        best, improved = value, True
                        if which == 0:
                            phi, a = trial, moved
                        else:
                            psi, b = trial, moved
        if not improved:
            step /= 2

    return best, tuple(phi), tuple(psi)


def _better(candidate: tuple, incumbent: tuple | None) -> bool:
    """Max by value, ties broken by the lexicographically smallest (phi, psi)."""
    if incumbent is None:
        return True
    cv, incv = round(candidate[0], 12), round(incumbent[0], 12)
    if cv != incv:
        return cv > incv
    return candidate[1:] < incumbent[1:]


def kappa_estimate(omega: Spectrum, d: int, search: SearchConfig | None = None) -> KappaEstimate:
    """Worst monopartite error over target pairs of dimension d.

    A coarse grid over sorted simplex points is followed by pattern-search
    refinement from the best grid points, the maximal-error witness and a
    few seeded random starts. Refinement is skipped once the grid or the
    witness reaches search_ceiling(d).
    """
    search = search or SearchConfig()
    if d < 2:
        raise ConfigError(f"kappa_estimate needs d >= 2, got {d}")
    if d > MAX_D:
        logger.warning(f"d={d} is above the configured max_d={MAX_D}")
    if omega.tail_mass > search.tail_cap:
        raise TruncationBudgetError(omega.tail_mass, search.tail_cap, search.k)

    grid = simplex_grid(search.mesh, d)
    objective = _Objective(omega, d, search)
    composites = parallel_map(objective.composite, grid, search.threads)
    cells = [(i, j) for i in range(len(grid)) for j in range(len(grid))]
    values = parallel_map(
        lambda ij: objective.pair_value(composites[ij[0]], composites[ij[1]]), cells, search.threads
    )
    ranked = sorted(
        ((v, grid[i], grid[j]) for v, (i, j) in zip(values, cells)),
        key=lambda c: (-round(c[0], 12), c[1], c[2]),
    )
    logger.debug(f"kappa grid d={d}: {len(cells)} cells, best {ranked[0][0]:.6f}")

    witness = (tuple([1.0] + [0.0] * (d - 1)), tuple([1.0 / d] * d))
    candidates = [ranked[0], (objective(*witness), *witness)]

    refined = []
    if max(c[0] for c in candidates) < search_ceiling(d) - CEILING_TOL:
        starts = [(c[1], c[2]) for c in ranked[: search.refine_starts]]
        starts.append(witness)
        rng = np.random.default_rng(search.seed)
        for _ in range(search.random_starts):
            phi = tuple(np.sort(rng.dirichlet(np.ones(d)))[::-1])
            psi = tuple(np.sort(rng.dirichlet(np.ones(d)))[::-1])
            starts.append((phi, psi))
        refined = parallel_map(
            lambda s: _pattern_search(objective, s[0], s[1], 1.0 / search.mesh), starts, search.threads
        )
    else:
        logger.debug(f"kappa d={d}: ceiling reached on the grid, no refinement")

    best = None
    for candidate in candidates + refined:
        if _better(candidate, best):
            best = candidate

    pair = TargetPair.from_weights(best[1], best[2], d)
    value = monopartite_error(omega, pair, search.k, search.tail_cap)
    return KappaEstimate(value, d, search.k, pair, objective.evals)


@dataclass(frozen=True)
class KappaRange:
    """Best and worst kappa over a sample of states."""

    kappa_min: Interval
    kappa_max: Interval
    argmin: int
    argmax: int
    estimates: tuple[KappaEstimate, ...]

    def to_json(self) -> dict:
        return {
            "kappa_min": self.kappa_min.to_json(),
            "kappa_max": self.kappa_max.to_json(),
            "argmin": self.argmin,
            "argmax": self.argmax,
        }


def kappa_range(states: Sequence[Spectrum], d: int, search: SearchConfig | None = None) -> KappaRange:
    """Sampled kappa_min and kappa_max at target dimension d."""
    states = list(states)
    if not states:
        raise ConfigError("kappa_range needs at least one state")
    estimates = tuple(
        kappa_estimate(omega, d, search) for omega in tqdm(states, desc=f"kappa d={d}", leave=False)
    )
    argmin = min(range(len(estimates)), key=lambda i: (estimates[i].value.lo, i))
    argmax = max(range(len(estimates)), key=lambda i: (estimates[i].value.hi, -i))
    values = [e.value for e in estimates]
    return KappaRange(
        Interval(min(v.lo for v in values), min(v.hi for v in values)),
        Interval(max(v.lo for v in values), max(v.hi for v in values)),
        argmin,
        argmax,
        estimates,
    )


def target_for(objective_target: str, d: int, family: EmbezzlerFamily) -> TargetPair:
    match objective_target:
        case "uniform":
            return TargetPair(pure(), uniform(d), d)
        case "compatible":
            lam = family.constant_lambda()
            if lam is None:
                raise ConfigError("compatible target needs a constant-lambda family")
            return TargetPair(pure(), compatible_qubit(lam), max(d, 2))
        case _:
            raise ConfigError(f"unknown target {objective_target!r}")


def _check_schedule(name: str, values: Sequence[int]) -> list[int]:
    values = [int(v) for v in values]
    if not values:
        raise ConfigError(f"{name} must be nonempty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name} must be strictly increasing, got {values}")
    return values


def _flag_reversals(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    """Flag rows whose move (beyond interval slack) opposes the first move of the sequence."""
    trend = 0
    flagged = []
    for prev, row in zip(rows, rows[1:]):
        move = 1 if row.value.lo > prev.value.hi else -1 if row.value.hi < prev.value.lo else 0
        if move and not trend:
            trend = move
        flagged.append(bool(move and move != trend))
    return [rows[0]] + [replace(r, flagged=f) for r, f in zip(rows[1:], flagged)]


def convergence_study(
    family: EmbezzlerFamily,
    d_list: Sequence[int],
    size_list: Sequence[int],
    K_schedule: Sequence[int],
    objective: str = "kappa",
    target: str = "uniform",
    search: SearchConfig | None = None,
) -> list[ConvergenceRow]:
    """Evaluate the objective over sizes (outer) and target dimensions (inner)."""
    search = search or SearchConfig()
    d_list = _check_schedule("d_list", d_list)
    size_list = _check_schedule("size_list", size_list)
    K_schedule = _check_schedule("K_schedule", K_schedule)
    if len(K_schedule) not in (1, len(size_list)):
        raise ConfigError("K_schedule needs one entry or one per size")
    if objective not in ("kappa", "monopartite", "bipartite"):
        raise ConfigError(f"unknown objective {objective!r}")

    rows: list[ConvergenceRow] = []
    for index, size in enumerate(tqdm(size_list, desc=f"{family.family} sizes", leave=False)):
        k = K_schedule[index] if len(K_schedule) > 1 else K_schedule[0]
        omega = family.with_size(size).spectrum(k)
        logger.debug(f"size {size}: {omega!r}")
        for d in d_list:
            started = time.perf_counter()
            pair = None
            if objective == "kappa":
                estimate = kappa_estimate(omega, d, replace(search, k=k))
                value, pair = estimate.value, estimate.argmax_pair
            else:
                pair = target_for(target, d, family)
                fn = monopartite_error if objective == "monopartite" else bipartite_error
                value = fn(omega, pair, k, search.tail_cap)
            elapsed = 1000 * (time.perf_counter() - started)
            rows.append(ConvergenceRow(size, d, value, pair, elapsed))

    by_d = {d: _flag_reversals([r for r in rows if r.d == d]) for d in d_list}
    rows = sorted((r for series in by_d.values() for r in series), key=lambda r: (r.size, r.d))
    for row in rows:
        if row.flagged:
            logger.warning(f"non-monotone row at size={row.size}, d={row.d}: {row.value!r}")
    return rows
