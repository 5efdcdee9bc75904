"""
Certified sorted-spectrum calculus.

A Spectrum is the sorted list of squared Schmidt coefficients of a pure
bipartite state (or the eigenvalues of a mixed state) together with a
certified account of what truncation threw away. Everything downstream
reduces to two functionals on aligned sorted spectra: the l1 distance and
the overlap sum(sqrt(p_i * q_i)).

Equal levels may be stored once with a multiplicity. All statements about
atoms refer to the expanded list; the truncation budget K bounds the number
of stored levels.
"""

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from errors import ConfigError, SpectrumError
from logger import logger
from settings import DENSE_PRODUCT_LIMIT, MASS_TOLERANCE, MERGE_RTOL, OVERSAMPLING

# Relative slack tolerated when comparing the tail atom bound with kept levels
_BOUND_RTOL = 1e-9

# Mass deficits below this are rounding residue when nothing was discarded
ROUNDING_SLACK = 1e-13


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"Interval bounds must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"Empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def exact(cls, value: float) -> "Interval":
        return cls(value, value)

    @classmethod
    def around(cls, value: float, slack: float, floor: float, ceil: float) -> "Interval":
        """[value - slack, value + slack] clamped to [floor, ceil]."""
        value = min(max(value, floor), ceil)
        return cls(max(floor, value - slack), min(ceil, value + slack))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def point(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= value <= self.hi + slack

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    def __repr__(self):
        return f"Interval({self.lo:.12g}, {self.hi:.12g})"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Nonincreasing weights with certified tail.

    weights[i] is a level repeated multiplicities[i] times. tail_mass is the
    probability carried by discarded atoms and tail_atom_bound bounds every
    single discarded atom; kept levels are never smaller than that bound.
    """

    weights: np.ndarray
    tail_mass: float = 0.0
    tail_atom_bound: float = 0.0
    multiplicities: np.ndarray | None = field(default=None)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if self.multiplicities is None:
            counts = np.ones_like(weights)
        else:
            counts = np.array(self.multiplicities, dtype=float).reshape(-1)
        weights.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "multiplicities", counts)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))
        object.__setattr__(self, "tail_atom_bound", float(self.tail_atom_bound))
        self._validate()

    def _validate(self) -> None:
        w, c = self.weights, self.multiplicities
        if len(c) != len(w):
            raise SpectrumError("multiplicities must match weights in length")
        if len(w) and (not np.all(np.isfinite(w)) or np.any(w <= 0)):
            raise SpectrumError("stored weights must be finite and strictly positive")
        if np.any(c < 1):
            raise SpectrumError("multiplicities must be at least 1")
        if np.any(np.diff(w) > 0):
            raise SpectrumError("weights must be sorted nonincreasing")
        if self.tail_mass < 0 or self.tail_atom_bound < 0:
            raise SpectrumError("tail quantities must be nonnegative")
        if abs(self.mass + self.tail_mass - 1.0) > MASS_TOLERANCE:
            raise SpectrumError(
                f"mass {self.mass + self.tail_mass!r} differs from 1 beyond {MASS_TOLERANCE}"
            )
        if self.tail_mass == 0 and self.tail_atom_bound != 0:
            raise SpectrumError("tail_atom_bound must vanish without tail mass")
        if (
            len(w)
            and self.tail_mass > 0
            and self.tail_atom_bound > w[-1] * (1 + _BOUND_RTOL)
        ):
            raise SpectrumError(
                f"tail_atom_bound {self.tail_atom_bound!r} exceeds smallest kept level {w[-1]!r}"
            )

    @property
    def mass(self) -> float:
        return math.fsum(self.weights * self.multiplicities)

    @property
    def level_count(self) -> int:
        return len(self.weights)

    @property
    def atom_count(self) -> int:
        return int(round(math.fsum(self.multiplicities)))

    @property
    def is_exact(self) -> bool:
        return self.tail_mass == 0

    def expanded(self) -> np.ndarray:
        return np.repeat(self.weights, self.multiplicities.astype(np.int64))

    def to_json(self) -> dict:
        data = {
            "weights": [float(w) for w in self.weights],
            "tail_mass": self.tail_mass,
            "tail_atom_bound": self.tail_atom_bound,
        }
        if np.any(self.multiplicities != 1):
            data["multiplicities"] = [float(c) for c in self.multiplicities]
        return data

    @classmethod
    def from_json(cls, data: dict) -> "Spectrum":
        return cls(
            np.asarray(data["weights"], dtype=float),
            data.get("tail_mass", 0.0),
            data.get("tail_atom_bound", 0.0),
            data.get("multiplicities"),
        )

    def __repr__(self):
        head = ", ".join(f"{w:.6g}" for w in self.weights[:6])
        more = ", ..." if self.level_count > 6 else ""
        return (
            f"Spectrum(levels={self.level_count}, atoms={self.atom_count}, "
            f"weights=({head}{more}), tail_mass={self.tail_mass:.3e})"
        )


def make_spectrum(
    raw: Sequence[float], tol: float = 1e-9, multiplicities: Sequence[float] | None = None
) -> Spectrum:
    """Validate, sort and clip raw weights.

    Entries up to tol are dropped into the tail, and so is any mass deficit;
    the kept weights are not renormalized. A mass excess within tol is scaled
    away so that the total never exceeds one.
    """
    values = np.asarray(raw, dtype=float).reshape(-1)
    counts = (
        np.ones_like(values)
        if multiplicities is None
        else np.asarray(multiplicities, dtype=float).reshape(-1)
    )
    if len(counts) != len(values):
        raise SpectrumError("multiplicities must match weights in length")
    if not np.all(np.isfinite(values)):
        raise SpectrumError("weights must be finite")
    if np.any(values < -tol):
        raise SpectrumError(f"negative weight {values.min()!r} beyond tolerance {tol}")
    total = math.fsum(values * counts)
    if abs(total - 1.0) > tol:
        raise SpectrumError(f"weights sum to {total!r}, not 1 within {tol}")

    keep = values > tol
    kept, kept_counts = values[keep], counts[keep]
    order = np.argsort(-kept)
    kept, kept_counts = kept[order], kept_counts[order]

    kept_mass = math.fsum(kept * kept_counts)
    if kept_mass > 1.0:
        kept = kept / kept_mass
        kept_mass = math.fsum(kept * kept_counts)

    tail = _residual(kept_mass, discarded=not np.all(keep))
    return Spectrum(kept, tail, _tail_bound(tail, kept, 0.0), kept_counts)


def pure() -> Spectrum:
    return Spectrum(np.ones(1))


def uniform(d: int) -> Spectrum:
    if d < 1:
        raise ConfigError(f"uniform spectrum needs d >= 1, got {d}")
    return Spectrum(np.array([1.0 / d]), multiplicities=np.array([float(d)]))


def _residual(kept_mass: float, discarded: bool) -> float:
    tail = max(0.0, 1.0 - kept_mass)
    if not discarded and tail <= ROUNDING_SLACK:
        return 0.0
    return tail


def _tail_bound(tail: float, kept: np.ndarray, bound: float) -> float:
    if tail <= 0:
        return 0.0
    if bound <= 0:
        bound = tail
    bound = min(bound, tail)
    if len(kept):
        bound = min(bound, float(kept[-1]))
    return bound


def _merge_levels(values: np.ndarray, counts: np.ndarray, rtol: float):
    """Collapse consecutive (sorted) values equal within rtol into one level."""
    if len(values) <= 1:
        return values, counts
    starts = np.flatnonzero(values[1:] < values[:-1] * (1.0 - rtol)) + 1
    starts = np.concatenate(([0], starts))
    if len(starts) == len(values):
        return values, counts
    merged_counts = np.add.reduceat(counts, starts)
    merged_values = np.add.reduceat(values * counts, starts) / merged_counts
    # weighted means of sorted groups stay sorted up to rounding
    merged_values = np.minimum.accumulate(merged_values)
    return merged_values, merged_counts


def _finish(
    values: np.ndarray, counts: np.ndarray, frontier: float, unseen: float
) -> Spectrum:
    """Build a truncated Spectrum, moving kept levels below `unseen` into the tail."""
    values, counts = _merge_levels(values, counts, MERGE_RTOL)
    if unseen > 0 and len(values):
        keep = values >= unseen
        values, counts = values[keep], counts[keep]
    kept_mass = math.fsum(values * counts)
    if kept_mass > 1.0:
        values = values / kept_mass
        kept_mass = math.fsum(values * counts)
    tail = _residual(kept_mass, discarded=frontier > 0 or unseen > 0)
    return Spectrum(values, tail, _tail_bound(tail, values, max(frontier, unseen)), counts)


def _check_k(k: int) -> int:
    k = int(k)
    if k < 1:
        raise ConfigError(f"truncation budget K must be positive, got {k}")
    return k


def _unseen_product_bound(p: Spectrum, q: Spectrum) -> float:
    """Bound on any product involving an atom from an input tail."""
    bound = 0.0
    p_top = p.weights[0] if p.level_count else p.tail_atom_bound
    q_top = q.weights[0] if q.level_count else q.tail_atom_bound
    if p.tail_mass > 0:
        bound = max(bound, p.tail_atom_bound * q_top)
    if q.tail_mass > 0:
        bound = max(bound, q.tail_atom_bound * p_top)
    return bound


def _top_products_dense(p: Spectrum, q: Spectrum, k: int):
    values = np.outer(p.weights, q.weights).ravel()
    counts = np.outer(p.multiplicities, q.multiplicities).ravel()
    if len(values) > k:
        part = np.argpartition(-values, k)[: k + 1]
        order = part[np.argsort(-values[part])]
        frontier = float(values[order[k]])
        order = order[:k]
    else:
        order = np.argsort(-values)
        frontier = 0.0
    return values[order], counts[order], frontier


def _top_products_heap(p: Spectrum, q: Spectrum, k: int):
    """Best-first walk over the monotone product grid p_i * q_j."""
    pw, qw = p.weights, q.weights
    pc, qc = p.multiplicities, q.multiplicities
    frontier = [(-pw[0] * qw[0], 0, 0)]
    visited = {(0, 0)}
    values: list[float] = []
    counts: list[float] = []

    while frontier and len(values) < k:
        neg, i, j = heapq.heappop(frontier)
        values.append(-neg)
        counts.append(pc[i] * qc[j])
        for a, b in ((i + 1, j), (i, j + 1)):
            if a < len(pw) and b < len(qw) and (a, b) not in visited:
                visited.add((a, b))
                heapq.heappush(frontier, (-pw[a] * qw[b], a, b))

    top = -frontier[0][0] if frontier else 0.0
    return np.asarray(values), np.asarray(counts), float(top)


def tensor(p: Spectrum, q: Spectrum, k: int) -> Spectrum:
    """K largest products of p and q in nonincreasing order, with certified tail."""
    k = _check_k(k)
    if p.level_count == 0 or q.level_count == 0:
        return Spectrum(np.empty(0), 1.0, min(1.0, p.tail_atom_bound + q.tail_atom_bound))

    if p.level_count * q.level_count <= DENSE_PRODUCT_LIMIT:
        values, counts, frontier = _top_products_dense(p, q, k)
    else:
        values, counts, frontier = _top_products_heap(p, q, k)

    result = _finish(values, counts, frontier, _unseen_product_bound(p, q))
    if result.tail_mass > 0:
        logger.debug(
            f"tensor {p.level_count}x{q.level_count} -> {result.level_count} levels, "
            f"tail {result.tail_mass:.3e}"
        )
    return result


def truncate(p: Spectrum, k: int) -> Spectrum:
    k = _check_k(k)
    if p.level_count <= k:
        return p
    frontier = max(float(p.weights[k]), p.tail_atom_bound)
    values, counts = p.weights[:k], p.multiplicities[:k]
    tail = max(0.0, 1.0 - math.fsum(values * counts))
    return Spectrum(values, tail, _tail_bound(tail, values, frontier), counts)


def tensor_power(p: Spectrum, m: int, k: int) -> Spectrum:
    """m-fold tensor power, intermediates truncated at OVERSAMPLING * K levels."""
    k = _check_k(k)
    if m < 1:
        raise ConfigError(f"tensor power needs m >= 1, got {m}")
    inner = k * OVERSAMPLING
    result = truncate(p, inner)
    for _ in range(m - 1):
        result = tensor(result, p, inner)
    return truncate(result, k)


def tensor_all(factors: Sequence[Spectrum], k: int) -> Spectrum:
    """Iterated tensor of a list of factors with the same oversampling as tensor_power."""
    k = _check_k(k)
    inner = k * OVERSAMPLING
    result = pure()
    for factor in factors:
        result = tensor(result, factor, inner)
    return truncate(result, k)


def _values_at(p: Spectrum, cumulative: np.ndarray, starts: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cumulative, starts, side="right")
    inside = idx < len(cumulative)
    values = np.zeros(len(starts))
    values[inside] = p.weights[idx[inside]]
    return values


def _aligned(p: Spectrum, q: Spectrum):
    """Piecewise-constant alignment of two sorted spectra, zero padded.

    Returns segment lengths, start positions and the values of p and q on
    each segment.
    """
    cp = np.cumsum(p.multiplicities)
    cq = np.cumsum(q.multiplicities)
    ends = np.union1d(cp, cq)
    starts = np.concatenate(([0.0], ends[:-1])) if len(ends) else np.empty(0)
    lengths = ends - starts
    return lengths, starts, _values_at(p, cp, starts), _values_at(q, cq, starts)


def l1_sorted(p: Spectrum, q: Spectrum) -> Interval:
    """sum |p_i - q_i| over aligned sorted atoms, widened by both tails."""
    lengths, _, pv, qv = _aligned(p, q)
    value = math.fsum(lengths * np.abs(pv - qv))
    return Interval.around(value, p.tail_mass + q.tail_mass, 0.0, 2.0)


def fidelity_sorted(p: Spectrum, q: Spectrum) -> Interval:
    """sum sqrt(p_i q_i) over aligned sorted atoms.

    The truncated sum is a lower bound. Tail atoms sit after every kept atom,
    so Cauchy-Schwarz on the unseen blocks gives the upper bound.
    """
    lengths, starts, pv, qv = _aligned(p, q)
    lo = min(1.0, math.fsum(lengths * np.sqrt(pv * qv)))
    hi = lo
    if p.tail_mass > 0 or q.tail_mass > 0:
        q_beyond_p = math.fsum((lengths * qv)[starts >= p.atom_count])
        p_beyond_q = math.fsum((lengths * pv)[starts >= q.atom_count])
        hi = lo + math.sqrt(p.tail_mass * (q.tail_mass + q_beyond_p))
        hi += math.sqrt(q.tail_mass * (p.tail_mass + p_beyond_q))
    return Interval(lo, min(1.0, hi))


