"""Embezzler families: van Dam-Hayden, Powers/Araki-Woods product chains and XY chains."""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import ClassVar, Sequence

import numpy as np

from errors import ConfigError, NumericQualityError
from logger import logger
from settings import MODE_CUTOFF, QUADRATURE_MAX_NODES, QUADRATURE_NODES, QUADRATURE_TOL
from spectra import Interval, Spectrum, make_spectrum, pure, tensor_all, tensor_power

MAX_CHAIN_LENGTH = 4096

# Eigenvalues of correlation blocks may leave [0, 1] by this much before clipping
OCCUPATION_TOL = 1e-8

ZERO_MODE_TOL = 1e-9

# Product tails up to this many sites are enumerated exactly
EXACT_TAIL_SITES = 20


def compatible_qubit(lam: float) -> Spectrum:
    """Single-site Schmidt spectrum (1, lam) / (1 + lam)."""
    if not 0 <= lam <= 1:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0:
        return pure()
    return make_spectrum([1 / (1 + lam), lam / (1 + lam)], tol=1e-15)


def van_dam_hayden_spectrum(n: int) -> Spectrum:
    """Squared Schmidt coefficients (1/j) / H_n, j = 1..n."""
    if n < 1:
        raise ConfigError(f"van Dam-Hayden needs n >= 1, got {n}")
    inverse = 1.0 / np.arange(1, n + 1, dtype=float)
    harmonic = math.fsum(inverse)
    return Spectrum(inverse / harmonic)


def araki_woods_spectrum(lambda_list: Sequence[float], k: int) -> Spectrum:
    """Half-chain spectrum of the product state with per-site ratios lambda_j."""
    factors = [compatible_qubit(lam) for lam in lambda_list]
    return tensor_all(factors, k)


def geometric_spectrum(lam: float, sites: int, k: int) -> Spectrum:
    """Constant-lambda Powers state on `sites` sites."""
    if sites < 1:
        raise ConfigError(f"geometric family needs at least one site, got {sites}")
    return tensor_power(compatible_qubit(lam), sites, k)


def _check_chain(L: int, gamma: float) -> None:
    if L % 2 or not 2 <= L <= MAX_CHAIN_LENGTH:
        raise ConfigError(f"chain length must be even and in [2, {MAX_CHAIN_LENGTH}], got {L}")
    if not 0 <= gamma <= 1:
        raise ConfigError(f"anisotropy gamma must lie in [0, 1], got {gamma}")


def _xx_finite(L: int, h: float) -> np.ndarray:
    """Exact <c_j^dag c_k> of the open XX chain: sine modes with cos(k) > h filled."""
    sites = np.arange(1, L + 1)
    momenta = np.pi * sites / (L + 1)
    modes = np.sqrt(2.0 / (L + 1)) * np.sin(np.outer(sites, momenta))
    filled = modes[:, np.cos(momenta) > h]
    return filled @ filled.T


def _xx_infinite(L: int, h: float) -> np.ndarray:
    """Thermodynamic-limit sine kernel restricted to L sites."""
    k_fermi = math.acos(min(1.0, max(-1.0, h)))
    r = np.subtract.outer(np.arange(L), np.arange(L)).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.sin(k_fermi * r) / (np.pi * r)
    np.fill_diagonal(C, k_fermi / np.pi)
    return C


def _bogoliubov_symbol(L: int, gamma: float, h: float, nodes: int) -> np.ndarray:
    """g_l for l = -(L-1)..(L-1) by trapezoid rule on `nodes` points."""
    phi = 2 * np.pi * np.arange(nodes) / nodes
    f = np.cos(phi) - h - 1j * gamma * np.sin(phi)
    norm = np.abs(f)
    f = np.divide(f, norm, out=np.zeros_like(f), where=norm > 0)
    coefficients = np.fft.fft(f) / nodes
    lags = np.arange(-(L - 1), L)
    return coefficients[lags % nodes].real


def _xy_majorana(L: int, gamma: float, h: float) -> np.ndarray:
    nodes = max(QUADRATURE_NODES, 4 * L)
    g = _bogoliubov_symbol(L, gamma, h, nodes)
    while True:
        refined = _bogoliubov_symbol(L, gamma, h, 2 * nodes)
        change = float(np.max(np.abs(refined - g)))
        g, nodes = refined, 2 * nodes
        if change <= QUADRATURE_TOL:
            break
        if nodes >= QUADRATURE_MAX_NODES:
            raise NumericQualityError(
                f"Bogoliubov quadrature did not converge (change {change:.2e} at {nodes} nodes)"
            )
    logger.debug(f"XY symbol converged with {nodes} nodes")

    # block (j, k) = [[0, g_{k-j}], [-g_{j-k}, 0]], antisymmetric overall
    lag = np.subtract.outer(np.arange(L), np.arange(L))
    gamma_matrix = np.zeros((2 * L, 2 * L))
    gamma_matrix[0::2, 1::2] = g[L - 1 - lag]
    gamma_matrix[1::2, 0::2] = -g[L - 1 + lag]
    return gamma_matrix


def xy_correlation_matrix(L: int, gamma: float, h: float, kernel: str = "finite") -> np.ndarray:
    """Ground-state two-point matrix of the XY chain.

    gamma == 0 returns the L x L matrix <c_j^dag c_k>; the default kernel is the
    exact open chain of length L. gamma > 0 returns the 2L x 2L Majorana matrix
    of the infinite chain restricted to L sites.
    """
    _check_chain(L, gamma)
    if gamma > 0:
        return _xy_majorana(L, gamma, h)
    if kernel == "finite":
        return _xx_finite(L, h)
    if kernel == "infinite":
        return _xx_infinite(L, h)
    raise ConfigError(f"unknown correlation kernel {kernel!r}")


@dataclass(frozen=True)
class ModeOccupations:
    nu: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float).reshape(-1)
        if np.any(nu < -OCCUPATION_TOL) or np.any(nu > 1 + OCCUPATION_TOL):
            raise NumericQualityError(
                f"mode occupations outside [0, 1]: [{nu.min()!r}, {nu.max()!r}]"
            )
        nu = np.clip(nu, 0.0, 1.0)
        nu.flags.writeable = False
        object.__setattr__(self, "nu", nu)

    def mixed(self, cutoff: float = MODE_CUTOFF) -> np.ndarray:
        """Occupations with min(nu, 1 - nu) >= cutoff."""
        return self.nu[np.minimum(self.nu, 1 - self.nu) >= cutoff]


def half_chain_occupations(C: np.ndarray, L: int) -> ModeOccupations:
    """Mode occupations of the correlation matrix restricted to sites 1..L/2."""
    C = np.asarray(C)
    half = L // 2
    try:
        if C.shape == (L, L):
            block = C[:half, :half]
            if not np.allclose(block, block.T, atol=1e-10):
                raise NumericQualityError("correlation block is not symmetric")
            nu = np.linalg.eigvalsh(block)
        elif C.shape == (2 * L, 2 * L):
            block = C[:L, :L]
            # i * (real antisymmetric) is Hermitian with eigenvalues +-nu
            signed = np.sort(np.linalg.eigvalsh(1j * block))
            nu = 0.5 * (1 + signed[half:])
        else:
            raise ConfigError(f"correlation matrix of shape {C.shape} does not fit L={L}")
    except np.linalg.LinAlgError as e:
        raise NumericQualityError(f"eigensolver failed on correlation block: {e}") from e
    return ModeOccupations(nu)


def occupations_to_spectrum(occupations: ModeOccupations, k: int) -> Spectrum:
    """Spectrum of the product of (nu, 1 - nu) over all mixed modes."""
    nu = occupations.mixed()
    # most mixed modes first
    nu = nu[np.argsort(np.abs(nu - 0.5))]
    factors = [make_spectrum([v, 1 - v], tol=1e-15) for v in nu]
    return tensor_all(factors, k)


def xy_half_chain_spectrum(L: int, gamma: float, h: float, k: int) -> Spectrum:
    C = xy_correlation_matrix(L, gamma, h)
    occupations = half_chain_occupations(C, L)
    if gamma == 0 and L > 2 and np.any(np.abs(occupations.nu - 0.5) < ZERO_MODE_TOL):
        logger.warning(
            f"L={L}: half chain carries an exact nu = 1/2 mode, "
            f"compare only with lengths of the same L mod 4"
        )
    return occupations_to_spectrum(occupations, k)


def _site_weights(lam: float) -> np.ndarray:
    """Per-site weights (1, lam) / (1 + lam) in the fixed site basis."""
    if not 0 <= lam <= 1:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    return np.array([1.0, lam]) / (1 + lam)


@dataclass(frozen=True)
class ProductApproximation:
    """Distance from a product state omega to omega_{<=n} (x) rho_{>n}."""

    n: int
    distance: Interval
    overlap: float

    def to_json(self) -> dict:
        return {"n": self.n, "distance": self.distance.to_json(), "overlap": self.overlap}


def product_approximation(
    omega_lambdas: Sequence[float], rho_lambdas: Sequence[float], cuts: Sequence[int]
) -> list[ProductApproximation]:
    """Replace the sites of omega beyond each cut n by those of the reference chain rho.

    Both chains are diagonal in the same site basis and share the first n
    factors, so the l1 distance is that of the two tails. Tails of up to
    EXACT_TAIL_SITES sites are enumerated; longer ones are bracketed by the
    multiplicative overlap F with 2 (1 - F) <= distance <= 2 sqrt(1 - F^2).
    """
    if len(omega_lambdas) != len(rho_lambdas):
        raise ConfigError("omega and rho chains must have the same number of sites")
    sites = len(omega_lambdas)
    cuts = [int(n) for n in cuts]
    if not cuts or any(b <= a for a, b in zip(cuts, cuts[1:])) or not 0 <= cuts[0] <= cuts[-1] <= sites:
        raise ConfigError(f"cuts must increase strictly within [0, {sites}], got {cuts}")

    omega = [_site_weights(lam) for lam in omega_lambdas]
    rho = [_site_weights(lam) for lam in rho_lambdas]
    site_overlaps = np.array([np.sum(np.sqrt(a * b)) for a, b in zip(omega, rho)])

    rows = []
    for n in cuts:
        overlap = min(1.0, float(np.prod(site_overlaps[n:])))
        if sites - n <= EXACT_TAIL_SITES:
            p = reduce(np.kron, omega[n:], np.ones(1))
            q = reduce(np.kron, rho[n:], np.ones(1))
            distance = Interval.exact(min(2.0, math.fsum(np.abs(p - q))))
        else:
            distance = Interval(2 * (1 - overlap), min(2.0, 2 * math.sqrt(max(0.0, 1 - overlap**2))))
        logger.debug(f"product approximation n={n}: {distance!r}")
        rows.append(ProductApproximation(n, distance, overlap))
    return rows


def dump_correlation_csv(C: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(C), delimiter=",", fmt="%.17g")
    logger.debug(f"Saved correlation matrix {np.shape(C)} to {path}")
    return path


@dataclass(frozen=True)
class EmbezzlerFamily(ABC):
    """Parametrized generator of embezzler spectra; `size` selects the member."""

    family: ClassVar[str] = ""

    @property
    @abstractmethod
    def size(self) -> int: ...

    @abstractmethod
    def with_size(self, size: int) -> "EmbezzlerFamily": ...

    @abstractmethod
    def spectrum(self, k: int) -> Spectrum: ...

    def constant_lambda(self) -> float | None:
        return None

    @abstractmethod
    def to_config(self) -> dict: ...

    @staticmethod
    def from_config(data: dict) -> "EmbezzlerFamily":
        name = data.get("family")
        try:
            match name:
                case "vdh" | "van-dam-hayden":
                    return VanDamHayden(int(data.get("n", 2)))
                case "geometric":
                    return Geometric(float(data["lambda"]), int(data.get("sites", 1)))
                case "araki-woods":
                    return ArakiWoods(tuple(float(x) for x in data["lambda_list"]))
                case "xy":
                    return XYChain(
                        int(data.get("L", 2)), float(data.get("gamma", 0.0)), float(data.get("h", 0.0))
                    )
                case _:
                    raise ConfigError(f"unknown family {name!r}")
        except KeyError as e:
            raise ConfigError(f"family {name!r} is missing parameter {e}") from e


@dataclass(frozen=True)
class VanDamHayden(EmbezzlerFamily):
    n: int
    family: ClassVar[str] = "vdh"

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"van Dam-Hayden needs n >= 2, got {self.n}")

    @property
    def size(self) -> int:
        return self.n

    def with_size(self, size: int) -> "VanDamHayden":
        return VanDamHayden(size)

    def spectrum(self, k: int) -> Spectrum:
        return van_dam_hayden_spectrum(self.n)

    def to_config(self) -> dict:
        return {"family": self.family, "n": self.n}


@dataclass(frozen=True)
class Geometric(EmbezzlerFamily):
    lam: float
    sites: int
    family: ClassVar[str] = "geometric"

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.sites < 1:
            raise ConfigError(f"geometric family needs at least one site, got {self.sites}")

    @property
    def size(self) -> int:
        return self.sites

    def with_size(self, size: int) -> "Geometric":
        return Geometric(self.lam, size)

    def spectrum(self, k: int) -> Spectrum:
        return geometric_spectrum(self.lam, self.sites, k)

    def constant_lambda(self) -> float:
        return self.lam

    def to_config(self) -> dict:
        return {"family": self.family, "lambda": self.lam, "sites": self.sites}


@dataclass(frozen=True)
class ArakiWoods(EmbezzlerFamily):
    lambda_list: tuple[float, ...]
    family: ClassVar[str] = "araki-woods"

    def __post_init__(self):
        if not self.lambda_list:
            raise ConfigError("Araki-Woods family needs a nonempty lambda_list")
        if any(not 0 <= lam <= 1 for lam in self.lambda_list):
            raise ConfigError("lambda_list entries must lie in [0, 1]")

    @property
    def size(self) -> int:
        return len(self.lambda_list)

    def with_size(self, size: int) -> "ArakiWoods":
        if not 1 <= size <= len(self.lambda_list):
            raise ConfigError(
                f"size {size} exceeds the {len(self.lambda_list)} given lambda values"
            )
        return ArakiWoods(self.lambda_list[:size])

    def spectrum(self, k: int) -> Spectrum:
        return araki_woods_spectrum(self.lambda_list, k)

    def constant_lambda(self) -> float | None:
        first = self.lambda_list[0]
        return first if all(lam == first for lam in self.lambda_list) else None

    def to_config(self) -> dict:
        return {"family": self.family, "lambda_list": list(self.lambda_list)}


@dataclass(frozen=True)
class XYChain(EmbezzlerFamily):
    L: int
    gamma: float = 0.0
    h: float = 0.0
    family: ClassVar[str] = "xy"

    def __post_init__(self):
        _check_chain(self.L, self.gamma)

    @property
    def size(self) -> int:
        return self.L

    def with_size(self, size: int) -> "XYChain":
        return XYChain(size, self.gamma, self.h)

    def spectrum(self, k: int) -> Spectrum:
        return xy_half_chain_spectrum(self.L, self.gamma, self.h, k)

    def to_config(self) -> dict:
        return {"family": self.family, "L": self.L, "gamma": self.gamma, "h": self.h}


FAMILY_KEYS = frozenset({"family", "n", "lambda", "sites", "lambda_list", "L", "gamma", "h"})
