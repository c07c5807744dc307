"""Ghatak-Sherrington model: parameters, disorder, Hamiltonian and overlaps.

Spins take values in {-S, ..., S}.  The Hamiltonian (a log-weight, the Gibbs
measure is proportional to ``exp(H)``) is::

    H(sigma) = beta / sqrt(N) * sum_{i<j} g_ij s_i s_j + D * sum s_i^2 + h * sum s_i

Couplings ``g_ij`` are drawn from a counter-based Philox stream so any single
coupling can be regenerated from ``(seed, i, j)`` without materialising the
whole matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MAX_SPIN = 127  # int8 storage
VERIFY_MAX_SPIN = 10


class DimensionError(ValueError):
    """Raised when configurations and disorder disagree on N."""


@dataclass(frozen=True)
class ModelParams:
    """The quadruple (beta, h, D, S)."""

    beta: float
    h: float
    D: float
    S: int = 1
    verification: bool = True

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if int(self.S) != self.S or self.S < 1:
            raise ValueError(f"S must be an integer >= 1, got {self.S}")
        object.__setattr__(self, "S", int(self.S))
        limit = VERIFY_MAX_SPIN if self.verification else MAX_SPIN
        if self.S > limit:
            raise ValueError(f"S={self.S} exceeds the supported maximum {limit}")
        if self.h < 0:
            warnings.warn(
                f"h={self.h} < 0 lies outside the h >= 0 hypothesis; predictions are unverified",
                stacklevel=2,
            )

    @property
    def certification_bound(self) -> float:
        return 1.0 / (2.0 * self.S**2)

    @property
    def high_temperature_certified(self) -> bool:
        return self.beta < self.certification_bound

    @property
    def outside_hypothesis(self) -> bool:
        return self.h < 0

    @property
    def spin_values(self) -> np.ndarray:
        return np.arange(-self.S, self.S + 1, dtype=np.int64)

    def as_dict(self) -> dict:
        return {"beta": self.beta, "h": self.h, "D": self.D, "S": self.S}


@dataclass
class SpinConfiguration:
    """A single replica; ``spins`` is an int8 vector with |s_i| <= S."""

    spins: np.ndarray
    S: int = 1

    def __post_init__(self):
        arr = np.asarray(self.spins)
        if arr.ndim != 1:
            raise ValueError("spins must be one-dimensional")
        if arr.size and np.max(np.abs(arr)) > self.S:
            raise ValueError(f"spin magnitude exceeds S={self.S}")
        if not np.all(arr == np.round(arr)):
            raise ValueError("spins must be integers")
        self.spins = arr.astype(np.int8)

    @property
    def N(self) -> int:
        return self.spins.shape[0]

    @classmethod
    def random(cls, N: int, S: int, rng: np.random.Generator) -> "SpinConfiguration":
        return cls(rng.integers(-S, S + 1, size=N).astype(np.int8), S)

    @classmethod
    def zeros(cls, N: int, S: int = 1) -> "SpinConfiguration":
        return cls(np.zeros(N, dtype=np.int8), S)


def _spins(config) -> np.ndarray:
    if isinstance(config, SpinConfiguration):
        return config.spins
    return np.asarray(config)


# ---------------------------------------------------------------------------
# disorder


def _pair_index(i, j):
    """Column-major index of the pair i < j; couplings for N are a prefix of N+1."""
    return j * (j - 1) // 2 + i


def _box_muller(raw: np.ndarray) -> np.ndarray:
    """Map interleaved uint64 pairs to standard normals."""
    scale = 2.0**-53
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 0.5) * scale
    u2 = ((raw[1::2] >> np.uint64(11)).astype(np.float64) + 0.5) * scale
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class DisorderSample:
    """Gaussian couplings g_ij (i < j) fully determined by ``seed``.

    Pair p = j(j-1)/2 + i consumes Philox outputs 2p and 2p+1 (one counter
    block holds four outputs), turned into a normal by Box-Muller.
    """

    N: int
    seed: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_upper(cls, values, seed: int = 0) -> "DisorderSample":
        """Fixed couplings in pair-index order (g_01, g_02, g_12, g_03, ...)."""
        values = np.asarray(values, dtype=np.float64)
        N = int(round((1 + math.sqrt(1 + 8 * values.size)) / 2))
        if N * (N - 1) // 2 != values.size:
            raise DimensionError(f"{values.size} couplings do not fill an upper triangle")
        return cls(N, seed, {"upper": values.copy()})

    def coupling(self, i: int, j: int) -> float:
        """g_ij for 0 <= i, j < N, i != j (symmetric)."""
        if i == j or not (0 <= i < self.N and 0 <= j < self.N):
            raise IndexError(f"invalid coupling index ({i}, {j})")
        if i > j:
            i, j = j, i
        p = _pair_index(i, j)
        if "upper" in self._cache:
            return float(self._cache["upper"][p])
        bitgen = np.random.Philox(key=int(self.seed), counter=p // 2)
        raw = bitgen.random_raw(4)
        lane = 2 * (p % 2)
        return float(_box_muller(raw[lane : lane + 2])[0])

    def upper(self) -> np.ndarray:
        """Couplings in pair-index order, length N(N-1)/2."""
        if "upper" not in self._cache:
            n_pairs = self.N * (self.N - 1) // 2
            n_blocks = (n_pairs + 1) // 2
            raw = np.random.Philox(key=int(self.seed)).random_raw(4 * n_blocks)
            self._cache["upper"] = _box_muller(raw[: 2 * n_pairs])
        return self._cache["upper"]

    def matrix(self) -> np.ndarray:
        """Symmetric N x N coupling matrix with zero diagonal."""
        N = self.N
        g = np.zeros((N, N))
        if N > 1:
            jj, ii = np.nonzero(np.tril(np.ones((N, N), dtype=bool), k=-1))
            # rows jj > cols ii; pair index depends on (ii, jj)
            g[ii, jj] = self.upper()[_pair_index(ii, jj)]
            g += g.T
        return g


def interaction_matrix(disorder: DisorderSample, params: ModelParams) -> np.ndarray:
    """J = beta / sqrt(N) * g, symmetric with zero diagonal."""
    return (params.beta / math.sqrt(disorder.N)) * disorder.matrix()


# ---------------------------------------------------------------------------
# observables


def _check_dim(spins: np.ndarray, disorder: DisorderSample):
    if spins.shape[0] != disorder.N:
        raise DimensionError(f"configuration has N={spins.shape[0]}, disorder has N={disorder.N}")


def hamiltonian(config, disorder: DisorderSample, params: ModelParams) -> float:
    s = _spins(config).astype(np.float64)
    _check_dim(s, disorder)
    g = disorder.matrix()
    pair = 0.5 * s @ g @ s
    return float(params.beta / math.sqrt(disorder.N) * pair + params.D * np.sum(s * s) + params.h * np.sum(s))


def overlap(a, b) -> float:
    """R_ab = (1/N) sum_i a_i b_i; accumulated in int64."""
    x = _spins(a).astype(np.int64)
    y = _spins(b).astype(np.int64)
    if x.shape != y.shape:
        raise DimensionError(f"overlap of configurations with N={x.shape[0]} and N={y.shape[0]}")
    return int(x @ y) / x.shape[0]


def local_field(config, disorder: DisorderSample, params: ModelParams, site: int) -> float:
    """beta / sqrt(N) * sum_{j != site} g_{site, j} s_j."""
    s = _spins(config).astype(np.float64)
    _check_dim(s, disorder)
    if not 0 <= site < disorder.N:
        raise IndexError(f"site {site} out of range for N={disorder.N}")
    row = disorder.matrix()[site]
    return float(params.beta / math.sqrt(disorder.N) * (row @ s))


def overlap_matrix(spins: np.ndarray) -> np.ndarray:
    """All pairwise overlaps of an (n, N) replica array."""
    x = np.asarray(spins, dtype=np.int64)
    return (x @ x.T) / x.shape[-1]
