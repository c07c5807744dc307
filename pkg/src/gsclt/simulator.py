"""Heat-bath Monte Carlo with replicas and disorder averaging.

A run stores, for every disorder sample and every measurement, the full
replica overlap matrix.  All estimators work on that array, so a single
simulation serves centered moments, basis moments and sanity checks.

Observables are products of linear forms in the overlaps R_{k,l} (1-based
replica indices); each estimate is averaged over all injective relabelings of
the replicas it uses onto the simulated chains.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cavity import RSOrderParams
from .gaussian import MomentSpec
from .kernels import heat_bath_sweeps
from .model import DisorderSample, ModelParams, interaction_matrix

MAX_RELABELINGS = 720
SWEEP_CHUNK = 64


class InsufficientReplicasError(ValueError):
    pass


# ---------------------------------------------------------------------------
# plan and results


@dataclass(frozen=True)
class SimPlan:
    params: ModelParams
    N_grid: tuple
    n_replicas: int = 4
    sweeps_burn: int = 1000
    sweeps_measure: int = 500
    thin: int = 10
    n_disorder: int = 100
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "N_grid", tuple(int(n) for n in self.N_grid))
        for name in ("n_replicas", "sweeps_measure", "thin", "n_disorder"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.sweeps_burn < 0:
            raise ValueError("sweeps_burn must be non-negative")
        if not self.N_grid or min(self.N_grid) < 2:
            raise ValueError("N_grid needs sizes >= 2")
        if self.sweeps_measure < self.thin:
            raise ValueError("sweeps_measure must be at least thin")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def n_measure(self) -> int:
        return self.sweeps_measure // self.thin


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    std_error: float
    n_disorder: int
    n_thermal: int
    n_replicas: int = 0

    @property
    def usable(self) -> bool:
        return self.n_disorder > 1

    def z(self, target: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.value == target else math.copysign(math.inf, self.value - target)
        return (self.value - target) / self.std_error

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_disorder": self.n_disorder,
            "n_thermal": self.n_thermal,
            "n_replicas": self.n_replicas,
        }


@dataclass
class SimulationData:
    """Overlaps R[d, m, a, b] for disorder d, measurement m, chains a, b."""

    N: int
    params: ModelParams
    overlaps: np.ndarray
    wall_seconds: float = 0.0
    accept_rate: float = float("nan")

    @property
    def n_disorder(self) -> int:
        return self.overlaps.shape[0]

    @property
    def n_thermal(self) -> int:
        return self.overlaps.shape[1]

    @property
    def n_replicas(self) -> int:
        return self.overlaps.shape[2]


# ---------------------------------------------------------------------------
# seeding


def disorder_seed(master_seed: int, N: int, d: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(N), int(d)))
    return int(ss.generate_state(1, np.uint64)[0])


def replica_rng(master_seed: int, N: int, d: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=(int(N), int(d), 1 + int(r)))))


# ---------------------------------------------------------------------------
# sampling


@dataclass
class ReplicaEnsemble:
    """n chains sharing one coupling matrix, with cached local fields."""

    spins: np.ndarray  # (n, N) int8
    J: np.ndarray  # (N, N) float64, J = beta/sqrt(N) g
    params: ModelParams
    rngs: list = field(repr=False)
    fields: np.ndarray = field(init=False, repr=False)
    changes: int = field(default=0, init=False)
    site_updates: int = field(default=0, init=False)

    def __post_init__(self):
        self.spins = np.ascontiguousarray(self.spins, dtype=np.int8)
        self.J = np.ascontiguousarray(self.J, dtype=np.float64)
        self.resync()

    @classmethod
    def start(cls, disorder: DisorderSample, params: ModelParams, rngs: list) -> "ReplicaEnsemble":
        N = disorder.N
        S = params.S
        spins = np.stack([rng.integers(-S, S + 1, size=N) for rng in rngs]).astype(np.int8)
        if params.beta == 0:
            J = np.zeros((N, N))
        else:
            J = interaction_matrix(disorder, params)
        return cls(spins, J, params, rngs)

    @property
    def n(self) -> int:
        return self.spins.shape[0]

    @property
    def N(self) -> int:
        return self.spins.shape[1]

    def resync(self) -> float:
        """Recompute fields from scratch; returns the largest drift corrected."""
        fresh = self.spins.astype(np.float64) @ self.J
        drift = float(np.max(np.abs(fresh - self.fields))) if hasattr(self, "fields") else 0.0
        self.fields = np.ascontiguousarray(fresh)
        return drift

    def uniforms(self, n_sweeps: int) -> np.ndarray:
        u = np.stack([rng.random((n_sweeps, self.N)) for rng in self.rngs], axis=1)
        return np.ascontiguousarray(u)

    def sweep(self, n_sweeps: int = 1, trace: np.ndarray | None = None) -> None:
        done = 0
        while done < n_sweeps:
            t = min(SWEEP_CHUNK, n_sweeps - done)
            tr = None if trace is None else trace[done : done + t]
            self.changes += heat_bath_sweeps(
                self.spins, self.fields, self.J, self.uniforms(t), float(self.params.D), float(self.params.h), int(self.params.S), tr
            )
            self.site_updates += t * self.n * self.N
            done += t
        self.resync()

    def overlap_products(self) -> np.ndarray:
        s = self.spins.astype(np.int64)
        return s @ s.T


def heat_bath_sweep(ensemble: ReplicaEnsemble, n_sweeps: int = 1) -> ReplicaEnsemble:
    """Resample every site of every replica once per sweep (in place)."""
    ensemble.sweep(n_sweeps)
    return ensemble


def run_disorder(plan: SimPlan, N: int, d: int) -> tuple[np.ndarray, float]:
    """Overlap matrices (n_measure, n, n) for disorder sample d; also the acceptance rate."""
    disorder = DisorderSample(N, disorder_seed(plan.master_seed, N, d))
    rngs = [replica_rng(plan.master_seed, N, d, r) for r in range(plan.n_replicas)]
    ens = ReplicaEnsemble.start(disorder, plan.params, rngs)
    ens.sweep(plan.sweeps_burn)
    out = np.empty((plan.n_measure, plan.n_replicas, plan.n_replicas), dtype=np.int64)
    for m in range(plan.n_measure):
        ens.sweep(plan.thin)
        out[m] = ens.overlap_products()
    rate = ens.changes / max(ens.site_updates, 1)
    return out, rate


def simulate(plan: SimPlan, N: int, threads: int = 1, progress=None) -> SimulationData:
    """Run all disorder samples for size N.  Output is independent of ``threads``."""
    t0 = time.perf_counter()
    results = np.empty((plan.n_disorder, plan.n_measure, plan.n_replicas, plan.n_replicas), dtype=np.int64)
    rates = np.empty(plan.n_disorder)

    def job(d):
        return d, run_disorder(plan, N, d)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            it = pool.map(job, range(plan.n_disorder))
            for d, (ov, rate) in it:
                results[d], rates[d] = ov, rate
                if progress:
                    progress(d)
    else:
        for d in range(plan.n_disorder):
            results[d], rates[d] = run_disorder(plan, N, d)
            if progress:
                progress(d)
    return SimulationData(N, plan.params, results / N, time.perf_counter() - t0, float(rates.mean()))


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class LinearForm:
    """sum_c coeff * R_{k,l} + const, with 1-based replica pairs (k, l)."""

    coeffs: tuple  # ((k, l, coeff), ...)
    const: float = 0.0

    @classmethod
    def overlap(cls, k: int, l: int, const: float = 0.0) -> "LinearForm":
        return cls(((min(k, l), max(k, l), 1.0),), const)

    @property
    def replicas(self) -> set:
        return {x for k, l, _ in self.coeffs for x in (k, l)}


@dataclass(frozen=True)
class ProductObservable:
    factors: tuple = ()

    @property
    def replicas(self) -> list:
        return sorted(set().union(*(f.replicas for f in self.factors))) if self.factors else []

    @property
    def degree(self) -> int:
        return len(self.factors)


def centered_observable(spec: MomentSpec, rs: RSOrderParams) -> ProductObservable:
    """prod (R_kl - Q_kl)^{m(k,l)}, Q = q off the diagonal and p on it."""
    factors = []
    for (k, l), power in spec.m.items():
        centre = rs.p if k == l else rs.q
        factors += [LinearForm.overlap(k, l, -centre)] * power
    return ProductObservable(tuple(factors))


def _relabelings(used: list, n: int) -> np.ndarray:
    k = len(used)
    if k > n:
        raise InsufficientReplicasError(f"observable needs {k} replicas, only {n} simulated")
    count = math.perm(n, k)
    if count <= MAX_RELABELINGS:
        perms = np.array(list(itertools.permutations(range(n), k)), dtype=np.int64).reshape(count, k)
    else:
        rng = np.random.default_rng(12345)
        perms = np.array([rng.permutation(n)[:k] for _ in range(MAX_RELABELINGS)], dtype=np.int64)
    return perms


def per_disorder_values(data: SimulationData, obs: ProductObservable, chunk: int = 256) -> np.ndarray:
    """Thermal and relabeling average of ``obs`` for each disorder sample."""
    if obs.degree == 0:
        return np.ones(data.n_disorder)
    used = obs.replicas
    pos = {r: i for i, r in enumerate(used)}
    perms = _relabelings(used, data.n_replicas)
    out = np.empty(data.n_disorder)
    for start in range(0, data.n_disorder, chunk):
        R = data.overlaps[start : start + chunk]
        prod = None
        for f in obs.factors:
            val = np.full(R.shape[:2] + (len(perms),), f.const)
            for k, l, c in f.coeffs:
                val = val + c * R[:, :, perms[:, pos[k]], perms[:, pos[l]]]
            prod = val if prod is None else prod * val
        out[start : start + chunk] = prod.mean(axis=(1, 2))
    return out


def jackknife(values, stat=None) -> tuple[float, float]:
    """Leave-one-out jackknife over the first axis.

    ``values`` is (n,) or (n, k); ``stat`` maps column means to a scalar
    (default: the mean of a 1-D sample).
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.shape[0]
    if stat is None:
        est = float(x.mean())
        if n < 2:
            return est, 0.0
        return est, float(x.std(ddof=1) / math.sqrt(n))
    total = x.sum(axis=0)
    est = float(stat(total / n))
    if n < 2:
        return est, 0.0
    loo = np.array([stat((total - x[i]) / (n - 1)) for i in range(n)])
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return est, se


def estimate_nu(data: SimulationData, obs: ProductObservable, scale: float = 1.0) -> EstimateWithError:
    vals = per_disorder_values(data, obs) * scale
    v, se = jackknife(vals)
    return EstimateWithError(v, se, data.n_disorder, data.n_thermal, data.n_replicas)


def estimate_centered_moment(data: SimulationData, spec: MomentSpec, rs: RSOrderParams) -> EstimateWithError:
    """N^{total/2} nu(prod (R_kl - Q_kl)^{m(k,l)})."""
    return estimate_nu(data, centered_observable(spec, rs), float(data.N) ** (spec.total / 2))


# ---------------------------------------------------------------------------
# basis variables


def parse_basis_symbol(sym) -> tuple:
    """'T12' / ('T', 1, 2) -> ('T', (1, 2)); 'S3' -> ('S', (3,)); 'T' -> ('T', ())."""
    if isinstance(sym, str):
        kind, rest = sym[0], sym[1:].replace(",", " ").replace("_", " ").split()
        if len(rest) == 1 and len(rest[0]) == 2 and kind == "T":
            rest = list(rest[0])
        idx = tuple(int(x) for x in rest)
    else:
        kind, idx = sym[0], tuple(int(x) for x in sym[1:])
    if kind not in ("T", "S") or (kind == "T" and len(idx) > 2) or (kind == "S" and len(idx) > 1):
        raise ValueError(f"unknown basis symbol {sym!r}")
    if len(idx) == 2 and idx[0] == idx[1]:
        raise ValueError("T_{k,l} needs k != l")
    return kind, idx


def basis_observable(factors, rs: RSOrderParams) -> ProductObservable:
    """Overlap expansion of a product of basis variables; each factor gets fresh replicas.

    ``factors`` is a sequence of (symbol, multiplicity).
    """
    symbols = []
    for sym, mult in factors:
        symbols += [parse_basis_symbol(sym)] * int(mult)
    nxt = max([x for _, idx in symbols for x in idx] + [0]) + 1

    def fresh():
        nonlocal nxt
        nxt += 1
        return nxt - 1

    forms = []
    for kind, idx in symbols:
        if kind == "T" and len(idx) == 2:
            k, l = idx
            a, b = fresh(), fresh()
            terms = [(k, l, 1.0), (k, b, -1.0), (a, l, -1.0), (a, b, 1.0)]
            forms.append(LinearForm(tuple((min(x, y), max(x, y), c) for x, y, c in terms)))
        elif kind == "T" and len(idx) == 1:
            (k,) = idx
            a, b = fresh(), fresh()
            forms.append(LinearForm(((min(k, b), max(k, b), 1.0), (min(a, b), max(a, b), -1.0))))
        elif kind == "T":
            a, b = fresh(), fresh()
            forms.append(LinearForm.overlap(a, b, -rs.q))
        elif len(idx) == 1:
            (k,) = idx
            a = fresh()
            forms.append(LinearForm(((k, k, 1.0), (a, a, -1.0))))
        else:
            a = fresh()
            forms.append(LinearForm.overlap(a, a, -rs.p))
    return ProductObservable(tuple(forms))


def estimate_basis_moment(data: SimulationData, factors, rs: RSOrderParams) -> EstimateWithError:
    """N^{H/2} nu(prod of basis variables), H the number of factors."""
    obs = basis_observable(factors, rs)
    return estimate_nu(data, obs, float(data.N) ** (obs.degree / 2))


# ---------------------------------------------------------------------------
# distributional checks


def excess_kurtosis(data: SimulationData, rs: RSOrderParams, pair=(1, 2)) -> EstimateWithError:
    """nu(x^4)/nu(x^2)^2 - 3 for x = R_pair - Q, jackknifed over disorder."""
    k, l = pair
    spec2 = MomentSpec.from_pairs({(k, l): 2})
    spec4 = MomentSpec.from_pairs({(k, l): 4})
    m2 = per_disorder_values(data, centered_observable(spec2, rs))
    m4 = per_disorder_values(data, centered_observable(spec4, rs))
    v, se = jackknife(np.column_stack([m2, m4]), lambda m: m[1] / m[0] ** 2 - 3.0)
    return EstimateWithError(v, se, data.n_disorder, data.n_thermal, data.n_replicas)


def independence_check(data: SimulationData, rs: RSOrderParams) -> EstimateWithError:
    """N nu(T_12 T_13); expected to vanish."""
    return estimate_basis_moment(data, [("T12", 1), ("T13", 1)], rs)
