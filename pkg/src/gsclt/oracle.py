"""Exact enumeration for tiny systems and a check of the cavity derivative formula.

Replicas are independent given the disorder, so a multi-replica average is a
tensor contraction: every replica carries the single-replica Gibbs vector p
over the (2S+1)^N states, overlaps between replicas are K x K matrices and
self-overlaps or last-spin factors are K-vectors.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass

import numpy as np

from .cavity import RSOrderParams
from .model import DisorderSample, ModelParams
from .simulator import LinearForm, ProductObservable, ReplicaEnsemble, jackknife, replica_rng

MAX_STATES = 10**7


class StateSpaceError(ValueError):
    pass


def enumerate_states(N: int, S: int) -> np.ndarray:
    """All configurations in {-S..S}^N as a (K, N) int8 array."""
    K = (2 * S + 1) ** N
    if K > MAX_STATES:
        raise StateSpaceError(f"(2S+1)^N = {K} exceeds the enumeration guard {MAX_STATES}")
    vals = np.arange(-S, S + 1, dtype=np.int8)
    grids = np.meshgrid(*([vals] * N), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _normalise(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logw.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def log_weights(states: np.ndarray, g: np.ndarray, params: ModelParams) -> np.ndarray:
    """H(sigma) for every state; ``g`` is the symmetric coupling matrix."""
    s = states.astype(np.float64)
    N = s.shape[1]
    pair = 0.5 * np.einsum("ki,ij,kj->k", s, g, s)
    return params.beta / math.sqrt(N) * pair + params.D * (s * s).sum(1) + params.h * s.sum(1)


def contract(p: np.ndarray, atoms, scale: float = 1.0) -> float:
    """Replica average of a product of atoms under independent replicas with law p.

    Atoms are ("v", vector, r): a K-vector on replica r, or
    ("l", feats, a, b, c): c * sum_i feats[x_a, i] feats[x_b, i], a low-rank
    overlap between replicas a and b.  Replicas not mentioned sum to one.
    """
    lower, upper = string.ascii_lowercase, string.ascii_uppercase
    reps = sorted({r for at in atoms for r in ((at[2],) if at[0] == "v" else (at[2], at[3]))})
    if not reps:
        return scale
    name = {r: lower[i] for i, r in enumerate(reps)}
    ops, subs = [], []
    for r in reps:
        ops.append(p)
        subs.append(name[r])
    site = 0
    for at in atoms:
        if at[0] == "v":
            ops.append(at[1])
            subs.append(name[at[2]])
        else:
            _, feats, a, b, c = at
            scale *= c
            ops += [feats, feats]
            subs += [name[a] + upper[site], name[b] + upper[site]]
            site += 1
    return scale * float(np.einsum(",".join(subs) + "->", *ops, optimize="greedy"))


def expand(sum_factors):
    """Product of sums [(coeff, atoms), ...] -> flat list of (coeff, atoms)."""
    terms = [(1.0, [])]
    for sf in sum_factors:
        terms = [(c1 * c2, a1 + a2) for c1, a1 in terms for c2, a2 in sf if c2 != 0.0]
    return terms


def nu_product(p: np.ndarray, sum_factors) -> float:
    return sum(c * contract(p, atoms) for c, atoms in expand(sum_factors))


def overlap_factor(feats: np.ndarray, N: int, k: int, l: int, const: float = 0.0, diag=None):
    """Sum-factor for R_kl + const with R built from ``feats`` (K x d) and 1/N."""
    if k == l:
        d = (feats * feats).sum(1) / N if diag is None else diag
        return [(1.0, [("v", d + const, k)])]
    sf = [(1.0, [("l", feats, k, l, 1.0 / N)])]
    if const:
        sf.append((const, []))
    return sf


def exact_gibbs_expectation(disorder: DisorderSample, params: ModelParams, observable) -> float:
    """Exact <observable> for one disorder sample.

    ``observable`` is a ProductObservable over any number of replicas, or a
    callable mapping the (K, N) state array to K values (single replica).
    """
    states = enumerate_states(disorder.N, params.S)
    p = _normalise(log_weights(states, disorder.matrix(), params))
    if callable(observable):
        return float(p @ np.asarray(observable(states), dtype=np.float64))
    s = states.astype(np.float64)
    N = disorder.N
    diag = (s * s).sum(1) / N
    sum_factors = []
    for f in observable.factors:
        sf = [(f.const, [])] if f.const else []
        for k, l, c in f.coeffs:
            sf += [(c * c2, at) for c2, at in overlap_factor(s, N, k, l, diag=diag)]
        sum_factors.append(sf)
    return nu_product(p, sum_factors)


def state_index(spins: np.ndarray, S: int) -> np.ndarray:
    """Row index into :func:`enumerate_states` for configurations in the last axis."""
    base = 2 * S + 1
    N = spins.shape[-1]
    powers = base ** np.arange(N - 1, -1, -1, dtype=np.int64)
    return (spins.astype(np.int64) + S) @ powers


def mcmc_vs_exact(
    disorder: DisorderSample,
    params: ModelParams,
    n_sweeps: int = 1_000_000,
    n_replicas: int = 2,
    burn: int = 1000,
    seed: int = 0,
    n_batches: int = 100,
    block: int = 1 << 16,
) -> dict:
    """Heat-bath chains on one disorder sample against the enumerated Gibbs law.

    Every replica contributes one configuration per sweep to the state
    histogram.  The R_12 standard error uses batch means over sweeps.
    """
    if n_replicas < 2:
        raise ValueError("need two replicas for R_12")
    states = enumerate_states(disorder.N, params.S)
    exact = _normalise(log_weights(states, disorder.matrix(), params))
    rngs = [replica_rng(seed, disorder.N, 0, r) for r in range(n_replicas)]
    ens = ReplicaEnsemble.start(disorder, params, rngs)
    ens.sweep(burn)
    counts = np.zeros(len(states), dtype=np.int64)
    r12 = np.empty(n_sweeps)
    done = 0
    while done < n_sweeps:
        t = min(block, n_sweeps - done)
        trace = np.empty((t, n_replicas, disorder.N), dtype=np.int8)
        ens.sweep(t, trace)
        counts += np.bincount(state_index(trace, params.S).ravel(), minlength=len(states))
        r12[done : done + t] = (trace[:, 0].astype(np.int64) * trace[:, 1]).sum(1) / disorder.N
        done += t
    empirical = counts / counts.sum()
    batches = r12[: n_sweeps - n_sweeps % n_batches].reshape(n_batches, -1).mean(1)
    r12_exact = exact_gibbs_expectation(disorder, params, ProductObservable((LinearForm.overlap(1, 2),)))
    r12_mc = float(r12.mean())
    r12_se = float(batches.std(ddof=1) / math.sqrt(n_batches))
    return {
        "tv": 0.5 * float(np.abs(empirical - exact).sum()),
        "r12_exact": r12_exact,
        "r12_mcmc": r12_mc,
        "r12_se": r12_se,
        "r12_z": (r12_mc - r12_exact) / r12_se if r12_se > 0 else 0.0,
        "n_samples": int(counts.sum()),
    }


# ---------------------------------------------------------------------------
# cavity derivative


@dataclass(frozen=True)
class DerivativeReport:
    t: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    rhs_printed_remainder: float
    rhs_printed_remainder_se: float
    diff_se: float
    n_disorder: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z(self) -> float:
        se = self.combined_se
        return 0.0 if se == 0 else (self.lhs - self.rhs) / se

    @property
    def passed(self) -> bool:
        return abs(self.lhs - self.rhs) <= 4 * self.combined_se + 1e-14

    @property
    def inconclusive(self) -> bool:
        return self.combined_se > 0.5 * max(abs(self.lhs), abs(self.rhs), 1e-12)

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "rhs": self.rhs,
            "rhs_se": self.rhs_se,
            "rhs_printed_remainder": self.rhs_printed_remainder,
            "rhs_printed_remainder_se": self.rhs_printed_remainder_se,
            "paired_diff_se": self.diff_se,
            "combined_se": self.combined_se,
            "z": self.z,
            "n_disorder": self.n_disorder,
            "pass": self.passed,
            "inconclusive": self.inconclusive,
        }


class _CavityState:
    """Per-draw quantities for the t-interpolated Hamiltonian."""

    def __init__(self, states, params: ModelParams, rs: RSOrderParams):
        s = states.astype(np.float64)
        N = s.shape[1]
        self.N = N
        self.params = params
        self.rs = rs
        self.rho = s[:, :-1]
        self.eps = s[:, -1]
        self.dp = (self.rho * self.rho).sum(1) / N - rs.p  # R^-_{kk} - p
        self.s = s
        self.dfull = (s * s).sum(1) / N
        self.eps2 = self.eps**2
        self.sq_eps = (params.D) * self.eps2 + params.h * self.eps

    def probs(self, base_logw, field_g, eta, t):
        """Gibbs vector at time t; base_logw is H_{N-1}, field_g = sum_i g_iN sigma_i."""
        b = self.params.beta
        rs = self.rs
        field = math.sqrt(t) * b / math.sqrt(self.N) * field_g + math.sqrt(1 - t) * b * eta * math.sqrt(rs.q)
        logw = base_logw + self.eps * field + (1 - t) * 0.5 * b * b * (rs.p - rs.q) * self.eps2 + self.sq_eps
        return _normalise(logw)


def _f_sum_factors(cs: _CavityState, f_pairs, use_minus: bool):
    """Sum-factors of f = prod (R_kl - Q_kl) (R^- when ``use_minus``), 0-based replicas."""
    out = []
    for k, l in f_pairs:
        k, l = k - 1, l - 1
        if use_minus:
            if k == l:
                out.append([(1.0, [("v", cs.dp, k)])])
            else:
                out.append(overlap_factor(cs.rho, cs.N, k, l, -cs.rs.q))
        else:
            if k == l:
                out.append([(1.0, [("v", cs.dfull - cs.rs.p, k)])])
            else:
                out.append(overlap_factor(cs.s, cs.N, k, l, -cs.rs.q))
    return out


def _eps_sum_factor(cs: _CavityState, a: int, b: int):
    """eps_a eps_b (R^-_ab - Q_ab) as a sum-factor, 0-based replicas."""
    if a == b:
        return [(1.0, [("v", cs.eps2 * cs.dp, a)])]
    e = [("v", cs.eps, a), ("v", cs.eps, b)]
    return [(1.0, e + [("l", cs.rho, a, b, 1.0 / cs.N)]), (-cs.rs.q, e)]


def derivative_terms(cs: _CavityState, p, f_pairs, n: int, use_minus: bool = True) -> tuple[float, float]:
    """(d/dt nu_t(f) from the derivative formula, printed-remainder variant) for one draw.

    Both use the sum over a, b in [2n] with sgn(a, b) = (-1)^{#{a, b in [n]}}
    counted with multiplicity.  The first adds the remainder n b^2 (X - Y),
    which reproduces the derivative formula term by term; the second adds the
    remainder as printed, which equals -n b^2 (X - Y).
    """
    b2 = cs.params.beta ** 2
    ff = _f_sum_factors(cs, f_pairs, use_minus)
    used = sorted({x - 1 for pair in f_pairs for x in pair})
    cache = {}

    def nu(a, b):
        # replicas outside f are exchangeable: relabel them canonically
        fresh = {}
        key = []
        for x in (a, b):
            if x not in used:
                x = fresh.setdefault(x, 100 + len(fresh))
            key.append(x)
        key = tuple(sorted(key))
        if key not in cache:
            cache[key] = nu_product(p, ff + [_eps_sum_factor(cs, *key)])
        return cache[key]

    main = 0.0
    for a in range(2 * n):
        for b in range(2 * n):
            sign = (-1) ** ((a < n) + (b < n))
            main += sign * nu(a, b)
    X = nu(2 * n, 2 * n + 1)
    Y = nu(2 * n, 2 * n)
    main *= 0.5 * b2
    return main + n * b2 * (X - Y), main - n * b2 * (X - Y)


def _f_value(cs, p, f_pairs, use_minus):
    return nu_product(p, _f_sum_factors(cs, f_pairs, use_minus))


def check_cavity_derivative(
    params: ModelParams,
    rs: RSOrderParams,
    N: int = 6,
    n: int = 2,
    f_pairs=((1, 2),),
    t_values=(0.0, 0.5),
    n_disorder: int = 2000,
    seed: int = 0,
    step: float = 1e-3,
    use_minus: bool = True,
) -> list[DerivativeReport]:
    """Finite-difference d/dt nu_t(f) against the derivative formula.

    Each draw uses fresh couplings g and cavity field eta, plus the antithetic
    copy with g_iN -> -g_iN, which makes the per-draw average smooth in t at
    t = 0.  Differences use Richardson extrapolation: central at interior t,
    one-sided second order at t = 0.
    """
    if N > 8:
        raise ValueError("derivative check supports N <= 8")
    if n > 3:
        raise ValueError("derivative check supports n <= 3")
    for k, l in f_pairs:
        if not (1 <= min(k, l) and max(k, l) <= n):
            raise ValueError(f"f uses replica outside 1..{n}")
    states = enumerate_states(N, params.S)
    cs = _CavityState(states, params, rs)
    ss = np.random.SeedSequence(int(seed))
    rng = np.random.Generator(np.random.PCG64(ss))
    rho = cs.rho
    b = params.beta
    lhs = {t: [] for t in t_values}
    rhs = {t: [] for t in t_values}
    rhs_pr = {t: [] for t in t_values}
    for _ in range(n_disorder):
        g = rng.standard_normal((N - 1, N - 1))
        g = np.triu(g, 1)
        g = g + g.T
        gN = rng.standard_normal(N - 1)
        eta = rng.standard_normal()
        base = b / math.sqrt(N) * 0.5 * np.einsum("ki,ij,kj->k", rho, g, rho)
        base = base + params.D * (rho * rho).sum(1) + params.h * rho.sum(1)
        fields = [rho @ gN, -(rho @ gN)]

        def nu_f(t):
            return 0.5 * sum(_f_value(cs, cs.probs(base, fg, eta, t), f_pairs, use_minus) for fg in fields)

        for t in t_values:
            if t == 0.0:
                f0, f1, f2 = nu_f(0.0), nu_f(step), nu_f(2 * step)
                d = (-3 * f0 + 4 * f1 - f2) / (2 * step)
            else:
                if not 0 < t < 1:
                    raise ValueError("t must lie in [0, 1)")
                h1 = min(step, t / 2, (1 - t) / 2)
                fp1, fm1 = nu_f(t + h1), nu_f(t - h1)
                fp2, fm2 = nu_f(t + 2 * h1), nu_f(t - 2 * h1)
                d = (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * h1)
            lhs[t].append(d)
            r_ok, r_pr = 0.0, 0.0
            for fg in fields:
                p = cs.probs(base, fg, eta, t)
                a1, a2 = derivative_terms(cs, p, f_pairs, n, use_minus)
                r_ok += 0.5 * a1
                r_pr += 0.5 * a2
            rhs[t].append(r_ok)
            rhs_pr[t].append(r_pr)
    reports = []
    for t in t_values:
        L, R, RP = np.array(lhs[t]), np.array(rhs[t]), np.array(rhs_pr[t])
        lv, lse = jackknife(L)
        rv, rse = jackknife(R)
        pv, pse = jackknife(RP)
        _, dse = jackknife(L - R)
        reports.append(DerivativeReport(t, lv, lse, rv, rse, pv, pse, dse, n_disorder))
    return reports


def last_spin_average(params: ModelParams, rs: RSOrderParams, replica_poly, n_eta: int = 200_000, seed: int = 0):
    """nu_0 of a last-spin replica polynomial by sampling the cavity field.

    Independent of the quadrature route in :mod:`constants`: eta is sampled,
    the N = 1 cavity Gibbs vector is enumerated directly, and each monomial
    is averaged as a product over replicas.  Returns (mean, standard error).
    """
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal(n_eta)
    s = params.spin_values.astype(np.float64)
    b = params.beta
    logw = (b * math.sqrt(rs.q) * eta)[:, None] * s + (0.5 * b * b * (rs.p - rs.q) + params.D) * s * s + params.h * s
    probs = _normalise(logw)
    vals = np.zeros(n_eta)
    for mono, coeff in replica_poly.terms.items():
        term = np.full(n_eta, coeff)
        for r in set(mono):
            power = mono.count(r)
            term *= probs @ s**power
        vals += term
    return jackknife(vals)

