"""Gaussian mixed moments and the two-index moment recursion.

``isserlis_mixed_moment`` sums products of covariances over all perfect
matchings of the index multiset, using the Stein recursion
E[x_i F] = sum_j cov(x_i, x_j) E[dF/dx_j] on count vectors with memoization.

The recursion solver handles the linear system satisfied by the second-order
constants of a pair (X, Y) whose moments obey

    f(h, h') = (h-1) a2 f(h-2, h') + h' a1 f(h-1, h'-1) + h' a0 g(h, h'-1)
    g(h, h') = (h'-1) b2 g(h, h'-2) + h b1 g(h-1, h'-1) + h b0 f(h-1, h')

(f carrying an X factor, g a Y factor).  Closing the system at second order
gives C20, C02, C11 below.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constants import CovarianceModel, SpinConstants, eta_covariance

MAX_DEGREE = 16


_SPEC_ITEM = re.compile(r"\((\d+),(\d+)\):(\d+)")


class DegreeError(ValueError):
    pass


class ConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class MomentSpec:
    """Exponents m(k, l) of the overlap family, keyed by pairs k <= l <= n."""

    n: int
    m: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, power in self.m.items():
            k, l = (int(x) for x in key)
            if not 1 <= k <= l <= self.n:
                raise ValueError(f"pair {key!r} must satisfy 1 <= k <= l <= n={self.n}")
            if int(power) != power or power < 0:
                raise ValueError(f"exponent for {key!r} must be a non-negative integer")
            if power:
                clean[(k, l)] = clean.get((k, l), 0) + int(power)
        object.__setattr__(self, "m", dict(sorted(clean.items())))

    @property
    def total(self) -> int:
        return sum(self.m.values())

    @classmethod
    def from_pairs(cls, m: dict, n: int | None = None) -> "MomentSpec":
        if n is None:
            n = max((max(k) for k in m), default=1)
        return cls(n, m)

    @classmethod
    def parse(cls, text: str) -> "MomentSpec":
        """Parse ``"(1,2):2,(3,3):1"``."""
        body = text.replace(" ", "")
        if body in ("", "{}", "1"):
            return cls(1, {})
        items = _SPEC_ITEM.findall(body)
        if not items or _SPEC_ITEM.sub("", body).strip(",") or body.count(":") != len(items):
            raise ValueError(f"cannot parse moment spec {text!r}")
        m = {}
        for k, l, power in items:
            key = (int(k), int(l))
            m[key] = m.get(key, 0) + int(power)
        return cls.from_pairs(m)

    def label(self) -> str:
        return ",".join(f"({k},{l}):{v}" for (k, l), v in self.m.items())


def gaussian_moment(cov: np.ndarray, counts) -> float:
    """E[prod_i x_i^{counts[i]}] for a centered Gaussian vector with covariance ``cov``."""
    cov = np.asarray(cov, dtype=np.float64)
    counts = tuple(int(c) for c in counts)
    total = sum(counts)
    if total > MAX_DEGREE:
        raise DegreeError(f"total degree {total} exceeds the guard {MAX_DEGREE}")
    if total % 2:
        return 0.0
    C = cov.tolist()

    @lru_cache(maxsize=None)
    def rec(c: tuple) -> float:
        i = next((k for k, v in enumerate(c) if v), None)
        if i is None:
            return 1.0
        base = list(c)
        base[i] -= 1
        acc = 0.0
        for j, cj in enumerate(base):
            if cj == 0 or C[i][j] == 0.0:
                continue
            nxt = base.copy()
            nxt[j] -= 1
            acc += cj * C[i][j] * rec(tuple(nxt))
        return acc

    return rec(counts)


def isserlis_mixed_moment(cm: CovarianceModel, spec: MomentSpec) -> float:
    """E[prod eta_kl^{m(k,l)}] under the limiting Gaussian overlap family."""
    if spec.total > MAX_DEGREE:
        raise DegreeError(f"total degree {spec.total} exceeds the guard {MAX_DEGREE}")
    pairs = list(spec.m)
    if not pairs or spec.total % 2:
        return 1.0 if not pairs else 0.0
    cov = np.array([[eta_covariance(cm, a, b) for b in pairs] for a in pairs])
    return gaussian_moment(cov, [spec.m[p] for p in pairs])


def moment_covariance(cm: CovarianceModel, spec: MomentSpec) -> np.ndarray:
    pairs = list(spec.m)
    return np.array([[eta_covariance(cm, a, b) for b in pairs] for a in pairs])


@dataclass(frozen=True)
class RecursionCoefficients:
    alpha2: float
    alpha1: float
    alpha0: float
    beta2: float
    beta1: float
    beta0: float

    def consistency_sides(self) -> tuple[float, float]:
        return (
            self.alpha1 + self.alpha0 * self.beta2,
            self.beta1 + self.beta0 * self.alpha2,
        )


def solve_recursion_constants(rc: RecursionCoefficients, tol: float = 1e-10) -> tuple[float, float, float]:
    """(C20, C02, C11) solving the closed second-order system."""
    lhs, rhs = rc.consistency_sides()
    scale = max(1.0, abs(lhs), abs(rhs))
    if abs(lhs - rhs) > tol * scale:
        raise ConsistencyError(f"consistency condition fails: {lhs!r} != {rhs!r}")
    den = 1.0 - rc.alpha0 * rc.beta0
    if abs(den) <= 1e-14:
        raise ZeroDivisionError("1 - alpha0*beta0 is singular")
    c20 = (rc.alpha2 + rc.alpha0 * rc.beta1) / den
    c02 = (rc.beta2 + rc.beta0 * rc.alpha1) / den
    c11 = lhs / den
    return c20, c02, c11


def recursion_moments(C20: float, C02: float, C11: float, base: float, h: int, hp: int) -> float:
    """f(h, h') = base * E[X^h Y^h'] via the two-index recursion."""
    if h < 0 or hp < 0:
        raise ValueError("degrees must be non-negative")

    @lru_cache(maxsize=None)
    def f(a: int, b: int) -> float:
        if a < 0 or b < 0:
            return 0.0
        if a > 0:
            return (a - 1) * C20 * f(a - 2, b) + b * C11 * f(a - 1, b - 1)
        if b > 0:
            return (b - 1) * C02 * f(0, b - 2)
        return base

    return f(h, hp)


def build_TkSk_coefficients(c: SpinConstants, cm: CovarianceModel, N: int) -> RecursionCoefficients:
    """Coefficients of the recursion for the single-replica pair (T_k, S_k)."""
    b2 = c.beta**2
    t12 = b2 * cm.A2sq + 1.0 / N
    return RecursionCoefficients(
        alpha2=c.G * t12 / c.M1,
        alpha1=c.H_c / (N * c.M1),
        alpha0=b2 * c.H_c / (2 * c.M1),
        beta2=c.D_c / (c.M2 * N),
        beta1=c.E * t12 / c.M2,
        beta0=-2 * b2 * c.E / c.M2,
    )


def build_TS_coefficients(c: SpinConstants, cm: CovarianceModel, N: int) -> RecursionCoefficients:
    """Coefficients of the recursion for the replica-free pair (T, S)."""
    b2 = c.beta**2
    g2 = 2 * c.G - c.I3
    ek = c.E - c.K3
    return RecursionCoefficients(
        alpha2=(b2 * (c.I5 * cm.C1sq + 2 * g2 * cm.A1sq + c.I3 * cm.A2sq) + c.I3 / N) / c.M1,
        alpha1=(b2 * (0.5 * c.I5 * cm.B1sq + g2 * cm.C1sq) + c.I5 / N) / c.M1,
        alpha0=b2 * c.E / c.M1,
        beta2=(b2 * (0.5 * c.K4 * cm.B1sq + ek * cm.C1sq) + c.K4 / N) / c.M2,
        beta1=(b2 * (c.K4 * cm.C1sq + 2 * ek * cm.A1sq + c.K3 * cm.A2sq) + c.K3 / N) / c.M2,
        beta0=-b2 * c.E / c.M2,
    )


def recursion_path(c: SpinConstants, cm: CovarianceModel, N: int, tol: float = 1e-10) -> dict:
    """Second-order constants obtained through the recursion solver.

    The (T, S) coefficients are built from the recursion's own (T_k, S_k)
    output, so the two paths share nothing beyond the constants ledger and
    A2sq.
    """
    a1, b1, c1 = solve_recursion_constants(build_TkSk_coefficients(c, cm, N), tol)
    path_cm = CovarianceModel(cm.A2sq, a1, 0.0, b1, 0.0, c1, 0.0, N)
    a0, b0, c0 = solve_recursion_constants(build_TS_coefficients(c, path_cm, N), tol)
    return {"A1sq": a1, "B1sq": b1, "C1sq": c1, "A0sq": a0, "B0sq": b0, "C0sq": c0}
