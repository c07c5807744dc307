"""Last-spin constants and the predicted Gaussian covariance of the overlaps.

Each constant is written as the t = 0 cavity average of a polynomial in the
last spins eps_k of several replicas.  Because replicas are conditionally
independent given the cavity field, a monomial prod_k eps_k^{r_k} averages to
E_eta[prod_k m_{r_k}(eta)]; :class:`ReplicaPoly` performs that reduction, so
the constants are evaluated straight from their replica definitions.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .cavity import DEFAULT_ORDER, CavityMomentTable, RSOrderParams
from .model import ModelParams


class IdentityError(AssertionError):
    pass


class UncertifiedRegimeError(ValueError):
    pass


class ReplicaPoly:
    """Polynomial in last spins of replicas: {sorted replica multiset: coeff}."""

    def __init__(self, terms=None):
        self.terms: dict[tuple, float] = defaultdict(float)
        for k, v in (terms or {}).items():
            self.terms[tuple(sorted(k))] += v

    @classmethod
    def eps(cls, *replicas: int) -> "ReplicaPoly":
        """Monomial eps_{r1} eps_{r2} ..."""
        return cls({tuple(replicas): 1.0})

    @classmethod
    def const(cls, c: float) -> "ReplicaPoly":
        return cls({(): float(c)})

    def __add__(self, other):
        other = other if isinstance(other, ReplicaPoly) else ReplicaPoly.const(other)
        out = ReplicaPoly(self.terms)
        for k, v in other.terms.items():
            out.terms[k] += v
        return out

    def __neg__(self):
        return ReplicaPoly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, ReplicaPoly) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, ReplicaPoly):
            return ReplicaPoly({k: v * other for k, v in self.terms.items()})
        out = ReplicaPoly()
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                out.terms[tuple(sorted(k1 + k2))] += v1 * v2
        return out

    __rmul__ = __mul__
    __radd__ = __add__

    def average(self, table: CavityMomentTable) -> float:
        """nu_0 of the polynomial under the cavity measure tabulated in ``table``."""
        m = table.moments
        acc = np.zeros_like(table.weights)
        for mono, coeff in self.terms.items():
            if coeff == 0.0:
                continue
            term = np.full_like(table.weights, coeff)
            for power in Counter(mono).values():
                if power > 4:
                    raise ValueError("moments above order 4 are not tabulated")
                term = term * m[power - 1]
            acc += term
        return float(acc @ table.weights)


def eps(*r):
    return ReplicaPoly.eps(*r)


@dataclass(frozen=True)
class SpinConstants:
    A: float
    D_c: float
    E: float
    F: float
    G: float
    H_c: float
    I1: float
    I2: float
    I3: float
    I4: float
    I5: float
    K1: float
    K2: float
    K3: float
    K4: float
    M1: float
    M2: float
    M3: float
    M: float
    beta: float
    q: float
    p: float

    @property
    def rs(self) -> RSOrderParams:
        return RSOrderParams(self.q, self.p)

    def as_dict(self) -> dict:
        return asdict(self)

    def identity_residuals(self) -> dict[str, float]:
        b2 = self.beta**2
        return {
            "E = H": self.E - self.H_c,
            "A = F - G": self.A - (self.F - self.G),
            "I1 - I2 = F": self.I1 - self.I2 - self.F,
            "I2 - I3 = G": self.I2 - self.I3 - self.G,
            "I4 - I5 = E": self.I4 - self.I5 - self.E,
            "K1 = I4": self.K1 - self.I4,
            "K3 = I5": self.K3 - self.I5,
            "K1 - K3 = E": self.K1 - self.K3 - self.E,
            "K2 - K4 = D": self.K2 - self.K4 - self.D_c,
            "M1 = 1 - b^2 (F - 3G)": self.M1 - (1 - b2 * (self.F - 3 * self.G)),
            "M2 = 1 - b^2 D / 2": self.M2 - (1 - 0.5 * b2 * self.D_c),
            "M3 = 1 - b^2 (F - G)": self.M3 - (1 - b2 * (self.F - self.G)),
            "M = M1 M2 + b^4 E^2": self.M - (self.M1 * self.M2 + b2 * b2 * self.E**2),
        }

    def check_identities(self, tol: float = 1e-11) -> dict[str, float]:
        res = self.identity_residuals()
        bad = {k: v for k, v in res.items() if not abs(v) <= tol}
        if bad:
            name, val = next(iter(bad.items()))
            raise IdentityError(f"identity '{name}' violated: residual {val:.3e} > {tol:.1e}")
        return res

    def positivity(self, S: int) -> dict[str, bool]:
        """Sign conditions expected when beta < 1/(2 S^2)."""
        bound = 4 * S**4
        return {
            "F - G in [0, 4S^4]": 0 <= self.F - self.G <= bound,
            "F - 3G in [0, 4S^4]": 0 <= self.F - 3 * self.G <= bound,
            "D in (0, 4S^4]": 0 < self.D_c <= bound,
            "M1 > 0": self.M1 > 0,
            "M2 > 0": self.M2 > 0,
            "M3 > 0": self.M3 > 0,
        }


def constant_definitions(q: float, p: float) -> dict[str, ReplicaPoly]:
    """Replica expressions defining each last-spin constant."""
    return {
        "A": (eps(1) - eps(3)) * (eps(2) - eps(4)) * eps(1, 2),
        "D_c": (eps(1, 1) - eps(2, 2)) * eps(1, 1),
        "F": (eps(1, 3) - eps(2, 3)) * eps(1, 3),
        "G": (eps(1, 3) - eps(2, 3)) * eps(1, 4),
        "E": (eps(1, 1) - eps(2, 2)) * eps(1, 3),
        "H_c": (eps(1, 3) - eps(2, 3)) * eps(1, 1),
        "I1": (eps(1, 2) - q) * eps(1, 2),
        "I2": (eps(1, 2) - q) * eps(1, 3),
        "I3": (eps(1, 2) - q) * eps(3, 4),
        "I4": (eps(1, 2) - q) * eps(1, 1),
        "I5": (eps(1, 2) - q) * eps(3, 3),
        "K1": (eps(1, 1) - p) * eps(1, 2),
        "K2": (eps(1, 1) - p) * eps(1, 1),
        "K3": (eps(1, 1) - p) * eps(2, 3),
        "K4": (eps(1, 1) - p) * eps(2, 2),
    }


def compute_spin_constants(
    params: ModelParams,
    rs: RSOrderParams,
    order: int = DEFAULT_ORDER,
    check: bool = True,
) -> SpinConstants:
    table = CavityMomentTable.build(params, rs, order)
    vals = {name: poly.average(table) for name, poly in constant_definitions(rs.q, rs.p).items()}
    b2 = params.beta**2
    M1 = 1 - b2 * (vals["F"] - 3 * vals["G"])
    M2 = 1 - 0.5 * b2 * vals["D_c"]
    M3 = 1 - b2 * (vals["F"] - vals["G"])
    M = M1 * M2 + b2 * b2 * vals["E"] * vals["H_c"]
    c = SpinConstants(**vals, M1=M1, M2=M2, M3=M3, M=M, beta=params.beta, q=rs.q, p=rs.p)
    if check:
        c.check_identities()
    return c


@dataclass(frozen=True)
class CovarianceModel:
    """Variances/covariances of the Gaussian basis at system size N."""

    A2sq: float
    A1sq: float
    A0sq: float
    B1sq: float
    B0sq: float
    C1sq: float
    C0sq: float
    N: int

    def scaled(self, factor: float) -> "CovarianceModel":
        kw = {f.name: getattr(self, f.name) * factor for f in fields(self) if f.name != "N"}
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)

    def blocks(self) -> tuple[np.ndarray, np.ndarray]:
        s1 = np.array([[self.A1sq, self.C1sq], [self.C1sq, self.B1sq]])
        s0 = np.array([[self.A0sq, self.C0sq], [self.C0sq, self.B0sq]])
        return s1, s0

    def is_psd(self, tol: float = 1e-12) -> bool:
        return all(np.linalg.eigvalsh(b).min() >= -tol for b in self.blocks())


def predict_covariance(c: SpinConstants, N: int) -> CovarianceModel:
    if min(c.M1, c.M2, c.M3, c.M) <= 0:
        raise UncertifiedRegimeError(
            f"outside certified regime: M1={c.M1:.4g}, M2={c.M2:.4g}, M3={c.M3:.4g}, M={c.M:.4g}"
        )
    b2 = c.beta**2
    E, M, M1, M2, M3 = c.E, c.M, c.M1, c.M2, c.M3
    A2 = c.A / (N * (1 - b2 * c.A))
    A1 = (c.G * M2 + 0.5 * b2 * E * c.H_c) / (M * N * M3)
    B1 = (c.D_c * M1 - 2 * b2 * E**2) / (N * M)
    C1 = E / (N * M)
    two_g = 2 * c.G - c.I3
    e_k = E - c.K3
    A0 = (
        b2 / M * (b2 * E * c.K4 + M2 * c.I5) * C1
        + 2 * b2 / M * (b2 * E * e_k + M2 * two_g) * A1
        + b2 / M * (b2 * E * c.K3 + M2 * c.I3) * A2
        + (b2 * E * c.K3 + M2 * c.I3) / (M * N)
    )
    B0 = (
        b2 / (2 * M) * (M1 * c.K4 - b2 * E * c.I5) * B1
        + b2 / M * (M1 * e_k - E * b2 * two_g) * C1
        + (M1 * c.K4 - b2 * E * c.I5) / (M * N)
    )
    # the B1sq coefficient carries 1/2 on both terms; this is what the
    # (T, S) recursion produces, see c0sq_as_printed for the other reading
    C0 = (
        b2 / M * 0.5 * (M2 * c.I5 + b2 * E * c.K4) * B1
        + b2 / M * (M2 * two_g + b2 * E * e_k) * C1
        + (M2 * c.I5 + b2 * E * c.K4) / (M * N)
    )
    return CovarianceModel(A2, A1, A0, B1, B0, C1, C0, int(N))


def c0sq_as_printed(c: SpinConstants, cm: CovarianceModel) -> float:
    """C0sq with the B1sq coefficient (M2 I5 / 2 + b^2 E K4), i.e. without the
    1/2 on the second term.  Differs from ``cm.C0sq`` by b^4 E K4 B1sq / (2M)."""
    b2 = c.beta**2
    return cm.C0sq + b2 * b2 * c.E * c.K4 * cm.B1sq / (2 * c.M)


def a1sq_alternate(c: SpinConstants, N: int) -> float:
    """(1/(2 beta^2 N)) (1/M3 - M2/M); equal to A1sq for beta > 0."""
    return (1 / c.M3 - c.M2 / c.M) / (2 * c.beta**2 * N)


def b1sq_alternate(c: SpinConstants, N: int) -> float:
    """(2/(N beta^2)) (M1/M - 1); equal to B1sq for beta > 0."""
    return 2 / (N * c.beta**2) * (c.M1 / c.M - 1)


def _pair(p) -> tuple[int, int]:
    try:
        k, l = (int(x) for x in p)
    except (TypeError, ValueError):
        raise ValueError(f"malformed replica pair {p!r}") from None
    if k < 1 or k > l:
        raise ValueError(f"replica pair must satisfy 1 <= k <= l, got {p!r}")
    return k, l


def eta_covariance(cm: CovarianceModel, pair1, pair2) -> float:
    """cov(eta_kl, eta_k'l') for the limiting Gaussian overlap family."""
    k, l = _pair(pair1)
    k2, l2 = _pair(pair2)
    s1, s2 = {k, l}, {k2, l2}
    shared = len(s1 & s2)
    if len(s1) == 2 and len(s2) == 2:
        return cm.A2sq * (shared == 2) + shared * cm.A1sq + cm.A0sq
    if len(s1) == 1 and len(s2) == 1:
        return cm.B1sq * (shared == 1) + cm.B0sq
    return cm.C1sq * (shared == 1) + cm.C0sq
