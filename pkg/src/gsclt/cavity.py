"""Single-spin cavity measure and the replica-symmetric fixed point.

At interpolation time t = 0 the last spin only feels a Gaussian field
``beta * eta * sqrt(q)`` plus the quadratic correction ``beta^2/2 (p - q)``.
Given eta, replicas are independent, so every last-spin average reduces to a
polynomial in the local moments m_r(eta) = <sigma^r>, r = 1..4, integrated
against the standard normal law of eta by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .model import ModelParams

DEFAULT_ORDER = 64
DAMPING = 0.5
TOLERANCE = 1e-12
MAX_ITER = 10_000


class ConvergenceError(RuntimeError):
    pass


class QuadratureWarning(UserWarning):
    pass


class MultipleRootWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RSOrderParams:
    q: float
    p: float

    def __post_init__(self):
        if self.q < -1e-14 or self.p < self.q - 1e-14:
            raise ValueError(f"need 0 <= q <= p, got q={self.q}, p={self.p}")


@lru_cache(maxsize=16)
def gauss_hermite(order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(eta)], eta ~ N(0, 1); weights sum to one."""
    x, w = hermegauss(order)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def local_weights(params: ModelParams, rs: RSOrderParams, eta) -> np.ndarray:
    """Probabilities of sigma = -S..S under the t = 0 cavity measure.

    ``eta`` may be a scalar or an array; the state axis is last.
    """
    if rs.q < 0:
        raise ValueError("q must be non-negative")
    s = params.spin_values.astype(np.float64)
    eta = np.asarray(eta, dtype=np.float64)[..., None]
    b = params.beta
    logw = b * eta * np.sqrt(rs.q) * s + (0.5 * b * b * (rs.p - rs.q) + params.D) * s * s + params.h * s
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class CavityMomentTable:
    """Local moments m_1..m_4 at each quadrature node."""

    nodes: np.ndarray
    weights: np.ndarray
    moments: np.ndarray  # shape (4, order): row r-1 holds m_r

    @classmethod
    def build(cls, params: ModelParams, rs: RSOrderParams, order: int = DEFAULT_ORDER):
        x, w = gauss_hermite(order)
        probs = local_weights(params, rs, x)
        s = params.spin_values.astype(np.float64)
        moments = np.stack([probs @ s**r for r in range(1, 5)])
        return cls(x, w, moments)

    @property
    def m(self) -> tuple[np.ndarray, ...]:
        return tuple(self.moments)

    def expect(self, poly: Callable[..., np.ndarray]) -> float:
        vals = np.broadcast_to(np.asarray(poly(*self.moments), dtype=np.float64), self.weights.shape)
        return float(vals @ self.weights)


def cavity_expectation(
    params: ModelParams,
    rs: RSOrderParams,
    poly: Callable[..., np.ndarray],
    order: int = DEFAULT_ORDER,
    check: bool = False,
) -> float:
    """E_eta[poly(m1, m2, m3, m4)].

    With ``check=True`` the result is recomputed at twice the order and a
    :class:`QuadratureWarning` is emitted when the two differ by more than 1e-9.
    """
    value = CavityMomentTable.build(params, rs, order).expect(poly)
    if check:
        fine = CavityMomentTable.build(params, rs, 2 * order).expect(poly)
        if abs(fine - value) > 1e-9:
            warnings.warn(
                f"quadrature not converged: order {order} gives {value!r}, order {2 * order} gives {fine!r}",
                QuadratureWarning,
                stacklevel=2,
            )
    return value


def _update(params: ModelParams, q: float, p: float, order: int) -> tuple[float, float]:
    tab = CavityMomentTable.build(params, RSOrderParams(q, p), order)
    m1, m2 = tab.moments[0], tab.moments[1]
    return float((m1 * m1) @ tab.weights), float(m2 @ tab.weights)


def _polish(params, q, p, order, res, max_steps=50):
    """Plain iterations while the residual keeps shrinking (down to roundoff)."""
    for _ in range(max_steps):
        q_new, p_new = _update(params, q, p, order)
        new_res = max(abs(q_new - q), abs(p_new - p))
        if new_res >= res:
            break
        q, p, res = q_new, p_new, new_res
    return q, p


def _iterate(params, q, p, order, damping, tol, max_iter):
    for it in range(max_iter):
        q_new, p_new = _update(params, q, p, order)
        res = max(abs(q_new - q), abs(p_new - p))
        if res < tol:
            return _polish(params, q_new, p_new, order, res) + (it,)
        q = (1 - damping) * q + damping * q_new
        p = (1 - damping) * p + damping * p_new
    raise ConvergenceError(f"fixed point did not converge in {max_iter} iterations (last residual {res:.3e})")


def solve_fixed_point(
    params: ModelParams,
    order: int = DEFAULT_ORDER,
    damping: float = DAMPING,
    tol: float = TOLERANCE,
    max_iter: int = MAX_ITER,
    second_start: bool = True,
) -> RSOrderParams:
    """Damped iteration of q = E[m1^2], p = E[m2] from (q, p) = (0, S^2/2)."""
    S2 = params.S**2
    q, p, _ = _iterate(params, 0.0, S2 / 2, order, damping, tol, max_iter)
    if second_start:
        try:
            q2, p2, _ = _iterate(params, 0.9 * S2, S2, order, damping, tol, max_iter)
        except ConvergenceError:
            q2, p2 = q, p
        if max(abs(q2 - q), abs(p2 - p)) > 1e-8:
            warnings.warn(
                f"fixed point not unique: (q, p) = ({q:.10g}, {p:.10g}) and ({q2:.10g}, {p2:.10g})",
                MultipleRootWarning,
                stacklevel=2,
            )
    # exact symmetry at h = 0 can leave q at a denormal-sized residue
    if params.h == 0 and abs(q) < 1e-15:
        q = 0.0
    return RSOrderParams(max(q, 0.0), p)


def fixed_point_residual(params: ModelParams, rs: RSOrderParams, order: int = DEFAULT_ORDER) -> tuple[float, float]:
    q_new, p_new = _update(params, rs.q, rs.p, order)
    return q_new - rs.q, p_new - rs.p
