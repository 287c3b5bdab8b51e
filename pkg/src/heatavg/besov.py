"""Besov ``B^alpha_22`` norms, L2 modulus of continuity and dyadic difference sums."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .measure import SMRealization


@dataclass(frozen=True)
class SampledFunction:
    """Samples of a function on ``[c, d]`` at step ``delta``."""

    c: float
    d: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("need at least two samples")
        if not self.d > self.c:
            raise ValueError("degenerate interval")
        if not np.all(np.isfinite(vals)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, fn, c: float, d: float, n: int) -> SampledFunction:
        """``n`` intervals of equal length."""
        y = np.linspace(c, d, n + 1)
        return cls(c, d, np.asarray(fn(y), dtype=float) * np.ones_like(y))

    @property
    def delta(self) -> float:
        return (self.d - self.c) / (self.values.size - 1)

    @property
    def n_intervals(self) -> int:
        return self.values.size - 1


@dataclass(frozen=True)
class BesovReport:
    l2_part: float
    modulus_integral: float
    norm: float
    alpha: float


def shift_norms(g: SampledFunction) -> np.ndarray:
    """``(sum_y |g(y+h) - g(y)|^2 delta)^1/2`` for ``h = i delta``, left-point sums over ``[c, d-h)``."""
    v = g.values
    n = g.n_intervals
    out = np.zeros(n + 1)
    for i in range(1, n + 1):
        diff = v[i:i + n - i] - v[:n - i]
        out[i] = np.sqrt(np.dot(diff, diff) * g.delta)
    return out


def w2_modulus(g: SampledFunction, r: float) -> float:
    if not 0.0 <= r <= g.d - g.c + 1e-12:
        raise ValueError("r must lie in [0, d - c]")
    i_max = int(np.floor(r / g.delta + 1e-9))
    return float(shift_norms(g)[:i_max + 1].max())


def w2_profile(g: SampledFunction) -> np.ndarray:
    """``w2(g, i delta)`` for ``i = 0..n``."""
    return np.maximum.accumulate(shift_norms(g))


def besov_norm(g: SampledFunction, alpha: float) -> BesovReport:
    """Discrete ``B^alpha_22`` norm at resolution ``delta``.

    ``w2`` is constant between grid shifts, so the modulus integral over
    ``[delta, d - c]`` is summed exactly panel by panel.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    v = g.values
    l2 = float(np.sqrt(trapezoid(v * v, dx=g.delta)))
    w = w2_profile(g)
    r = np.arange(g.n_intervals + 1) * g.delta
    lo, hi = r[1:-1], r[2:]
    panel = (lo ** (-2 * alpha) - hi ** (-2 * alpha)) / (2 * alpha)
    integral = float(np.dot(w[1:-1] ** 2, panel))
    return BesovReport(l2, integral, l2 + float(np.sqrt(integral)), alpha)


def _dyadic_samples(q: SampledFunction, n_max: int) -> np.ndarray:
    if q.values.size != (1 << n_max) + 1:
        raise ValueError(f"need {(1 << n_max) + 1} samples for depth {n_max}, got {q.values.size}")
    return q.values


def dyadic_sum(q: SampledFunction, beta: float, n_max: int) -> float:
    """``(sum_n 2^(n beta) sum_k |q(d_kn) - q(d_(k-1)n)|^2)^1/2`` for ``n = 1..n_max``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    v = _dyadic_samples(q, n_max)
    total = 0.0
    for n in range(1, n_max + 1):
        coarse = v[::1 << (n_max - n)]
        total += 2.0 ** (n * beta) * float(np.sum(np.diff(coarse) ** 2))
    return float(np.sqrt(total))


def measure_square_sum(sm: SMRealization, j: int, beta: float) -> float:
    """``(sum_n 2^(-n beta) sum_k mu(Delta_kn)^2)^1/2`` on ``(j, j+1]``."""
    levels = sm.levels(j)
    total = sum(2.0 ** (-n * beta) * float(np.dot(levels[n], levels[n]))
                for n in range(1, len(levels)))
    return float(np.sqrt(total))


def lemma2_version_and_bound(q: SampledFunction, sm: SMRealization, j: int, beta: float,
                             slack: float = 1e-12) -> dict:
    """Telescoped dyadic integral of ``q`` over ``(j, j+1]`` and its Cauchy-Schwarz bound.

    ``q_n`` takes the value ``q(d_(k-1)n)`` on ``Delta_kn``; the increment
    ``int q_n - int q_(n-1)`` only sees right children, where it equals the
    level-``n`` difference of ``q`` times the child's measure.
    """
    n_max = sm.domain.n_max
    v = _dyadic_samples(q, n_max)
    levels = sm.levels(j)
    eta = v[0] * levels[0][0]
    for n in range(1, n_max + 1):
        coarse = v[::1 << (n_max - n)]
        left_vals = coarse[:-1]
        parent_left = np.repeat(left_vals[0::2], 2)
        eta += float(np.dot(left_vals - parent_left, levels[n]))
    head = abs(v[0] * levels[0][0])
    bound = head + dyadic_sum(q, beta, n_max) * measure_square_sum(sm, j, beta)
    return {"eta_tilde": float(eta), "bound": float(bound), "holds": bool(abs(eta) <= bound + slack)}


def alpha_for_beta(beta: float) -> float:
    return (beta + 1.0) / 2.0
