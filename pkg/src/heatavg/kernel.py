"""Gaussian heat kernel ``p(t, x) = exp(-x^2 / 4t) / (2 sqrt(pi t))`` and friends."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

SQRT_PI = math.sqrt(math.pi)
TRUNCATION_STD = 8.0


@dataclass(frozen=True)
class KernelParams:
    """Constants of ``|dp/dx| <= (C/t) exp(-lambda x^2 / t)``."""

    C_dx: float = math.exp(-0.5) / (2.0 * SQRT_PI)
    lambda_dx: float = 0.125
    T: float = 1.0

    def __post_init__(self):
        if self.C_dx <= 0 or self.lambda_dx <= 0 or self.T <= 0:
            raise ValueError("kernel constants and horizon must be positive")


def _check_time(t):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("time must be positive")


def heat_kernel(t, x):
    _check_time(t)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x / (4.0 * t)) / (2.0 * np.sqrt(math.pi * t))
    return out if out.ndim else float(out)


def heat_kernel_dx(t, x):
    """Analytic ``dp/dx``."""
    return -np.asarray(x, dtype=float) / (2.0 * np.asarray(t, dtype=float)) * heat_kernel(t, x)


def kernel_time_integral(v, d):
    """``int_0^v p(r, d) dr`` in closed form; zero at ``v = 0``."""
    v = np.asarray(v, dtype=float)
    d = np.abs(np.asarray(d, dtype=float))
    v, d = np.broadcast_arrays(v, d)
    out = np.zeros(v.shape)
    pos = v > 0
    sv = np.sqrt(v[pos])
    dd = d[pos]
    out[pos] = sv / SQRT_PI * np.exp(-dd * dd / (4.0 * v[pos])) - 0.5 * dd * erfc(dd / (2.0 * sv))
    return out


def kernel_time_moment(v, d):
    """``int_0^v r p(r, d) dr`` in closed form."""
    v = np.asarray(v, dtype=float)
    d = np.abs(np.asarray(d, dtype=float))
    v, d = np.broadcast_arrays(v, d)
    out = np.zeros(v.shape)
    pos = v > 0
    sv = np.sqrt(v[pos])
    vv, dd = v[pos], d[pos]
    out[pos] = (dd ** 3 / 12.0 * erfc(dd / (2.0 * sv))
                + sv * (2.0 * vv - dd * dd) * np.exp(-dd * dd / (4.0 * vv)) / (6.0 * SQRT_PI))
    return out


def kernel_weights(t: float, dx: float, n_std: float = TRUNCATION_STD) -> np.ndarray:
    """Trapezoid weights ``p(t, m dx) dx`` for ``|m dx| <= n_std sqrt(2t)``.

    Normalised to unit sum, which only matters when ``sqrt(t)`` is not
    resolved by ``dx``.
    """
    _check_time(t)
    half = int(math.ceil(n_std * math.sqrt(2.0 * t) / dx))
    m = np.arange(-half, half + 1) * dx
    w = heat_kernel(t, m) * dx
    return w / w.sum()


def kernel_convolve(field, t: float, dx: float, n_std: float = TRUNCATION_STD) -> np.ndarray:
    """``(P_t field)(x_j)`` on a uniform grid.

    Outside the grid the field is continued by its edge values, so constants
    are reproduced exactly up to rounding.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim != 1 or field.size < 2:
        raise ValueError("field must be a 1-d array on the spatial grid")
    w = kernel_weights(t, dx, n_std)
    half = w.size // 2
    padded = np.pad(field, half, mode="edge")
    return np.convolve(padded, w, mode="valid")


def kernel_dx_bound_check(t: float, x: float, params: KernelParams = KernelParams(),
                          rtol: float = 1e-12) -> dict:
    """Compare ``|dp/dx|(t, x)`` with ``(C/t) exp(-lambda x^2 / t)``.

    The shipped constants make the bound tangent at ``|x| = 2 sqrt(t)``, hence
    the rounding slack ``rtol``.
    """
    _check_time(t)
    lhs = abs(x) / (2.0 * t) * heat_kernel(t, x)
    rhs = params.C_dx / t * math.exp(-params.lambda_dx * x * x / t)
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs * (1.0 + rtol))}


def log_tail_bound(b: float, t: float, T: float, atol: float = 1e-9) -> dict:
    """``int_0^t exp(-b/v)/v dv = int_{b/t}^inf exp(-z)/z dz <= |ln(T/b)| + 1``."""
    if b <= 0 or t <= 0 or T <= 0:
        raise ValueError("b, t and T must be positive")
    if t > T:
        raise ValueError("t must not exceed the horizon T")
    z0 = b / t
    f = lambda z: math.exp(-z) / z
    if z0 < 1.0:
        head, _ = integrate.quad(f, z0, 1.0, epsabs=atol, epsrel=1e-12, limit=200)
        tail, _ = integrate.quad(f, 1.0, np.inf, epsabs=atol, epsrel=1e-12, limit=200)
        lhs = head + tail
    else:
        lhs, _ = integrate.quad(f, z0, np.inf, epsabs=atol, epsrel=1e-12, limit=200)
    rhs = abs(math.log(T / b)) + 1.0
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + atol)}
