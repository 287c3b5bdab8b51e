"""Coefficient families ``sigma(s, y) = m(s) a(y)``, drift ``f`` and initial data ``u0``.

Every shipped noise coefficient is separable: a time modulation ``m`` times
a bounded spatial amplitude ``a``.  The time average of ``sigma`` is then
``mean(m) * a(y)`` and the centred primitive ``G_sigma`` is
``(M(r) - mean(m) r) a(y)`` with ``M`` the primitive of ``m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.integrate import simpson

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Modulation:
    name: str
    fn: Callable
    mean: float
    primitive: Callable | None
    period: float | None
    sup: float
    bounded_primitive: bool


def _cos_shift_primitive(r):
    return 2.0 * r + np.sin(r)


MODULATIONS = {
    "2+cos": Modulation("2+cos", lambda s: 2.0 + np.cos(s), 2.0, _cos_shift_primitive,
                        2 * math.pi, 3.0, True),
    "sin": Modulation("sin", np.sin, 0.0, lambda r: 1.0 - np.cos(r), 2 * math.pi, 1.0, True),
    "constant": Modulation("constant", lambda s: np.ones_like(np.asarray(s, dtype=float)), 1.0,
                           lambda r: np.asarray(r, dtype=float), None, 1.0, True),
    "quasiperiodic": Modulation(
        "quasiperiodic", lambda s: np.sin(s) + np.sin(SQRT2 * s), 0.0,
        lambda r: (1.0 - np.cos(r)) + (1.0 - np.cos(SQRT2 * r)) / SQRT2, 2 * math.pi, 2.0, True),
    # Cesaro mean zero, but the centred primitive grows like sqrt(r)
    "chirp": Modulation(
        "chirp", lambda s: np.sin(np.sqrt(s)), 0.0,
        lambda r: 2.0 * (np.sin(np.sqrt(r)) - np.sqrt(r) * np.cos(np.sqrt(r))), 2 * math.pi, 1.0,
        False),
}

FAMILIES = {
    "periodic_product": ("2+cos", "sin"),
    "time_constant": ("constant",),
    "quasiperiodic": ("quasiperiodic",),
    "chirp": ("chirp",),
}

SMOOTH_LIPSCHITZ = math.exp(-0.5) / 2.0


def holder_amplitude(beta: float):
    return lambda y: (1.0 + np.abs(y) ** beta) * np.exp(-np.asarray(y, dtype=float) ** 2 / 8.0)


def smooth_amplitude(y):
    return np.exp(-np.asarray(y, dtype=float) ** 2 / 8.0)


@dataclass(frozen=True)
class SigmaSpec:
    """``sigma(s, y) = m(s) a(y)``.

    With ``smooth=False`` the amplitude is ``(1 + |y|^beta) exp(-y^2/8)``,
    whose beta-Holder constant is 1.  With ``smooth=True`` it is
    ``exp(-y^2/8)`` and ``beta_sigma`` is 1.
    """

    family: str = "periodic_product"
    modulation: str = "2+cos"
    beta_sigma: float = 0.75
    smooth: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown sigma family {self.family!r}")
        if self.family != "periodic_product":
            object.__setattr__(self, "modulation", FAMILIES[self.family][0])
        elif self.modulation not in FAMILIES["periodic_product"]:
            raise ValueError(f"periodic_product needs modulation in {FAMILIES['periodic_product']}")
        if self.smooth:
            object.__setattr__(self, "beta_sigma", 1.0)
        elif not 0.5 < self.beta_sigma < 1.0:
            raise ValueError("beta_sigma must lie in (1/2, 1)")

    @property
    def m(self) -> Modulation:
        return MODULATIONS[self.modulation]

    @property
    def period(self) -> float | None:
        return self.m.period

    @property
    def has_bounded_primitive(self) -> bool:
        return self.m.bounded_primitive

    def amplitude(self, y):
        return smooth_amplitude(y) if self.smooth else holder_amplitude(self.beta_sigma)(y)

    @property
    def amplitude_holder(self) -> float:
        return SMOOTH_LIPSCHITZ if self.smooth else 1.0

    @property
    def L_sigma(self) -> float:
        return self.m.sup * self.amplitude_holder

    @property
    def M_sigma(self) -> float:
        return self.m.sup * amplitude_sup(self.beta_sigma, self.smooth)

    def __call__(self, s, y):
        return self.m.fn(np.asarray(s, dtype=float)) * self.amplitude(y)

    def centred(self, s, y):
        """``sigma(s, y) - sigma_bar(y)``."""
        return (self.m.fn(np.asarray(s, dtype=float)) - self.m.mean) * self.amplitude(y)


def amplitude_sup(beta: float, smooth: bool) -> float:
    if smooth:
        return 1.0
    a = holder_amplitude(beta)
    res = optimize.minimize_scalar(lambda y: -a(y), bounds=(0.0, 6.0), method="bounded",
                                   options={"xatol": 1e-10})
    return float(-res.fun) * (1.0 + 1e-9)


def period_average(fn: Callable, period: float) -> float:
    val, _ = integrate.quad(fn, 0.0, period, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val / period


def sigma_bar_of(spec: SigmaSpec) -> Callable:
    """The time average ``sigma_bar(y)`` as a function of ``y``."""
    mean = spec.m.mean
    return lambda y: mean * spec.amplitude(y)


def G_sigma(spec: SigmaSpec, r, y):
    """``int_0^r (sigma(s, y) - sigma_bar(y)) ds``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    return (spec.m.primitive(r) - spec.m.mean * r) * spec.amplitude(y)


def G_sigma_quadrature(spec: SigmaSpec, r: float, y: float) -> float:
    """Independent route to ``G_sigma`` by adaptive quadrature."""
    if r == 0:
        return 0.0
    val, _ = integrate.quad(lambda s: float(spec.centred(s, y)), 0.0, r,
                            epsabs=1e-12, epsrel=1e-12, limit=max(200, int(4 * r)))
    return val


def holder_estimate(fn: Callable, exponent: float, interval: tuple[float, float],
                    n_pairs: int = 20_000) -> float:
    """Largest ``|fn(y1) - fn(y2)| / |y1 - y2|^exponent`` over all pairs of a uniform grid."""
    if not 0.0 < exponent <= 1.0:
        raise ValueError("exponent must lie in (0, 1]")
    if n_pairs < 100:
        raise ValueError("need at least 100 pairs")
    lo, hi = interval
    if not hi > lo:
        raise ValueError("degenerate interval")
    n = int(math.ceil((1.0 + math.sqrt(1.0 + 8.0 * n_pairs)) / 2.0))
    y = np.linspace(lo, hi, n)
    v = np.asarray(fn(y), dtype=float) * np.ones_like(y)
    best = 0.0
    for i in range(1, n):
        dv = np.abs(v[i:] - v[:-i])
        best = max(best, float(dv.max()) / (i * (y[1] - y[0])) ** exponent)
    return best


def averaged_oscillation_integral(spec: SigmaSpec, eps: float, D: float, t: float, y: float,
                                  rtol: float = 1e-6, atol: float = 1e-12,
                                  max_points: int = 1 << 24) -> float:
    """``eps^-1/2 int_0^t (t-s)^-1/2 exp(-D/(t-s)) (sigma(s/eps, y) - sigma_bar(y)) ds``.

    Evaluated as ``eps^-1/2 int_0^sqrt(t) 2 exp(-D/u^2) H((t-u^2)/eps, y) du``
    with Simpson's rule, doubling the resolution until two successive values
    agree.
    """
    if eps <= 0 or D <= 0 or t <= 0:
        raise ValueError("eps, D and t must be positive")
    amp = float(spec.amplitude(y))
    mfn, mean = spec.m.fn, spec.m.mean
    if spec.family == "time_constant" or amp == 0.0:
        return 0.0
    st = math.sqrt(t)
    # 16 nodes per fast period at the fastest point u = sqrt(t)
    n = int(64 + 16 * 2.0 * t / (eps * 2 * math.pi))
    n += n % 2

    def simpson_at(n):
        u = np.linspace(0.0, st, n + 1)
        with np.errstate(divide="ignore"):
            damp = np.where(u > 0, np.exp(-D / (u * u)), 0.0)
        vals = 2.0 * damp * (mfn((t - u * u) / eps) - mean)
        return simpson(vals, x=u)

    prev = simpson_at(n)
    while True:
        n *= 2
        cur = simpson_at(n)
        if abs(cur - prev) <= max(rtol * abs(cur), atol):
            return amp * cur / math.sqrt(eps)
        if n > max_points:
            raise ArithmeticError("oscillation integral did not converge")
        prev = cur


@dataclass(frozen=True)
class CoefficientSet:
    """Everything the mild equation needs besides the noise."""

    sigma: SigmaSpec = field(default_factory=SigmaSpec)
    f_name: str = "half_rational"
    u0_name: str = "gauss"

    @property
    def f(self) -> Callable:
        return DRIFTS[self.f_name][0]

    @property
    def L_f(self) -> float:
        return DRIFTS[self.f_name][1]

    @property
    def M_f(self) -> float:
        return DRIFTS[self.f_name][2]

    @property
    def u0(self) -> Callable:
        return INITIAL[self.u0_name][0]

    @property
    def beta_u0(self) -> float:
        return INITIAL[self.u0_name][1]

    @property
    def sigma_bar(self) -> Callable:
        return sigma_bar_of(self.sigma)


# name -> (f(y, z), Lipschitz constant, sup |f|)
DRIFTS = {
    "zero": (lambda y, z: np.zeros_like(z), 0.0, 0.0),
    "half_rational": (lambda y, z: 0.5 * z / (1.0 + z * z), 0.5, 0.25),
    "clamp": (lambda y, z: np.clip(z, -1.0, 1.0), 1.0, 1.0),
}

# name -> (u0(y), Holder exponent)
INITIAL = {
    "gauss": (lambda y: np.exp(-np.asarray(y, dtype=float) ** 2 / 4.0), 1.0),
    "zero": (lambda y: np.zeros_like(np.asarray(y, dtype=float)), 1.0),
}


def check_drift(name: str, n: int = 201) -> float:
    """Empirical Lipschitz constant of a drift over ``[-4, 4]^2``."""
    f = DRIFTS[name][0]
    y, z = np.meshgrid(np.linspace(-4, 4, n), np.linspace(-4, 4, n), indexing="ij")
    v = f(y, z)
    dz = np.abs(np.diff(v, axis=1)) / (z[0, 1] - z[0, 0])
    dy = np.abs(np.diff(v, axis=0)) / (y[1, 0] - y[0, 0])
    return float(max(dz.max(), dy.max()))
