"""Sampled stochastic measures on a truncated dyadic line.

A realization stores only the values of the measure on the finest dyadic
atoms ``(j + (k-1) 2^-n, j + k 2^-n]``.  Values on coarser dyadic intervals
are aggregated pairwise from the finest level, so a parent is always the
floating-point sum of its two children.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf, erfc

MAX_ATOMS = 1 << 22
KINDS = ("wiener", "fbm_weighted", "alpha_stable", "pure_jump_martingale")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class Weight:
    """Density of the control measure (or the fBm integrand)."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    decaying: bool

    def __call__(self, y):
        return self.fn(np.asarray(y, dtype=float))


WEIGHTS = {
    "gauss": Weight("gauss", lambda y: np.exp(-y * y), True),
    "unit": Weight("unit", lambda y: np.ones_like(y), False),
    "zero": Weight("zero", lambda y: np.zeros_like(y), True),
}


def get_weight(name: str) -> Weight:
    try:
        return WEIGHTS[name]
    except KeyError:
        raise ValueError(f"unknown weight {name!r}; choose from {sorted(WEIGHTS)}") from None


@dataclass(frozen=True)
class DyadicDomain:
    """Unit intervals ``(j, j+1]`` for ``j_min <= j < j_max`` split to depth ``n_max``."""

    j_min: int
    j_max: int
    n_max: int

    def __post_init__(self):
        if self.j_min >= self.j_max:
            raise ValueError("j_min must be smaller than j_max")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @property
    def step(self) -> float:
        return 2.0 ** -self.n_max

    @property
    def atoms_per_unit(self) -> int:
        return 1 << self.n_max

    @property
    def n_units(self) -> int:
        return self.j_max - self.j_min

    @property
    def n_atoms(self) -> int:
        return self.n_units * self.atoms_per_unit

    def endpoints(self) -> np.ndarray:
        """All finest-level endpoints, ``n_atoms + 1`` of them."""
        return self.j_min + np.arange(self.n_atoms + 1) * self.step

    def left_endpoints(self) -> np.ndarray:
        return self.endpoints()[:-1]

    def d(self, j: int, k: int, n: int) -> float:
        """Dyadic point ``j + k 2^-n``."""
        return j + k * 2.0 ** -n

    def grid_index(self, y: float) -> int:
        """Index of ``y`` among finest endpoints; raises if ``y`` is off-grid."""
        pos = (y - self.j_min) * self.atoms_per_unit
        idx = int(round(pos))
        if abs(pos - idx) > 1e-9 or idx < 0 or idx > self.n_atoms:
            raise ValueError(f"point {y!r} is not a dyadic endpoint of the domain")
        return idx


@dataclass(frozen=True, eq=False)
class SMRealization:
    domain: DyadicDomain
    atom_values: np.ndarray
    kind: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.atom_values, dtype=float)
        if values.shape != (self.domain.n_atoms,):
            raise ValueError("atom_values must hold one value per finest atom")
        values.setflags(write=False)
        object.__setattr__(self, "atom_values", values)

    def unit_block(self, j: int) -> np.ndarray:
        """Finest atom values inside ``(j, j+1]``."""
        if not self.domain.j_min <= j < self.domain.j_max:
            raise ValueError(f"unit interval ({j}, {j + 1}] outside the domain")
        start = (j - self.domain.j_min) * self.domain.atoms_per_unit
        return self.atom_values[start:start + self.domain.atoms_per_unit]

    def levels(self, j: int) -> list[np.ndarray]:
        """``levels(j)[n][k-1] == mu(Delta_kn^(j))`` for ``0 <= n <= n_max``."""
        out = [self.unit_block(j)]
        for _ in range(self.domain.n_max):
            fine = out[-1]
            out.append(fine[0::2] + fine[1::2])
        return out[::-1]

    def checksum(self) -> str:
        return hashlib.sha256(self.atom_values.tobytes()).hexdigest()[:16]

    def coarsen(self, n_max: int) -> SMRealization:
        """Same driving path seen at a coarser depth."""
        if not 1 <= n_max <= self.domain.n_max:
            raise ValueError("coarsening depth must lie in [1, n_max]")
        values = self.atom_values
        for _ in range(self.domain.n_max - n_max):
            values = values[0::2] + values[1::2]
        dom = DyadicDomain(self.domain.j_min, self.domain.j_max, n_max)
        return SMRealization(dom, values, self.kind, self.seed, dict(self.params))

    def restrict(self, j_min: int, j_max: int) -> SMRealization:
        if not self.domain.j_min <= j_min < j_max <= self.domain.j_max:
            raise ValueError("restriction must lie inside the domain")
        per = self.domain.atoms_per_unit
        start = (j_min - self.domain.j_min) * per
        values = self.atom_values[start:start + (j_max - j_min) * per]
        return SMRealization(DyadicDomain(j_min, j_max, self.domain.n_max), values,
                             self.kind, self.seed, dict(self.params))


def _erf_diff(e: np.ndarray) -> np.ndarray:
    """``erf(e[k+1]) - erf(e[k])`` without cancellation in the tails."""
    a, b = e[:-1], e[1:]
    out = erf(b) - erf(a)
    right = a >= 1.0
    left = b <= -1.0
    out[right] = erfc(a[right]) - erfc(b[right])
    out[left] = erfc(-b[left]) - erfc(-a[left])
    return out


def _atom_masses(domain: DyadicDomain, weight: Weight) -> np.ndarray:
    """Integral of the weight over every finest atom (4-point Gauss-Legendre)."""
    if weight.name == "gauss":
        return 0.5 * math.sqrt(math.pi) * _erf_diff(domain.endpoints())
    if weight.name == "unit":
        return np.full(domain.n_atoms, domain.step)
    left = domain.left_endpoints()
    h = domain.step
    nodes = left[:, None] + 0.5 * h * (_GL_NODES[None, :] + 1.0)
    return 0.5 * h * (weight(nodes) * _GL_WEIGHTS[None, :]).sum(axis=1)


def fgn_davies_harte(n: int, hurst: float, step: float, rng: np.random.Generator) -> np.ndarray:
    """Exact fractional Gaussian noise by circulant embedding.

    Returns ``n`` increments of fBm over consecutive intervals of length
    ``step``.  The embedding is nonnegative definite for ``hurst >= 1/2``.
    """
    k = np.arange(n + 1, dtype=float)
    two_h = 2.0 * hurst
    gamma = 0.5 * (np.abs(k + 1) ** two_h - 2.0 * k ** two_h + np.abs(k - 1) ** two_h)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise ArithmeticError("circulant embedding is not nonnegative definite")
    lam = np.clip(lam, 0.0, None)
    m = row.size
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.fft(np.sqrt(lam / m) * z)
    return w.real[:n] * step ** hurst


def chambers_mallows_stuck(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric alpha-stable variates (unit scale)."""
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = rng.exponential(1.0, size)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def realize_sm(kind: str, domain: DyadicDomain, seed: int, *, weight: str = "gauss",
               hurst: float = 0.7, stability: float = 1.5, jump_rate: float = 4.0,
               jump_size: float = 0.5, max_atoms: int = MAX_ATOMS) -> SMRealization:
    """Sample one stochastic measure on ``domain``.

    ``wiener``: independent centred Gaussian atoms with variance equal to the
    weighted atom length.  ``fbm_weighted``: ``int weight 1_A dW^H`` using the
    weight at the left endpoint of each atom.  ``alpha_stable``: independent
    symmetric stable atoms with scale ``(weighted length)^(1/alpha)``.
    ``pure_jump_martingale``: compensated Poisson counts times ``jump_size``
    with intensity ``jump_rate * weight``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown stochastic measure kind {kind!r}")
    if domain.n_atoms > max_atoms:
        raise ValueError(f"{domain.n_atoms} atoms exceed the budget of {max_atoms}")
    w = get_weight(weight)
    rng = np.random.default_rng(seed)
    params: dict = {"weight": weight}
    if kind == "wiener":
        values = np.sqrt(_atom_masses(domain, w)) * rng.standard_normal(domain.n_atoms)
    elif kind == "fbm_weighted":
        if not 0.5 < hurst < 1.0:
            raise ValueError("Hurst index must lie in (1/2, 1)")
        if not w.decaying:
            raise ValueError("fbm_weighted needs a weight with Gaussian decay")
        params["hurst"] = hurst
        incr = fgn_davies_harte(domain.n_atoms, hurst, domain.step, rng)
        values = w(domain.left_endpoints()) * incr
    elif kind == "alpha_stable":
        if not 1.0 < stability < 2.0:
            raise ValueError("stability index must lie in (1, 2)")
        params["stability"] = stability
        scale = _atom_masses(domain, w) ** (1.0 / stability)
        values = scale * chambers_mallows_stuck(stability, domain.n_atoms, rng)
    else:
        if jump_rate <= 0 or jump_size <= 0:
            raise ValueError("jump_rate and jump_size must be positive")
        params.update(jump_rate=jump_rate, jump_size=jump_size)
        lam = jump_rate * _atom_masses(domain, w)
        values = jump_size * (rng.poisson(lam) - lam)
    return SMRealization(domain, values, kind, seed, params)


def zero_measure(domain: DyadicDomain) -> SMRealization:
    return SMRealization(domain, np.zeros(domain.n_atoms), "wiener", 0, {"weight": "zero"})


def measure_of(sm: SMRealization, a: float, b: float) -> float:
    """``mu((a, b])`` for dyadic endpoints ``a <= b`` of the domain."""
    dom = sm.domain
    ia, ib = dom.grid_index(a), dom.grid_index(b)
    if ib < ia:
        raise ValueError("interval endpoints out of order")
    if ia == ib:
        return 0.0
    length = ib - ia
    per = dom.atoms_per_unit
    # a single dyadic interval inside one unit: read it off the pairwise tree
    if length & (length - 1) == 0 and ia % length == 0 and ia // per == (ib - 1) // per:
        n = dom.n_max - length.bit_length() + 1
        j = dom.j_min + ia // per
        k = (ia % per) // length
        return float(sm.levels(j)[n][k])
    return float(sm.atom_values[ia:ib].sum())


def _evaluate(g, y: np.ndarray) -> np.ndarray:
    vals = g(y)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), y.shape)
    return vals


def integrate_deterministic(sm: SMRealization, g) -> float:
    """Left-endpoint Riemann-Stieltjes sum ``sum_k g(y_k) mu(atom_k)``.

    ``g`` is evaluated once per atom at its left endpoint, so a step function
    should be supplied through its value on each atom (see ``atom_indicator``).
    """
    vals = _evaluate(g, sm.domain.left_endpoints())
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite on the dyadic grid")
    return float(vals @ sm.atom_values)


def atom_indicator(a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    """The function ``1_(a, b]`` as seen by atom left endpoints."""
    def ind(y):
        y = np.asarray(y, dtype=float)
        return ((y >= a) & (y < b)).astype(float)
    return ind


@dataclass(frozen=True)
class IntegrandFamily:
    functions: Sequence[Callable]
    tag: str = ""

    def __len__(self):
        return len(self.functions)

    def envelope(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return sum(np.abs(_evaluate(phi, y)) for phi in self.functions)


def unit_interval_family(j_min: int, j_max: int, rho: float) -> IntegrandFamily:
    """``{(|j|+1)^(rho/2) 1_(j, j+1]}`` ordered by increasing ``|j|``."""
    js = sorted(range(j_min, j_max), key=lambda j: (abs(j), j))
    funcs = []
    for j in js:
        ind = atom_indicator(j, j + 1)
        c = (abs(j) + 1.0) ** (rho / 2)
        funcs.append(lambda y, ind=ind, c=c: c * ind(y))
    return IntegrandFamily(funcs, f"unit_intervals(rho={rho})")


def squared_integral_series(sm: SMRealization, fam: IntegrandFamily, L: int | None = None) -> np.ndarray:
    """Partial sums ``s_l = sum_{i <= l} (int phi_i dmu)^2`` for ``l = 1..L``."""
    L = len(fam) if L is None else L
    if not 1 <= L <= len(fam):
        raise ValueError("L must lie in [1, len(family)]")
    ints = np.array([integrate_deterministic(sm, phi) for phi in fam.functions[:L]])
    return np.cumsum(ints ** 2)


def series_stabilized(partial: np.ndarray, rtol: float = 1e-3, last: int = 4) -> bool:
    """Relative increments of the last ``last`` partial sums all below ``rtol``."""
    partial = np.asarray(partial, dtype=float)
    if partial.size < last + 1:
        return False
    tail = partial[-(last + 1):]
    if tail[-1] == 0.0:
        return bool(np.all(tail == 0.0))
    return bool(np.all(np.abs(np.diff(tail)) <= rtol * np.abs(tail[1:])))


@dataclass(frozen=True)
class TauReport:
    radii: tuple
    integrals: tuple
    stabilized: bool


def check_tau_integrability(sm: SMRealization, tau: float, radii: Sequence[float] = (4, 6, 8),
                            rtol: float = 1e-3) -> TauReport:
    """``I_R = int_[-R, R] |y|^tau dmu`` over nested radii.

    Stabilized when the last two radii give ``|I_R' - I_R| <= rtol |I_R'|``.
    """
    if tau <= 2.5:
        raise ValueError("tau must exceed 5/2")
    radii = tuple(sorted(radii))
    if len(radii) < 2:
        raise ValueError("need at least two radii")
    if -radii[-1] < sm.domain.j_min or radii[-1] > sm.domain.j_max:
        raise ValueError("radii exceed the realized domain")
    vals = []
    for R in radii:
        ind = atom_indicator(-R, R)
        vals.append(integrate_deterministic(sm, lambda y, ind=ind: np.abs(y) ** tau * ind(y)))
    diff = abs(vals[-1] - vals[-2])
    return TauReport(radii, tuple(vals), bool(diff <= rtol * abs(vals[-1])))


_HEADER_KEYS = ("kind", "j_min", "j_max", "n_max", "seed", "params")


def save_realization(sm: SMRealization, path) -> None:
    """Text format: ``# key: value`` header lines, then one atom per line (17 digits)."""
    dom = sm.domain
    header = {"kind": sm.kind, "j_min": dom.j_min, "j_max": dom.j_max, "n_max": dom.n_max,
              "seed": sm.seed, "params": json.dumps(sm.params, sort_keys=True)}
    lines = [f"# {k}: {header[k]}" for k in _HEADER_KEYS]
    lines.extend(f"{v:.17g}" for v in sm.atom_values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_realization(path) -> SMRealization:
    header: dict = {}
    values = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            header[key.strip()] = val.strip()
        elif line.strip():
            values.append(float(line))
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"realization file lacks header fields {missing}")
    dom = DyadicDomain(int(header["j_min"]), int(header["j_max"]), int(header["n_max"]))
    return SMRealization(dom, np.array(values), header["kind"], int(header["seed"]),
                         json.loads(header["params"]))
