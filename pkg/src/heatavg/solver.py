"""Picard solver for the mild stochastic heat equation on a truncated grid.

    u(t, x) = (P_t u0)(x) + int_0^t P_{t-s} f(., u(s, .))(x) ds
              + int dmu(y) int_0^t p(t-s, x-y) sigma(s/eps, y) ds

The noise term is linear in the realization and independent of ``u``, so
it is computed once per solve.  Its time integral is done by product
integration: ``sigma(s/eps, y)`` is interpolated linearly on a fine time
grid and integrated exactly against the heat kernel through the closed-form
primitives of ``p`` in time, which removes the ``(t-s)^-1/2`` singularity.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .coefficients import CoefficientSet, SigmaSpec
from .kernel import TRUNCATION_STD, kernel_time_integral, kernel_time_moment, kernel_weights
from .measure import DyadicDomain, SMRealization

AVERAGED = None


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SpaceTimeGrid:
    """``[-R, R] x [0, T]`` with ``dx = 2^-n_max`` so nodes are dyadic endpoints."""

    R: int = 4
    n_max: int = 8
    T: float = 1.0
    nt: int = 64

    def __post_init__(self):
        if int(self.R) != self.R or self.R < 1:
            raise ValueError("R must be a positive integer")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.nt < 2 or self.T <= 0:
            raise ValueError("need nt >= 2 and T > 0")

    @property
    def dx(self) -> float:
        return 2.0 ** -self.n_max

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def nx(self) -> int:
        return 2 * self.R * (1 << self.n_max)

    @property
    def x(self) -> np.ndarray:
        return -self.R + np.arange(self.nx + 1) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    def domain(self) -> DyadicDomain:
        return DyadicDomain(-self.R, self.R, self.n_max)

    def refined(self) -> SpaceTimeGrid:
        return SpaceTimeGrid(self.R, self.n_max + 1, self.T, 2 * self.nt)


@dataclass(frozen=True, eq=False)
class FieldTrajectory:
    values: np.ndarray
    grid: SpaceTimeGrid
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Metadata line, column header, then one ``t,x,u`` row per node."""
        g = self.grid
        tt, xx = np.meshgrid(g.t, g.x, indexing="ij")
        meta = {"grid": {"R": g.R, "n_max": g.n_max, "T": g.T, "nt": g.nt}, **self.meta}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write("t,x,u\n")
            for t, x, u in zip(tt.ravel(), xx.ravel(), self.values.ravel()):
                fh.write(f"{t:.17g},{x:.17g},{u:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> FieldTrajectory:
        with open(path, encoding="utf-8") as fh:
            meta = json.loads(fh.readline()[1:])
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        grid = SpaceTimeGrid(**meta.pop("grid"))
        return cls(data[:, 2].reshape(grid.nt + 1, grid.nx + 1), grid, meta)


def _check_alignment(sm: SMRealization, grid: SpaceTimeGrid) -> None:
    if sm.domain != grid.domain():
        raise ValueError(f"realization domain {sm.domain} is not aligned with grid {grid}")


def fine_steps_per_dt(grid: SpaceTimeGrid, spec: SigmaSpec, eps: float,
                      points_per_period: int = 32) -> int:
    """Sub-steps of ``dt`` so the fast time step is at most ``eps P / points_per_period``."""
    period = spec.period or 2 * math.pi
    h_max = eps * period / points_per_period
    return max(1, int(math.ceil(grid.dt / h_max - 1e-12)))


def _hat_weights(h: float, start: int, stop: int, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrals of ``p(v, d)`` against the two halves of the hat at ``v = l h``.

    For ``start <= l < stop``: ``left`` covers ``[(l-1)h, lh]`` and ``right``
    covers ``[lh, (l+1)h]``.
    """
    idx = np.arange(start - 1, stop + 1)
    v = (np.clip(idx, 0, None) * h)[:, None]
    dF0 = np.diff(kernel_time_integral(v, d[None, :]), axis=0)
    dF1 = np.diff(kernel_time_moment(v, d[None, :]), axis=0)
    lags = np.arange(start, stop)[:, None]
    right = ((lags + 1) * h * dF0[1:] - dF1[1:]) / h
    left = (dF1[:-1] - (lags - 1) * h * dF0[:-1]) / h
    left[lags[:, 0] == 0] = 0.0
    return left, right


def time_kernel_table(grid: SpaceTimeGrid, spec: SigmaSpec, eps: float,
                      points_per_period: int = 32, block: int = 1024) -> np.ndarray:
    """``K[i, m] = int_0^{t_i} p(t_i - s, m dx) (m(s/eps) - mean m) ds`` for ``m = 0..nx``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = np.arange(grid.nx + 1) * grid.dx
    out = np.zeros((grid.nt + 1, d.size))
    if spec.family == "time_constant":
        return out
    q = fine_steps_per_dt(grid, spec, eps, points_per_period)
    h = grid.dt / q
    n_lags = grid.nt * q
    i_end = np.arange(grid.nt + 1) * q
    t_i = grid.t
    for start in range(0, n_lags + 1, block):
        stop = min(start + block, n_lags + 1)
        lags = np.arange(start, stop)
        left, right = _hat_weights(h, start, stop, d)
        s = t_i[:, None] - lags[None, :] * h
        valid = lags[None, :] <= i_end[:, None]
        mod = np.where(valid, spec.m.fn(np.clip(s, 0.0, None) / eps) - spec.m.mean, 0.0)
        use_left = mod * (lags[None, :] >= 1)
        use_right = mod * (lags[None, :] < i_end[:, None])
        out += use_left @ left + use_right @ right
    return out


def averaged_kernel_table(grid: SpaceTimeGrid) -> np.ndarray:
    """``int_0^{t_i} p(t_i - s, m dx) ds`` for ``m = 0..nx``."""
    d = np.arange(grid.nx + 1) * grid.dx
    return kernel_time_integral(grid.t[:, None], d[None, :])


def spatial_sum(table: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[i, j] = sum_k table[i, |j - k|] b[k]`` for atoms ``k`` and nodes ``j``."""
    nx = table.shape[1] - 1
    if b.size != nx:
        raise ValueError("atom vector does not match the kernel table")
    full = np.concatenate([table[:, :0:-1], table], axis=1)
    if not np.any(b) or not np.any(table):
        return np.zeros((table.shape[0], nx + 1))
    conv = fftconvolve(b[None, :], full, axes=1)
    return conv[:, nx:2 * nx + 1]


@dataclass
class NoiseTables:
    """Deterministic kernel tables, reusable across realizations."""

    grid: SpaceTimeGrid
    spec: SigmaSpec
    averaged: np.ndarray
    centred: dict = field(default_factory=dict)
    points_per_period: int = 32

    @classmethod
    def build(cls, grid, spec, eps_list=(), points_per_period: int = 32) -> NoiseTables:
        tables = cls(grid, spec, averaged_kernel_table(grid), {}, points_per_period)
        for eps in eps_list:
            tables.centred_for(eps)
        return tables

    def centred_for(self, eps: float) -> np.ndarray:
        if eps not in self.centred:
            self.centred[eps] = time_kernel_table(self.grid, self.spec, eps, self.points_per_period)
        return self.centred[eps]


def xi_epsilon(sm: SMRealization, spec: SigmaSpec, eps: float, grid: SpaceTimeGrid,
               tables: NoiseTables | None = None) -> np.ndarray:
    """Noise difference ``int dmu(y) int_0^t p(t-s, x-y)(sigma(s/eps, y) - sigma_bar(y)) ds``."""
    _check_alignment(sm, grid)
    if eps is None or eps <= 0:
        raise ValueError("eps must be positive")
    table = tables.centred_for(eps) if tables else time_kernel_table(grid, spec, eps)
    b = spec.amplitude(sm.domain.left_endpoints()) * sm.atom_values
    return spatial_sum(table, b)


def noise_term(sm: SMRealization, spec: SigmaSpec, eps: float | None, grid: SpaceTimeGrid,
               tables: NoiseTables | None = None) -> np.ndarray:
    """Stochastic convolution on the grid; ``eps=None`` gives the averaged equation."""
    _check_alignment(sm, grid)
    avg_table = tables.averaged if tables else averaged_kernel_table(grid)
    b = spec.m.mean * spec.amplitude(sm.domain.left_endpoints()) * sm.atom_values
    out = spatial_sum(avg_table, b)
    if eps is not AVERAGED:
        out = out + xi_epsilon(sm, spec, eps, grid, tables)
    return out


class HeatPropagator:
    """Applies ``P_{l dt}`` for ``l = 0..nt`` to grid fields through one shared FFT size."""

    def __init__(self, grid: SpaceTimeGrid, n_std: float = TRUNCATION_STD):
        self.grid = grid
        weights = [None] + [kernel_weights(l * grid.dt, grid.dx, n_std) for l in range(1, grid.nt + 1)]
        self.pad = max(w.size // 2 for w in weights[1:])
        n = grid.nx + 1 + 2 * self.pad
        self.size = sfft.next_fast_len(n, real=True)
        khat = np.empty((grid.nt + 1, self.size // 2 + 1), dtype=complex)
        khat[0] = 1.0
        for l in range(1, grid.nt + 1):
            w = weights[l]
            half = w.size // 2
            kz = np.zeros(self.size)
            kz[:half + 1] = w[half:]
            kz[-half:] = w[:half]
            khat[l] = sfft.rfft(kz)
        self.khat = khat

    def _hat(self, fields: np.ndarray) -> np.ndarray:
        padded = np.pad(fields, ((0, 0), (self.pad, self.pad)), mode="edge")
        return sfft.rfft(padded, n=self.size, axis=1)

    def _crop(self, hats: np.ndarray) -> np.ndarray:
        full = sfft.irfft(hats, n=self.size, axis=1)
        return full[:, self.pad:self.pad + self.grid.nx + 1]

    def propagate(self, field0: np.ndarray) -> np.ndarray:
        """Rows ``P_{t_i} field0``; row 0 is ``field0`` itself."""
        hat = self._hat(np.asarray(field0, dtype=float)[None, :])
        out = self._crop(self.khat * hat)
        out[0] = field0
        return out

    def duhamel(self, F: np.ndarray) -> np.ndarray:
        """Trapezoid rule for ``int_0^{t_i} P_{t_i - s} F(s) ds`` at every ``t_i``."""
        nt, dt = self.grid.nt, self.grid.dt
        Fh = self._hat(F)
        acc = np.zeros_like(Fh)
        for i in range(1, nt + 1):
            w = np.full(i + 1, dt)
            w[0] = w[-1] = 0.5 * dt
            acc[i] = np.einsum("k,kf,kf->f", w, self.khat[i::-1], Fh[:i + 1])
        return self._crop(acc)


def solve_mild(sm: SMRealization, coeffs: CoefficientSet, eps: float | None, grid: SpaceTimeGrid,
               tol: float = 1e-8, max_iter: int = 50, tables: NoiseTables | None = None,
               propagator: HeatPropagator | None = None,
               noise: np.ndarray | None = None) -> FieldTrajectory:
    """Picard iteration on the grid; ``eps=None`` solves the averaged equation."""
    _check_alignment(sm, grid)
    if eps is not AVERAGED and eps <= 0:
        raise ValueError("eps must be positive")
    prop = propagator or HeatPropagator(grid)
    x = grid.x
    base = prop.propagate(coeffs.u0(x))
    if noise is None:
        noise = noise_term(sm, coeffs.sigma, eps, grid, tables)
    base = base + noise
    u = base
    increments: list[float] = []
    residual = 0.0
    it = 1
    if coeffs.f_name != "zero":
        f = coeffs.f
        for it in range(1, max_iter + 1):
            new = base + prop.duhamel(f(x[None, :], u))
            if not np.all(np.isfinite(new)):
                raise FloatingPointError(f"non-finite values in Picard iterate {it}")
            residual = float(np.max(np.abs(new - u)))
            increments.append(residual)
            u = new
            if residual < tol:
                break
        else:
            raise ConvergenceError(f"Picard iteration stalled at residual {residual:.3e}",
                                   residual, it)
    meta = {"eps": "averaged" if eps is AVERAGED else eps, "seed": sm.seed,
            "iterations": it, "residual": residual, "increments": increments,
            "checksum": sm.checksum()}
    return FieldTrajectory(u, grid, meta)


def sup_error(u_eps: FieldTrajectory, u_bar: FieldTrajectory, margin: float = 0.0) -> float:
    """``max |u_eps - u_bar|`` over nodes with ``|x| <= R - margin``."""
    if u_eps.grid != u_bar.grid or u_eps.values.shape != u_bar.values.shape:
        raise ValueError("trajectories live on different grids")
    mask = np.abs(u_eps.grid.x) <= u_eps.grid.R - margin + 1e-12
    return float(np.max(np.abs(u_eps.values[:, mask] - u_bar.values[:, mask])))
