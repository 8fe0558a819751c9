"""
Fully implicit finite differences for dV/dt + L V + source = 0 between
exercise times, with L = 1/2 sigma^2 x1^2 d2/dx1^2 + (r - alpha) x1 d/dx1 - r.

L differentiates in x1 only, so every x2 column is an independent
tridiagonal system. All columns share one matrix and are solved together.
The x1 = x1_max row carries V = g(t) x1_max, where g follows the ODE
dg/dt = alpha g - M(t) obtained by substituting that form into the PDE.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from gmxb.errors import DomainError, NumericalError
from gmxb.grid import INTERIOR, GridSpec, ValueSurface
from gmxb.model import MarketModel, MortalityModel

FULLY_IMPLICIT = "fully-implicit"
AUTOMATIC = "automatic"
COLUMN_BLOCK = 64


@dataclass(frozen=True)
class StepperConfig:
    steps_per_year: int = 100
    scheme: str = FULLY_IMPLICIT
    upwind_switch: str = AUTOMATIC
    threads: int = 1

    def __post_init__(self) -> None:
        if self.steps_per_year < 1:
            raise DomainError(f"steps_per_year must be >= 1 (got {self.steps_per_year})")
        if self.scheme != FULLY_IMPLICIT:
            raise DomainError(f"unsupported scheme {self.scheme!r}")
        if self.upwind_switch != AUTOMATIC:
            raise DomainError(f"unsupported upwind switch {self.upwind_switch!r}")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")

    def steps_for(self, length: float) -> int:
        return max(1, int(round(self.steps_per_year * length)))


@dataclass(frozen=True)
class SourceTerm:
    """Rate of cash paid to the holder between exercise times, as f(x1, t)."""

    func: Callable[[np.ndarray, float], np.ndarray] | None = None

    @classmethod
    def zero(cls) -> SourceTerm:
        return cls(None)

    @classmethod
    def death_benefit(cls, mortality: MortalityModel) -> SourceTerm:
        # M(t) x1: the account passes to the estate of those who die
        return cls(lambda x1, t: float(mortality.rates_at(np.asarray(t))) * x1)

    def __call__(self, x1: np.ndarray, t: float) -> np.ndarray:
        if self.func is None:
            return np.zeros_like(x1, dtype=float)
        return np.asarray(self.func(x1, t), dtype=float)

    def per_unit(self, x1_max: float, t: float) -> float:
        """Coefficient of x1 at the far boundary, for the g ODE."""
        if self.func is None:
            return 0.0
        return float(self.func(np.asarray([x1_max]), t)[0]) / x1_max


@dataclass(frozen=True)
class BoundaryCoefficient:
    time: float
    g: np.ndarray  # one coefficient per x2 column

    @classmethod
    def from_surface(cls, s: ValueSurface) -> BoundaryCoefficient:
        return cls(s.time, s.values[-1, :] / s.grid.x1_max)


def operator_coefficients(
    x1: np.ndarray, market: MarketModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-node weights (a, b) on V[i-1] and V[i+1] so that
    L V[i] = a (V[i-1] - V[i]) + b (V[i+1] - V[i]) - r V[i].
    Central drift where both weights stay nonnegative, upwind otherwise.
    Returns (a, b, upwinded mask); row 0 has a = b = 0.
    """
    n = x1.size
    a = np.zeros(n)
    b = np.zeros(n)
    upwinded = np.zeros(n, dtype=bool)

    xi = x1[1:-1]
    h_m = xi - x1[:-2]
    h_p = x1[2:] - xi
    span = h_m + h_p
    diff = market.sigma**2 * xi**2
    diff_m = diff / (h_m * span)
    diff_p = diff / (h_p * span)
    mu = (market.r - market.alpha) * xi

    a_c = diff_m - mu / span
    b_c = diff_p + mu / span
    central = (a_c >= 0) & (b_c >= 0)

    a_u = np.where(mu >= 0, diff_m, diff_m - mu / h_m)
    b_u = np.where(mu >= 0, diff_p + mu / h_p, diff_p)

    a[1:-1] = np.where(central, a_c, a_u)
    b[1:-1] = np.where(central, b_c, b_u)
    upwinded[1:-1] = ~central
    return a, b, upwinded


def implicit_matrix(grid: GridSpec, market: MarketModel, dt: float) -> np.ndarray:
    """Banded (I - dt L) with a Dirichlet row at x1_max, in solve_banded layout."""
    x1 = grid.x1_nodes
    a, b, _ = operator_coefficients(x1, market)
    n = x1.size
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + dt * (a + b + market.r)
    ab[0, 1:] = -dt * b[:-1]
    ab[2, :-1] = -dt * a[1:]
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0

    # M-matrix: positive diagonal, nonpositive off-diagonals, row dominance
    if np.any(ab[1, :] <= 0):
        raise NumericalError("implicit system is not an M-matrix (check r and timestep)")
    row_off = np.zeros(n)
    row_off[:-1] += -ab[0, 1:]
    row_off[1:] += -ab[2, :-1]
    if np.any(ab[1, :] < row_off - 1e-12 * ab[1, :]):
        raise NumericalError("implicit system lost diagonal dominance")
    return ab


def _solve_columns(ab: np.ndarray, rhs: np.ndarray, pool: ThreadPoolExecutor | None) -> np.ndarray:
    # fixed column blocks keep results independent of the thread count
    blocks = [slice(k, k + COLUMN_BLOCK) for k in range(0, rhs.shape[1], COLUMN_BLOCK)]

    def solve(s: slice) -> np.ndarray:
        return solve_banded((1, 1), ab, rhs[:, s], check_finite=False)

    parts = pool.map(solve, blocks) if pool is not None else map(solve, blocks)
    return np.concatenate(list(parts), axis=1)


def _g_step(g: np.ndarray, market: MarketModel, hazard: float, dt: float) -> np.ndarray:
    return (g + dt * hazard) / (1.0 + market.alpha * dt)


def step_boundary_row(
    g_end: float | np.ndarray,
    market: MarketModel,
    mortality: MortalityModel | None,
    cfg: StepperConfig,
    *,
    t_start: float,
    t_end: float,
) -> float | np.ndarray:
    """Backward-in-time implicit solve of dg/dt = alpha g - M(t) over [t_start, t_end]."""
    length = t_end - t_start
    if length <= 0:
        raise DomainError("interval length must be > 0")
    steps = cfg.steps_for(length)
    dt = length / steps
    g = np.asarray(g_end, dtype=float)
    for k in range(steps):
        t_mid = t_end - (k + 0.5) * dt
        hazard = 0.0 if mortality is None else float(mortality.rates_at(np.asarray(t_mid)))
        g = _g_step(g, market, hazard, dt)
    return float(g) if g.ndim == 0 else g


def step_interval(
    v_end: ValueSurface,
    market: MarketModel,
    source: SourceTerm,
    cfg: StepperConfig,
    *,
    t_start: float,
    on_step: Callable[[ValueSurface], None] | None = None,
) -> ValueSurface:
    """
    Advances v_end (at t_{n+1}-) back to t_start. The result is tagged as an
    interior surface; the caller retags it as the n+ surface.
    """
    t_end = v_end.time
    length = t_end - t_start
    if length <= 0:
        raise DomainError(f"interval length must be > 0 (got {length})")

    grid = v_end.grid
    x1 = grid.x1_nodes
    steps = cfg.steps_for(length)
    dt = length / steps
    ab = implicit_matrix(grid, market, dt)

    v = np.array(v_end.values, dtype=float)
    g = BoundaryCoefficient.from_surface(v_end).g
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for k in range(steps):
            t_new = t_end - (k + 1) * dt
            t_mid = t_new + 0.5 * dt
            rhs = v.copy()
            rhs[:-1, :] += dt * source(x1[:-1], t_mid)[:, None]
            g = _g_step(g, market, source.per_unit(grid.x1_max, t_mid), dt)
            rhs[-1, :] = g * grid.x1_max
            v = _solve_columns(ab, rhs, pool)
            if not np.all(np.isfinite(v)):
                raise NumericalError(f"non-finite values while stepping at t={t_new:g}")
            if on_step is not None and k + 1 < steps:
                on_step(ValueSurface(grid, v, t_new, INTERIOR, None))
    finally:
        if pool is not None:
            pool.shutdown()

    return ValueSurface(grid, v, t_start, INTERIOR, None)
