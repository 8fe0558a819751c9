from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from gmxb.contracts import GLWB, Contract, GlwbContract
from gmxb.diagnostics import CmReport, cm_check, cm_tolerance
from gmxb.errors import DomainError
from gmxb.exercise import ControlMap, DenseSearch, SearchMode, apply_exercise
from gmxb.grid import MINUS, PLUS, GridSpec, ValueSurface, default_grid, interpolate
from gmxb.model import ContractState, MarketModel
from gmxb.stepper import StepperConfig, step_interval

# slack on N >= t* for tables whose last year absorbs the rounding remainder
CUTOFF_SLACK = 1e-9

Logger = Callable[[str], None]


@dataclass(frozen=True, eq=False)
class PricingResult:
    value_at_origin: float
    kind: str
    grid: GridSpec
    mode: str
    surfaces: dict[tuple[int, str], ValueSurface] = field(default_factory=dict)
    control_maps: dict[int, ControlMap] = field(default_factory=dict)
    diagnostics: list[CmReport] = field(default_factory=list)
    interior: list[ValueSurface] = field(default_factory=list)

    def surface(self, n: int, side: str) -> ValueSurface:
        try:
            return self.surfaces[(n, side)]
        except KeyError:
            raise DomainError(f"surface {n}{'-' if side == MINUS else '+'} was not retained")


def terminal_surface(contract: Contract, grid: GridSpec) -> ValueSurface:
    x1, x2 = grid.mesh()
    values = np.array(contract.payoff(x1, x2), dtype=float)
    values[-1, :] = contract.terminal_g() * grid.x1_max
    n_last = len(contract.schedule)
    return ValueSurface(grid, values, contract.schedule.expiry, MINUS, n_last)


def _check_expiry(contract: Contract) -> None:
    if contract.kind != GLWB or not isinstance(contract, GlwbContract):
        return
    cutoff = contract.mortality.cutoff
    if contract.schedule.expiry < cutoff - CUTOFF_SLACK:
        raise DomainError(
            f"GLWB expiry N={contract.schedule.expiry:g} precedes the mortality cutoff "
            f"t*={cutoff:g}; holders would still be alive at expiry"
        )


def price(
    contract: Contract,
    market: MarketModel,
    grid: GridSpec,
    cfg: StepperConfig,
    mode: SearchMode,
    *,
    retain_surfaces: bool = True,
    retain_all: bool = False,
    check_cm: bool = False,
    cm_rtol: float = 1e-8,
    cm_region: tuple[float, float] | None = None,
    log: Logger | None = None,
) -> PricingResult:
    """
    Backward dynamic program: V_N = payoff; for n = N-1 .. 0 solve the PDE
    from t_{n+1}- to t_n+, then take the exercise supremum to get t_n-.
    Mortality (GLWB) travels inside the contract.
    CM reports cover `cm_region` (x1_hi, x2_hi) when given, the whole grid otherwise.
    """
    _check_expiry(contract)
    if not grid.contains_node(contract.w0):
        raise DomainError(f"grid has no node at w0={contract.w0:g}")

    schedule = contract.schedule
    source = contract.source()
    v = terminal_surface(contract, grid)

    surfaces: dict[tuple[int, str], ValueSurface] = {}
    maps: dict[int, ControlMap] = {}
    reports: list[CmReport] = []
    interior: list[ValueSurface] = []
    collect = interior.append if retain_all else None

    def record(s: ValueSurface) -> None:
        if retain_surfaces:
            surfaces[(s.anniversary, s.side)] = s
        if check_cm:
            reports.append(cm_check(s, cm_tolerance(s, cm_rtol), cm_region))

    record(v)
    for n in reversed(range(len(schedule))):
        t_n = schedule.times[n]
        stepped = step_interval(v, market, source, cfg, t_start=t_n, on_step=collect)
        v_plus = stepped.with_values(stepped.values, time=t_n, side=PLUS, anniversary=n)
        v_minus, control = apply_exercise(v_plus, contract, n, mode)
        record(v_plus)
        record(v_minus)
        maps[n] = control
        if log is not None:
            log(f"   n={n:>3}  V(w0, w0, {n}-) = "
                f"{interpolate(v_minus, ContractState(contract.w0, contract.w0)):.6f}")
        v = v_minus

    value = interpolate(v, ContractState(contract.w0, contract.w0))
    return PricingResult(
        value_at_origin=value,
        kind=contract.kind,
        grid=grid,
        mode=mode.describe(),
        surfaces=surfaces,
        control_maps=maps,
        diagnostics=reports,
        interior=interior,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    nodes: str
    steps_per_year: int
    mode: str
    value: float
    change: float | None
    ratio: float | None


def refine_mode(mode: SearchMode, level: int) -> SearchMode:
    if isinstance(mode, DenseSearch):
        return DenseSearch((mode.p - 1) * 2**level + 1)
    return mode


def convergence_study(
    contract: Contract,
    market: MarketModel,
    cfg: StepperConfig,
    mode: SearchMode,
    levels: int,
    *,
    log: Logger | None = None,
) -> list[ConvergenceRow]:
    """
    Prices at refinement levels 0..levels. Each level inserts grid midpoints,
    doubles the timesteps and, for dense search, doubles the partition.
    ratio is the previous change over this change.
    """
    rows: list[ConvergenceRow] = []
    prev_value: float | None = None
    prev_change: float | None = None
    for level in range(levels + 1):
        grid = default_grid(contract.w0, level)
        level_cfg = replace(cfg, steps_per_year=cfg.steps_per_year * 2**level)
        level_mode = refine_mode(mode, level)
        result = price(contract, market, grid, level_cfg, level_mode, retain_surfaces=False)
        value = result.value_at_origin
        change = None if prev_value is None else value - prev_value
        ratio = None
        if change is not None and prev_change is not None and change != 0.0:
            ratio = abs(prev_change) / abs(change)
        rows.append(ConvergenceRow(level, grid.describe(), level_cfg.steps_per_year,
                                   level_mode.describe(), value, change, ratio))
        if log is not None:
            log(f"   level {level}: {grid.describe()} grid, V0 = {value:.8f}")
        prev_value, prev_change = value, change
    return rows
