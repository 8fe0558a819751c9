from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from gmxb.contracts import Contract
from gmxb.errors import DomainError
from gmxb.exercise import ControlMap
from gmxb.model import MarketModel

_SNAP_ATOL = 1e-12


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    seed: int = 42
    substeps_per_year: int = 100
    batch_size: int = 10_000
    threads: int = 1

    def __post_init__(self) -> None:
        if self.paths < 1:
            raise DomainError(f"paths must be >= 1 (got {self.paths})")
        if self.substeps_per_year < 1:
            raise DomainError(f"substeps_per_year must be >= 1 (got {self.substeps_per_year})")
        if self.batch_size < 1 or self.threads < 1:
            raise DomainError("batch_size and threads must be >= 1")

    @property
    def batches(self) -> int:
        return -(-self.paths // self.batch_size)


@dataclass(frozen=True)
class McResult:
    estimate: float
    standard_error: float
    paths: int


def _snap_to_path(contract: Contract, control: ControlMap, n: int, i: np.ndarray,
                  j: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """
    Nearest-node lambda*, with a node candidate replaced by the same candidate
    evaluated at the path's own state (G / x2 at the node is not G / x2 on the path).
    """
    node_lam = control.lambda_star[i, j]
    lam = node_lam
    at_node = contract.candidates(control.grid.x1_nodes[i], control.grid.x2_nodes[j], n)
    on_path = contract.candidates(x1, x2, n)
    # reversed so the first matching candidate wins
    for k in reversed(range(at_node.shape[0])):
        lam = np.where(np.abs(node_lam - at_node[k]) <= _SNAP_ATOL,
                       on_path[k], lam)
    return lam


def _simulate_batch(
    contract: Contract,
    market: MarketModel,
    maps: dict[int, ControlMap],
    cfg: McConfig,
    batch: int,
) -> tuple[float, float]:
    """Sum and sum of squares of discounted path cash flows for one batch."""
    size = min(cfg.batch_size, cfg.paths - batch * cfg.batch_size)
    # stream depends only on (seed, batch), never on the worker that runs it
    rng = np.random.default_rng([cfg.seed, batch])
    mortality = contract.boundary_mortality()
    schedule = contract.schedule
    r, sigma = market.r, market.sigma
    drift = r - market.alpha - 0.5 * sigma**2

    x1 = np.full(size, contract.w0)
    x2 = np.full(size, contract.w0)
    total = np.zeros(size)

    for n in range(len(schedule)):
        control = maps[n]
        i, j = control.grid.nearest_indices(x1, x2)
        lam = _snap_to_path(contract, control, n, i, j, x1, x2)
        t_n = schedule.time_of(n)
        x1, x2, cash = contract.transition(x1, x2, n, lam)
        total += math.exp(-r * t_n) * cash

        length = schedule.interval_end(n) - t_n
        steps = max(1, round(cfg.substeps_per_year * length)) if mortality is not None else 1
        dt = length / steps
        for k in range(steps):
            s = t_n + k * dt
            if mortality is not None:
                rate = float(mortality.rates_at(np.asarray(s)))
                total += math.exp(-r * s) * rate * x1 * dt
            z = rng.standard_normal(size)
            x1 = x1 * np.exp(drift * dt + sigma * math.sqrt(dt) * z)

    total += math.exp(-r * schedule.expiry) * contract.payoff(x1, x2)
    return float(np.sum(total)), float(np.sum(total * total))


def mc_policy_value(
    contract: Contract,
    market: MarketModel,
    control_maps: dict[int, ControlMap],
    cfg: McConfig,
    *,
    log: Callable[[str], None] | None = None,
) -> McResult:
    """
    Monte Carlo value of the fixed policy stored in control_maps, with exact
    lognormal account moves and a nearest-node policy lookup. Batches are
    reduced in index order so the result does not depend on cfg.threads.
    """
    missing = [n for n in range(len(contract.schedule)) if n not in control_maps]
    if missing:
        raise DomainError(f"no control map for anniversaries {missing}")

    def run(batch: int) -> tuple[float, float]:
        return _simulate_batch(contract, market, control_maps, cfg, batch)

    batches = range(cfg.batches)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            sums = list(pool.map(run, batches))
    else:
        sums = [run(b) for b in batches]

    total = math.fsum(s for s, _ in sums)
    total_sq = math.fsum(q for _, q in sums)
    count = cfg.paths
    mean = total / count
    if count > 1:
        var = max(total_sq - count * mean * mean, 0.0) / (count - 1)
        se = math.sqrt(var / count)
    else:
        se = 0.0
    if log is not None:
        log(f"   MC: {count} paths, estimate {mean:.6f} +/- {se:.6f}")
    return McResult(estimate=mean, standard_error=se, paths=count)


def fixed_policy(control: ControlMap, lam: np.ndarray | float) -> ControlMap:
    """Copy of a control map with lambda* replaced (e.g. a constant policy)."""
    lam_star = np.broadcast_to(np.asarray(lam, dtype=float), control.grid.shape).copy()
    return ControlMap(control.grid, lam_star, control.value, control.anniversary,
                      control.kind, control.certified)
