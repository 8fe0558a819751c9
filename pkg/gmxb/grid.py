from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from gmxb.errors import DomainError, NumericalError
from gmxb.model import ContractState

MINUS = "minus"
PLUS = "plus"
INTERIOR = "interior"

DOMAIN_MULTIPLE = 20.0
BASE_NODES = 65

# (start, end, intervals) in multiples of w0; 64 intervals in total
BASE_SEGMENTS = (
    (0.0, 0.5, 8),
    (0.5, 1.5, 24),
    (1.5, 3.0, 12),
    (3.0, 6.0, 8),
    (6.0, DOMAIN_MULTIPLE, 12),
)

_EDGE_SLACK = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GridSpec:
    x1_nodes: np.ndarray
    x2_nodes: np.ndarray

    def __post_init__(self) -> None:
        for name in ("x1_nodes", "x2_nodes"):
            nodes = _frozen(getattr(self, name))
            if nodes.ndim != 1 or nodes.size < 3:
                raise DomainError(f"{name} needs at least three nodes")
            if nodes[0] != 0.0:
                raise DomainError(f"{name} must start at 0")
            if np.any(np.diff(nodes) <= 0):
                raise DomainError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x1_nodes.size, self.x2_nodes.size)

    @property
    def x1_max(self) -> float:
        return float(self.x1_nodes[-1])

    @property
    def x2_max(self) -> float:
        return float(self.x2_nodes[-1])

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1_nodes, self.x2_nodes, indexing="ij")

    def contains_node(self, value: float) -> bool:
        return bool(np.any(np.isclose(self.x1_nodes, value))) and bool(
            np.any(np.isclose(self.x2_nodes, value))
        )

    def clamp(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        """Post-event states only overshoot through the x2 bonus/ratchet."""
        return (
            np.clip(np.asarray(x1, dtype=float), 0.0, self.x1_max),
            np.clip(np.asarray(x2, dtype=float), 0.0, self.x2_max),
        )

    def nearest_indices(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        return _nearest(self.x1_nodes, x1), _nearest(self.x2_nodes, x2)

    def refined(self) -> GridSpec:
        return GridSpec(_insert_midpoints(self.x1_nodes), _insert_midpoints(self.x2_nodes))

    def describe(self) -> str:
        return f"{self.shape[0]}x{self.shape[1]}"


def _nearest(nodes: np.ndarray, values) -> np.ndarray:
    values = np.clip(np.asarray(values, dtype=float), nodes[0], nodes[-1])
    hi = np.clip(np.searchsorted(nodes, values), 1, nodes.size - 1)
    lo = hi - 1
    pick_hi = (nodes[hi] - values) < (values - nodes[lo])
    return np.where(pick_hi, hi, lo)


def _insert_midpoints(nodes: np.ndarray) -> np.ndarray:
    out = np.empty(2 * nodes.size - 1)
    out[0::2] = nodes
    out[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
    return out


def default_grid(w0: float, refinement_level: int = 0) -> GridSpec:
    """
    Piecewise-uniform axis concentrated around w0, 65 nodes up to 20 * w0.
    Each refinement level inserts midpoints, so coarse nodes stay in the fine grid.
    """
    if refinement_level < 0:
        raise DomainError(f"refinement level must be >= 0 (got {refinement_level})")
    if w0 <= 0:
        raise DomainError(f"w0 must be > 0 (got {w0})")

    pieces = [np.linspace(a * w0, b * w0, k + 1)[:-1] for a, b, k in BASE_SEGMENTS]
    axis = np.concatenate(pieces + [np.array([DOMAIN_MULTIPLE * w0])])
    # snap w0 exactly onto its node
    axis[np.argmin(np.abs(axis - w0))] = w0
    for _ in range(refinement_level):
        axis = _insert_midpoints(axis)
    return GridSpec(axis, axis.copy())


def uniform_grid(x_max: float, intervals: int) -> GridSpec:
    axis = np.linspace(0.0, x_max, intervals + 1)
    return GridSpec(axis, axis.copy())


@dataclass(frozen=True, eq=False)
class ValueSurface:
    grid: GridSpec
    values: np.ndarray
    time: float
    side: str = INTERIOR
    anniversary: int | None = None

    def __post_init__(self) -> None:
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise NumericalError(
                f"surface shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise NumericalError(f"non-finite values in surface at {self.tag}")
        object.__setattr__(self, "values", vals)

    @property
    def tag(self) -> str:
        if self.side == INTERIOR or self.anniversary is None:
            return f"t={self.time:g}"
        return f"{self.anniversary}{'-' if self.side == MINUS else '+'}"

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            (self.grid.x1_nodes, self.grid.x2_nodes), self.values, method="linear"
        )

    def _inside(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        slack1 = _EDGE_SLACK * max(1.0, self.grid.x1_max)
        slack2 = _EDGE_SLACK * max(1.0, self.grid.x2_max)
        if (
            np.any(x1 < -slack1) or np.any(x1 > self.grid.x1_max + slack1)
            or np.any(x2 < -slack2) or np.any(x2 > self.grid.x2_max + slack2)
        ):
            raise DomainError("query outside the truncated domain; clamp post-event states first")
        x1, x2 = self.grid.clamp(x1, x2)
        return np.broadcast_arrays(x1, x2)

    def evaluate(self, x1, x2) -> np.ndarray:
        """Bilinear interpolation at (x1, x2) arrays inside the truncated domain."""
        x1, x2 = self._inside(x1, x2)
        return self._interpolator(np.stack([x1, x2], axis=-1))

    def evaluate_split(self, x1, x2) -> np.ndarray:
        """
        Piecewise-linear interpolation on the triangulation that splits every cell along its
        (i, j)-(i+1, j+1) diagonal.

        Agrees with `evaluate` on gridlines. Inside a cell it never bows above the chord along
        the split diagonal, which bilinear interpolation does whenever the cross derivative is
        negative. The exercise search reads post-event values through this.
        """
        x1, x2 = self._inside(x1, x2)
        i, u = _cell(self.grid.x1_nodes, x1)
        j, w = _cell(self.grid.x2_nodes, x2)
        v = self.values
        v00, v10 = v[i, j], v[i + 1, j]
        v01, v11 = v[i, j + 1], v[i + 1, j + 1]
        lower = v00 + u * (v10 - v00) + w * (v11 - v10)
        upper = v00 + w * (v01 - v00) + u * (v11 - v01)
        return np.where(u >= w, lower, upper)

    def with_values(self, values: np.ndarray, *, time: float, side: str,
                    anniversary: int | None) -> ValueSurface:
        return ValueSurface(self.grid, values, time, side, anniversary)

    def slice_at_x1(self, x1: float) -> np.ndarray:
        return self.evaluate(np.full(self.grid.x2_nodes.size, x1), self.grid.x2_nodes)

    def value_at(self, x: ContractState) -> float:
        return interpolate(self, x)


def interpolate(s: ValueSurface, x: ContractState) -> float:
    return s.evaluate(x.x1, x.x2).item()


def _cell(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower node index and local coordinate in [0, 1] of each x."""
    k = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2)
    t = (x - nodes[k]) / (nodes[k + 1] - nodes[k])
    return k, np.clip(t, 0.0, 1.0)
