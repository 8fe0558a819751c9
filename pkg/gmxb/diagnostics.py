from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from gmxb.contracts import GLWB
from gmxb.errors import DomainError
from gmxb.exercise import SURRENDER_LABEL, ControlMap
from gmxb.grid import GridSpec, ValueSurface

# Kinds of check that can flag a node
D2_X1 = "convexity-x1"
D2_X2 = "convexity-x2"
D2_DIAG = "convexity-diagonal"
D1_X1 = "monotone-x1"
D1_X2 = "monotone-x2"

_COLLINEAR_RTOL = 1e-9

# Multiple of w0 bounding the region where checks are meaningful
ROI_MULTIPLE = 5.0


@dataclass(frozen=True)
class CmViolation:
    kind: str
    x1: float
    x2: float
    amount: float


@dataclass(frozen=True)
class CmReport:
    """Discrete convexity / monotonicity summary of one surface."""

    time_tag: str
    tol: float
    min_d2_x1: float
    min_d2_x2: float
    min_d2_diag: float
    min_d1_x1: float
    min_d1_x2: float
    violations: tuple[CmViolation, ...]

    @property
    def convex(self) -> bool:
        return min(self.min_d2_x1, self.min_d2_x2, self.min_d2_diag) >= -self.tol

    @property
    def monotone(self) -> bool:
        return min(self.min_d1_x1, self.min_d1_x2) >= -self.tol

    @property
    def ok(self) -> bool:
        return self.convex and self.monotone

    def worst(self, kind: str) -> CmViolation | None:
        hits = [v for v in self.violations if v.kind == kind]
        return min(hits, key=lambda v: v.amount) if hits else None

    def violations_at_x1(self, x1: float, kind: str = D2_X2) -> list[CmViolation]:
        return [v for v in self.violations if v.kind == kind and math.isclose(v.x1, x1)]


def cm_tolerance(s: ValueSurface, rtol: float = 1e-8) -> float:
    """rtol * ||V||_inf. An identically zero surface gets a zero tolerance."""
    return rtol * float(np.max(np.abs(s.values)))


def region_of_interest(w0: float, multiple: float = ROI_MULTIPLE) -> tuple[float, float]:
    """Upper corner of [0, multiple * w0]^2, kept clear of the truncation boundary rows."""
    if w0 <= 0 or multiple <= 0:
        raise DomainError(f"region needs w0 > 0 and multiple > 0 (got {w0}, {multiple})")
    return multiple * w0, multiple * w0


def region_mask(grid: GridSpec, region: tuple[float, float] | None) -> np.ndarray:
    x1, x2 = grid.mesh()
    if region is None:
        return np.ones(grid.shape, dtype=bool)
    return (x1 <= region[0] * (1 + 1e-12)) & (x2 <= region[1] * (1 + 1e-12))


def _chord_defect(v: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """
    Linear-interpolation chord minus the middle value for every interior
    triple along `axis`. Nonnegative everywhere iff the samples are convex.
    """
    v = np.moveaxis(v, axis, 0)
    h_m = (x[1:-1] - x[:-2])
    h_p = (x[2:] - x[1:-1])
    w_m = (h_p / (h_m + h_p))[:, None]
    w_p = (h_m / (h_m + h_p))[:, None]
    d2 = w_m * v[:-2] + w_p * v[2:] - v[1:-1]
    return np.moveaxis(d2, 0, axis)


def _diagonal_defects(s: ValueSurface) -> list[tuple[float, int, int]]:
    """
    Chord defects along the (i-1, j+1) -> (i+1, j-1) diagonal, restricted to
    triples that are collinear in (x1, x2) so the chord is a genuine segment.

    The other diagonal is not checked: along (1, 1) a homogeneous surface has
    curvature proportional to (1 - x1/x2)^2, so on and near x1 = x2 its
    second differences are pure discretization noise.
    """
    x1 = s.grid.x1_nodes
    x2 = s.grid.x2_nodes
    v = s.values
    out: list[tuple[float, int, int]] = []
    h1_m = x1[1:-1] - x1[:-2]
    h1_p = x1[2:] - x1[1:-1]
    for i in range(1, x1.size - 1):
        a, b = h1_m[i - 1], h1_p[i - 1]
        w_m, w_p = b / (a + b), a / (a + b)
        for j in range(1, x2.size - 1):
            c_m = x2[j] - x2[j - 1]
            c_p = x2[j + 1] - x2[j]
            if math.isclose(a * c_m, b * c_p, rel_tol=_COLLINEAR_RTOL):
                out.append((w_m * v[i - 1, j + 1] + w_p * v[i + 1, j - 1] - v[i, j], i, j))
    return out


def cm_check(s: ValueSurface, tol: float,
             region: tuple[float, float] | None = None) -> CmReport:
    """
    Convexity from chord defects on the nonuniform grid (value units, so a
    linear surface gives exactly 0) and monotonicity from forward
    differences. Every node below -tol is listed; nothing is raised.

    With `region` = (x1_hi, x2_hi) only stencils centred (or, for forward
    differences, starting) at nodes inside [0, x1_hi] x [0, x2_hi] count.
    """
    x1 = s.grid.x1_nodes
    x2 = s.grid.x2_nodes
    v = s.values
    inside = region_mask(s.grid, region)
    violations: list[CmViolation] = []

    def collect(kind: str, values: np.ndarray, i_off: int, j_off: int) -> float:
        keep = inside[i_off:i_off + values.shape[0], j_off:j_off + values.shape[1]]
        for i, j in np.argwhere((values < -tol) & keep):
            violations.append(CmViolation(kind, float(x1[i + i_off]), float(x2[j + j_off]),
                                          float(values[i, j])))
        return float(values[keep].min()) if np.any(keep) else math.inf

    min_d2_x1 = collect(D2_X1, _chord_defect(v, x1, 0), 1, 0)
    min_d2_x2 = collect(D2_X2, _chord_defect(v, x2, 1), 0, 1)
    min_d1_x1 = collect(D1_X1, np.diff(v, axis=0), 0, 0)
    min_d1_x2 = collect(D1_X2, np.diff(v, axis=1), 0, 0)

    min_d2_diag = math.inf
    for defect, i, j in _diagonal_defects(s):
        if not inside[i, j]:
            continue
        min_d2_diag = min(min_d2_diag, float(defect))
        if defect < -tol:
            violations.append(CmViolation(D2_DIAG, float(x1[i]), float(x2[j]), float(defect)))

    return CmReport(
        time_tag=s.tag,
        tol=tol,
        min_d2_x1=min_d2_x1,
        min_d2_x2=min_d2_x2,
        min_d2_diag=min_d2_diag,
        min_d1_x1=min_d1_x1,
        min_d1_x2=min_d1_x2,
        violations=tuple(violations),
    )


def homogeneity_lattice(grid: GridSpec, c: float, points: int = 9) -> tuple[np.ndarray, np.ndarray]:
    """
    Interior test points whose c-scaled image stays inside the domain.

    Node pairs (x, c x) are used when the grid has them, so the check sees
    only the solver's error. Otherwise a uniform lattice of `points` per axis.
    """
    reach = 1.0 / max(c, 1.0)
    x1 = _scaled_nodes(grid.x1_nodes, c, grid.x1_max * reach)
    x2 = _scaled_nodes(grid.x2_nodes, c, grid.x2_max * reach)
    if x1.size < 2 or x2.size < 2:
        x1 = np.linspace(0.05, 0.25, points) * grid.x1_max * reach
        x2 = np.linspace(0.05, 0.25, points) * grid.x2_max * reach
    return np.meshgrid(x1, x2, indexing="ij")


def _scaled_nodes(nodes: np.ndarray, c: float, span: float) -> np.ndarray:
    window = nodes[(nodes >= 0.05 * span) & (nodes <= 0.25 * span)]
    scaled = c * window
    hit = np.isclose(scaled[:, None], nodes[None, :], rtol=1e-12, atol=0.0).any(axis=1)
    return window[hit]


def homogeneity_check(s: ValueSurface, c: float, points: int = 9) -> float:
    """max |s(c x) - c s(x)| relative to max |c s(x)| over the test lattice."""
    if c <= 0:
        raise DomainError(f"scale must be > 0 (got {c})")
    x1, x2 = homogeneity_lattice(s.grid, c, points)
    scaled = s.evaluate(c * x1, c * x2)
    base = c * s.evaluate(x1, x2)
    denom = float(np.max(np.abs(base)))
    dev = float(np.max(np.abs(scaled - base)))
    if denom == 0.0:
        return dev
    return dev / denom


def european_call_price(spot: float, strike: float, r: float, sigma: float, T: float,
                        q: float = 0.0) -> float:
    """Lognormal closed form; q is a continuous yield (the fee alpha)."""
    if T <= 0 or sigma <= 0:
        return max(spot * math.exp(-q * max(T, 0.0)) - strike * math.exp(-r * max(T, 0.0)), 0.0)
    vol = sigma * math.sqrt(T)
    d1 = (math.log(spot / strike) + (r - q + 0.5 * sigma**2) * T) / vol
    d2 = d1 - vol
    return float(spot * math.exp(-q * T) * norm.cdf(d1) - strike * math.exp(-r * T) * norm.cdf(d2))


@dataclass(frozen=True)
class GapReport:
    anniversary: int
    certified: bool
    max_gap: float
    max_scaled_gap: float
    min_gap: float

    def within(self, rtol: float = 1e-6) -> bool:
        return self.max_scaled_gap <= rtol


def gap_report(gap: np.ndarray, dense_values: np.ndarray, anniversary: int,
               certified: bool, mask: np.ndarray | None = None) -> GapReport:
    """Summarizes a dense-minus-extreme gap matrix, scaled by 1 + |V|, over `mask` if given."""
    scaled = gap / (1.0 + np.abs(dense_values))
    if mask is not None:
        gap = gap[mask]
        scaled = scaled[mask]
    return GapReport(
        anniversary=anniversary,
        certified=certified,
        max_gap=float(np.max(gap)),
        max_scaled_gap=float(np.max(scaled)),
        min_gap=float(np.min(gap)),
    )


def surrender_count(control: ControlMap) -> int:
    if control.kind != GLWB:
        raise DomainError("surrender regions only exist for the GLWB")
    return int(np.sum(control.labels() == SURRENDER_LABEL))
