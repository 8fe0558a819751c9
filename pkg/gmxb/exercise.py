from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from gmxb.contracts import GLWB, GMWB, Contract
from gmxb.errors import CertificationError, DomainError
from gmxb.grid import MINUS, PLUS, GridSpec, ValueSurface

TIE_RTOL = 1e-9
DEFAULT_PARTITION = 201

SURRENDER_LABEL = "surrender"
GLWB_LABELS = {0.0: "nonwithdrawal", 1.0: "contract-rate", 2.0: SURRENDER_LABEL}
FRACTIONAL = "fractional"


@dataclass(frozen=True)
class DenseSearch:
    p: int = DEFAULT_PARTITION

    def __post_init__(self) -> None:
        if self.p < 2:
            raise DomainError(f"partition size must be >= 2 (got {self.p})")

    def describe(self) -> str:
        return f"dense(p={self.p})"


@dataclass(frozen=True)
class ExtremePoints:
    allow_uncertified: bool = False

    def describe(self) -> str:
        return "extreme-points" + ("(override)" if self.allow_uncertified else "")


SearchMode = Union[DenseSearch, ExtremePoints]


@dataclass(frozen=True, eq=False)
class ControlMap:
    grid: GridSpec
    lambda_star: np.ndarray
    value: np.ndarray
    anniversary: int
    kind: str
    certified: bool

    def scaled_withdrawal(self) -> np.ndarray:
        """lambda* x2, the withdrawal amount (meaningful for the GMWB)."""
        _, x2 = self.grid.mesh()
        return self.lambda_star * x2

    def labels(self) -> np.ndarray:
        return np.vectorize(glwb_label, otypes=[object])(self.lambda_star)

    def histogram(self) -> dict[str, int]:
        if self.kind == GLWB:
            names, counts = np.unique(self.labels(), return_counts=True)
            return {str(k): int(v) for k, v in zip(names, counts)}
        values, counts = np.unique(np.round(self.lambda_star, 6), return_counts=True)
        return {f"{v:g}": int(c) for v, c in zip(values, counts)}


def glwb_label(lam: float) -> str:
    for point, name in GLWB_LABELS.items():
        if abs(lam - point) <= 1e-12:
            return name
    return FRACTIONAL


def dense_partition(lo: float, hi: float, p: int) -> np.ndarray:
    # (hi - lo) * i / (p - 1) keeps the interior integers exact
    return lo + (hi - lo) * np.arange(p, dtype=float) / (p - 1)


def _actions(contract: Contract, n: int, mode: SearchMode, x1: np.ndarray,
             x2: np.ndarray) -> np.ndarray:
    candidates = contract.candidates(x1, x2, n)
    if isinstance(mode, ExtremePoints):
        if not contract.certified(n) and not mode.allow_uncertified:
            raise CertificationError(
                f"bang-bang not certified for {contract.kind.upper()} at anniversary {n} "
                "(penalty and contract amount both positive)"
            )
        return np.sort(candidates, axis=0)
    adm = contract.admissible
    partition = dense_partition(adm.lo, adm.hi, mode.p)
    dense = np.broadcast_to(partition[:, None, None], (mode.p,) + x1.shape)
    return np.sort(np.concatenate([dense, candidates], axis=0), axis=0)


def _action_values(v_plus: ValueSurface, contract: Contract, n: int, x1: np.ndarray,
                   x2: np.ndarray, actions: np.ndarray) -> np.ndarray:
    grid = v_plus.grid
    out = np.empty(actions.shape)
    for k in range(actions.shape[0]):
        anchor, scale = contract.ray_anchor(actions[k])
        y1, y2, _ = contract.transition(x1, x2, n, anchor)
        _, _, cash = contract.transition(x1, x2, n, actions[k])
        y1, y2 = grid.clamp(y1, y2)
        out[k] = scale * v_plus.evaluate_split(y1, y2) + cash
    return out


def apply_exercise(
    v_plus: ValueSurface, contract: Contract, n: int, mode: SearchMode
) -> tuple[ValueSurface, ControlMap]:
    """
    V(x, n-) = max over evaluated actions of V(f(x, lam), n+) + cash(x, lam).
    V(., n+) is read with `ValueSurface.evaluate_split`.
    The smallest action within TIE_RTOL of the maximum is reported.
    """
    if v_plus.side != PLUS or v_plus.anniversary != n:
        raise DomainError(f"expected the {n}+ surface, got {v_plus.tag}")
    x1, x2 = v_plus.grid.mesh()
    actions = _actions(contract, n, mode, x1, x2)
    values = _action_values(v_plus, contract, n, x1, x2, actions)

    best = values.max(axis=0)
    near = values >= best - TIE_RTOL * np.abs(best)
    pick = np.argmax(near, axis=0)
    lam_star = np.take_along_axis(actions, pick[None], axis=0)[0]

    v_minus = v_plus.with_values(best, time=v_plus.time, side=MINUS, anniversary=n)
    control = ControlMap(
        grid=v_plus.grid,
        lambda_star=lam_star,
        value=best,
        anniversary=n,
        kind=contract.kind,
        certified=contract.certified(n),
    )
    return v_minus, control


def bang_bang_gap(
    v_plus: ValueSurface, contract: Contract, n: int, p: int = DEFAULT_PARTITION
) -> np.ndarray:
    """Dense-search value minus extreme-point value at every node."""
    dense, _ = apply_exercise(v_plus, contract, n, DenseSearch(p))
    extreme, _ = apply_exercise(v_plus, contract, n, ExtremePoints(allow_uncertified=True))
    return dense.values - extreme.values


def candidate_occupancy(control: ControlMap, contract: Contract, p: int,
                        mask: np.ndarray | None = None) -> float:
    """
    Fraction of nodes whose lambda* lies within one partition cell of a
    candidate action. GMWB nodes with x2 = 0 are skipped (every action is
    equivalent there). `mask` restricts the count further, e.g. to a
    region of interest.
    """
    adm = contract.admissible
    cell = (adm.hi - adm.lo) / (p - 1)
    x1, x2 = control.grid.mesh()
    candidates = contract.candidates(x1, x2, control.anniversary)
    close = np.any(np.abs(candidates - control.lambda_star[None]) <= cell * (1 + 1e-9), axis=0)
    keep = np.ones(close.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if contract.kind == GMWB:
        keep = keep & (x2 > 0)
    return float(np.mean(close[keep])) if np.any(keep) else 1.0
