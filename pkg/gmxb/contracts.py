from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from gmxb.errors import DomainError
from gmxb.model import ContractState, ExerciseSchedule, MortalityModel, survival
from gmxb.stepper import SourceTerm

GLWB = "glwb"
GMWB = "gmwb"

# Categorical GLWB actions
NONWITHDRAWAL = 0.0
CONTRACT_RATE = 1.0
SURRENDER = 2.0


@dataclass(frozen=True)
class PenaltySchedule:
    """
    Step function over anniversaries: kappa_n is the rate of the largest
    listed anniversary <= n, the first listed rate before that, 0 if empty.
    """

    points: tuple[tuple[int, float], ...] = ()

    def __post_init__(self) -> None:
        anniversaries = [n for n, _ in self.points]
        if anniversaries != sorted(set(anniversaries)):
            raise DomainError("penalty anniversaries must be strictly increasing")
        for n, kappa in self.points:
            if not 0.0 <= kappa <= 1.0:
                raise DomainError(f"penalty rate at n={n} must lie in [0, 1] (got {kappa})")

    @classmethod
    def from_mapping(cls, rates: dict[int, float]) -> PenaltySchedule:
        return cls(tuple(sorted((int(n), float(k)) for n, k in rates.items())))

    def rate(self, n: int) -> float:
        if not self.points:
            return 0.0
        current = self.points[0][1]
        for anniversary, kappa in self.points:
            if anniversary > n:
                break
            current = kappa
        return current


@dataclass(frozen=True)
class GlwbSpec:
    delta: float
    beta: float
    penalties: PenaltySchedule
    ratchets: frozenset[int]
    n_years: int
    w0: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must lie in [0, 1] (got {self.delta})")
        if self.beta < 0:
            raise DomainError(f"beta must be >= 0 (got {self.beta})")
        if self.n_years < 1 or self.w0 <= 0:
            raise DomainError("expiry must be >= 1 and w0 > 0")

    @property
    def schedule(self) -> ExerciseSchedule:
        return ExerciseSchedule.annual(self.n_years)


@dataclass(frozen=True)
class GmwbSpec:
    G: float
    penalties: PenaltySchedule
    n_years: int
    w0: float

    def __post_init__(self) -> None:
        if self.G < 0:
            raise DomainError(f"G must be >= 0 (got {self.G})")
        if self.n_years < 1 or self.w0 <= 0:
            raise DomainError("expiry must be >= 1 and w0 > 0")

    @property
    def schedule(self) -> ExerciseSchedule:
        return ExerciseSchedule.annual(self.n_years)

    @property
    def terminal_penalty(self) -> float:
        return self.penalties.rate(self.n_years)


@dataclass(frozen=True)
class EventOutcome:
    new_state: ContractState
    cash: float


@dataclass(frozen=True)
class AdmissibleSet:
    lo: float
    hi: float
    candidates: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise DomainError("admissible interval is empty")
        if any(not self.lo <= c <= self.hi for c in self.candidates):
            raise DomainError("candidate actions must lie inside the admissible interval")

    def contains(self, lam: float) -> bool:
        return self.lo <= lam <= self.hi


@dataclass(frozen=True)
class CandidateSet:
    actions: tuple[float, ...]
    certified: bool


def _check_action(lam: np.ndarray | float, admissible: AdmissibleSet) -> None:
    arr = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < admissible.lo) or np.any(arr > admissible.hi):
        raise DomainError(
            f"action outside admissible set [{admissible.lo:g}, {admissible.hi:g}]"
        )


# -------------------------------------------------------------------------
# Vectorized cash flows and transitions (x1, x2, lam broadcast together)
# -------------------------------------------------------------------------


def glwb_transition(
    spec: GlwbSpec, surv: float, x1, x2, n: int, lam
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    lam = np.asarray(lam, dtype=float)
    kappa = spec.penalties.rate(n)
    ratchet = 1.0 if n in spec.ratchets else 0.0
    d = spec.delta

    # lam = 0: bonus, or ratchet to the account
    y1_none = x1
    y2_none = np.maximum(x2 * (1.0 + spec.beta), ratchet * x1)

    # lam in (0, 1]: withdraw lam * delta * x2
    lam_w = np.clip(lam, 0.0, 1.0)
    acct = np.maximum(x1 - lam_w * d * x2, 0.0)
    y1_with = acct
    y2_with = np.maximum(x2, ratchet * acct)
    cash_with = lam_w * d * x2

    # lam in (1, 2]: (2 - lam) * f(1) with a penalized surrender of the remainder
    full = np.maximum(x1 - d * x2, 0.0)
    shrink = 2.0 - lam
    y1_surr = shrink * full
    y2_surr = shrink * np.maximum(x2, ratchet * full)
    cash_surr = d * x2 + (lam - 1.0) * (1.0 - kappa) * full

    none = lam == 0.0
    surr = lam > 1.0
    y1 = np.where(none, y1_none, np.where(surr, y1_surr, y1_with))
    y2 = np.where(none, y2_none, np.where(surr, y2_surr, y2_with))
    cash = np.where(none, 0.0, np.where(surr, cash_surr, cash_with))
    return y1, y2, surv * cash


def gmwb_transition(
    spec: GmwbSpec, x1, x2, n: int, lam
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    lam = np.asarray(lam, dtype=float)
    kappa = spec.penalties.rate(n)
    amount = lam * x2
    free = np.minimum(spec.G, x2)
    cash = np.where(amount <= free, amount, spec.G + (1.0 - kappa) * (amount - spec.G))
    y1 = np.maximum(x1 - amount, 0.0)
    y2 = (1.0 - lam) * x2
    return y1, y2, cash


# -------------------------------------------------------------------------
# Scalar operations
# -------------------------------------------------------------------------


def glwb_event(
    spec: GlwbSpec, m: MortalityModel, x: ContractState, n: int, lam: float
) -> EventOutcome:
    _check_action(lam, GLWB_ADMISSIBLE)
    t = spec.schedule.time_of(n)
    y1, y2, cash = glwb_transition(spec, survival(m, t), x.x1, x.x2, n, lam)
    return EventOutcome(ContractState(float(y1), float(y2)), float(cash))


def gmwb_event(spec: GmwbSpec, x: ContractState, n: int, lam: float) -> EventOutcome:
    _check_action(lam, GMWB_ADMISSIBLE)
    spec.schedule.time_of(n)
    y1, y2, cash = gmwb_transition(spec, x.x1, x.x2, n, lam)
    return EventOutcome(ContractState(float(y1), float(y2)), float(cash))


def glwb_payoff(x: ContractState) -> float:
    # N >= t*, so nothing is owed at expiry
    return 0.0


def gmwb_payoff(spec: GmwbSpec, x: ContractState) -> float:
    return max(x.x1, (1.0 - spec.terminal_penalty) * x.x2)


GLWB_ADMISSIBLE = AdmissibleSet(0.0, 2.0, (NONWITHDRAWAL, CONTRACT_RATE, SURRENDER))
GMWB_ADMISSIBLE = AdmissibleSet(0.0, 1.0)


# -------------------------------------------------------------------------
# Contract-agnostic interface used by the pricer
# -------------------------------------------------------------------------


class Contract(Protocol):
    kind: str
    admissible: AdmissibleSet

    @property
    def schedule(self) -> ExerciseSchedule: ...

    @property
    def w0(self) -> float: ...

    def transition(self, x1, x2, n: int, lam) -> tuple[np.ndarray, np.ndarray, np.ndarray]: ...

    def payoff(self, x1, x2) -> np.ndarray: ...

    def candidates(self, x1, x2, n: int) -> np.ndarray: ...

    def ray_anchor(self, lam) -> tuple[np.ndarray, np.ndarray]: ...

    def certified(self, n: int) -> bool: ...

    def source(self) -> SourceTerm: ...

    def boundary_mortality(self) -> MortalityModel | None: ...

    def terminal_g(self) -> float: ...


class GlwbContract:
    kind = GLWB
    admissible = GLWB_ADMISSIBLE

    def __init__(self, spec: GlwbSpec, mortality: MortalityModel):
        self.spec = spec
        self.mortality = mortality

    @property
    def schedule(self) -> ExerciseSchedule:
        return self.spec.schedule

    @property
    def w0(self) -> float:
        return self.spec.w0

    def survival_at(self, n: int) -> float:
        return survival(self.mortality, self.schedule.time_of(n))

    def transition(self, x1, x2, n, lam):
        return glwb_transition(self.spec, self.survival_at(n), x1, x2, n, lam)

    def payoff(self, x1, x2):
        return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)

    def candidates(self, x1, x2, n):
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        return np.stack([np.full(shape, c) for c in self.admissible.candidates])

    def ray_anchor(self, lam):
        """
        f(x, lam) = (2 - lam) f(x, 1) on the surrender segment, so V+ there is read at the
        lam = 1 state and scaled, using V+(s y) = s V+(y).
        """
        lam = np.asarray(lam, dtype=float)
        surr = lam > 1.0
        return np.where(surr, 1.0, lam), np.where(surr, 2.0 - lam, 1.0)

    def certified(self, n: int) -> bool:
        return True

    def source(self) -> SourceTerm:
        return SourceTerm.death_benefit(self.mortality)

    def boundary_mortality(self) -> MortalityModel | None:
        return self.mortality

    def terminal_g(self) -> float:
        return 0.0


class GmwbContract:
    kind = GMWB
    admissible = GMWB_ADMISSIBLE

    def __init__(self, spec: GmwbSpec):
        self.spec = spec

    @property
    def schedule(self) -> ExerciseSchedule:
        return self.spec.schedule

    @property
    def w0(self) -> float:
        return self.spec.w0

    def transition(self, x1, x2, n, lam):
        return gmwb_transition(self.spec, x1, x2, n, lam)

    def payoff(self, x1, x2):
        return np.maximum(
            np.asarray(x1, dtype=float), (1.0 - self.spec.terminal_penalty) * np.asarray(x2)
        )

    def candidates(self, x1, x2, n):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        positive = x2 > 0
        ratio = np.divide(self.spec.G, x2, out=np.ones_like(x2), where=positive)
        middle = np.where(positive, np.minimum(ratio, 1.0), 0.0)
        top = np.where(positive, 1.0, 0.0)
        return np.stack([np.zeros_like(x2), middle, top])

    def ray_anchor(self, lam):
        lam = np.asarray(lam, dtype=float)
        return lam, np.ones_like(lam)

    def certified(self, n: int) -> bool:
        return self.spec.penalties.rate(n) == 0.0 or self.spec.G == 0.0

    def source(self) -> SourceTerm:
        return SourceTerm.zero()

    def boundary_mortality(self) -> MortalityModel | None:
        return None

    def terminal_g(self) -> float:
        # max(x1, (1 - kappa_N) x2) = x1 for large x1
        return 1.0


def candidate_set(contract: Contract, x: ContractState, n: int) -> CandidateSet:
    contract.schedule.time_of(n)
    points = contract.candidates(x.x1, x.x2, n)
    actions = tuple(sorted({float(v) for v in np.ravel(points)}))
    return CandidateSet(actions=actions, certified=contract.certified(n))


def find_cash_convexity_violation(
    contract: Contract,
    n: int,
    lam: float,
    x1_values: np.ndarray,
    x2_values: np.ndarray,
    *,
    tol: float = 1e-10,
) -> tuple[ContractState, ContractState, ContractState] | None:
    """
    Searches uniform lattices for a triple (a, midpoint, b) along either axis
    on which the event cash flow is not midpoint-convex in x. Returns
    (a, b, midpoint) for the first violation, None when the cash is convex on
    the lattice.
    """
    x1_values = np.asarray(x1_values, dtype=float)
    x2_values = np.asarray(x2_values, dtype=float)
    X1, X2 = np.meshgrid(x1_values, x2_values, indexing="ij")
    _, _, cash = contract.transition(X1, X2, n, lam)

    for axis in (0, 1):
        size = cash.shape[axis]
        for k in range(1, size // 2 + 1):
            lo = np.take(cash, range(0, size - 2 * k), axis=axis)
            mid = np.take(cash, range(k, size - k), axis=axis)
            hi = np.take(cash, range(2 * k, size), axis=axis)
            defect = mid - 0.5 * (lo + hi)
            bad = np.argwhere(defect > tol * (1.0 + np.abs(mid)))
            if bad.size:
                i, j = (int(v) for v in bad[0])
                if axis == 0:
                    a = (i, j)
                    b = (i + 2 * k, j)
                    c = (i + k, j)
                else:
                    a = (i, j)
                    b = (i, j + 2 * k)
                    c = (i, j + k)
                return tuple(
                    ContractState(float(X1[p]), float(X2[p])) for p in (a, b, c)
                )  # type: ignore[return-value]
    return None
