from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from gmxb.errors import ConfigError, DomainError

TABLE_HEADER = "# annual_hazard"

# Synthetic Gompertz-Makeham force of mortality A + B * c**age
GM_A = 0.0002
GM_B = 3.5e-5
GM_C = 1.095
DEFAULT_ENTRY_AGE = 65
DEFAULT_TERMINAL_AGE = 122
# rounding allowance when deciding that a table accounts for every holder
_MASS_RTOL = 1e-12


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class MarketModel:
    sigma: float
    r: float
    alpha: float

    def __post_init__(self) -> None:
        if not _finite(self.sigma, self.r, self.alpha):
            raise DomainError("market parameters must be finite")
        if self.sigma < 0:
            raise DomainError(f"sigma must be >= 0 (got {self.sigma})")
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0 (got {self.alpha})")


@dataclass(frozen=True)
class ContractState:
    x1: float  # investment account
    x2: float  # withdrawal benefit

    def __post_init__(self) -> None:
        if not _finite(self.x1, self.x2) or self.x1 < 0 or self.x2 < 0:
            raise DomainError(f"contract state must be nonnegative: ({self.x1}, {self.x2})")

    def scaled(self, c: float) -> ContractState:
        return ContractState(c * self.x1, c * self.x2)


@dataclass(frozen=True)
class ExerciseSchedule:
    times: tuple[float, ...]
    expiry: float

    def __post_init__(self) -> None:
        if not self.times:
            raise DomainError("exercise schedule needs at least one time")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("exercise times must be strictly increasing")
        if self.times[-1] >= self.expiry:
            raise DomainError("all exercise times must precede the expiry")

    @classmethod
    def annual(cls, n_years: int) -> ExerciseSchedule:
        if n_years < 1:
            raise DomainError(f"expiry must be at least one year (got {n_years})")
        return cls(times=tuple(float(n) for n in range(n_years)), expiry=float(n_years))

    def __len__(self) -> int:
        return len(self.times)

    def time_of(self, n: int) -> float:
        if not 0 <= n < len(self.times):
            raise DomainError(f"anniversary {n} is not an exercise time")
        return self.times[n]

    def interval_end(self, n: int) -> float:
        return self.times[n + 1] if n + 1 < len(self.times) else self.expiry


@dataclass(frozen=True)
class MortalityModel:
    """
    Piecewise-constant mortality rate M(t): the fraction of the original
    holders dying per unit time. breaks has one more entry than rates and
    starts at 0; rate k covers [breaks[k], breaks[k+1]) (right-continuous).
    Nobody survives past the cutoff t* when the rates integrate to 1.
    """

    breaks: tuple[float, ...]
    rates: tuple[float, ...]
    entry_age: float = DEFAULT_ENTRY_AGE

    def __post_init__(self) -> None:
        if len(self.breaks) != len(self.rates) + 1 or not self.rates:
            raise DomainError("mortality table needs len(breaks) == len(rates) + 1 >= 2")
        if self.breaks[0] != 0.0:
            raise DomainError("mortality table must start at t = 0")
        if any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise DomainError("mortality breakpoints must be strictly increasing")
        if not _finite(*self.rates, *self.breaks) or min(self.rates) < 0:
            raise DomainError("mortality rates must be finite and nonnegative")

    @cached_property
    def _cumulative(self) -> np.ndarray:
        widths = np.diff(np.asarray(self.breaks))
        return np.concatenate([[0.0], np.cumsum(widths * np.asarray(self.rates))])

    @cached_property
    def cutoff(self) -> float:
        """First time survival reaches zero, else the end of the table."""
        cum = self._cumulative
        for k, rate in enumerate(self.rates):
            if rate > 0 and cum[k + 1] >= 1.0:
                return float(self.breaks[k] + (1.0 - cum[k]) / rate)
        return float(self.breaks[-1])

    @property
    def exhausted(self) -> bool:
        """True when the table accounts for every holder (mass 1 up to rounding)."""
        return bool(self._cumulative[-1] >= 1.0 - _MASS_RTOL)

    def integrated(self, t: np.ndarray | float) -> np.ndarray | float:
        """Closed-form integral of M over [0, t], t clipped to the table."""
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, self.breaks[-1])
        breaks = np.asarray(self.breaks)
        k = np.clip(np.searchsorted(breaks, t_arr, side="right") - 1, 0, len(self.rates) - 1)
        out = self._cumulative[k] + np.asarray(self.rates)[k] * (t_arr - breaks[k])
        return float(out) if np.ndim(out) == 0 else out

    def rates_at(self, t: np.ndarray) -> np.ndarray:
        """Vectorized hazard lookup; zero at or beyond the cutoff."""
        t_arr = np.asarray(t, dtype=float)
        k = np.searchsorted(np.asarray(self.breaks), t_arr, side="right") - 1
        k = np.clip(k, 0, len(self.rates) - 1)
        out = np.asarray(self.rates)[k]
        return np.where((t_arr >= self.cutoff) | (t_arr < 0), 0.0, out)


def survival(m: MortalityModel, t: float) -> float:
    """
    R(t) = 1 - integral of M over [0, t], clamped to [0, 1]. Zero from the
    cutoff on only when the table's mass reaches 1; a table that stops short
    (zero_mortality, a truncated file) leaves its survivors alive after its
    last record.
    """
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"survival time must be >= 0 (got {t})")
    if t >= m.cutoff and m.exhausted:
        return 0.0
    return min(1.0, max(0.0, 1.0 - m.integrated(t)))


def hazard_rate(m: MortalityModel, t: float) -> float:
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"hazard time must be >= 0 (got {t})")
    return float(m.rates_at(np.asarray(t)))


def constant_mortality(rate: float, horizon: float) -> MortalityModel:
    return MortalityModel(breaks=(0.0, float(horizon)), rates=(float(rate),))


def zero_mortality(horizon: float) -> MortalityModel:
    """No deaths at all: survival stays 1 and the horizon only bounds the table."""
    return constant_mortality(0.0, horizon)


def gompertz_makeham_table(
    entry_age: int = DEFAULT_ENTRY_AGE,
    terminal_age: int = DEFAULT_TERMINAL_AGE,
    *,
    a: float = GM_A,
    b: float = GM_B,
    c: float = GM_C,
) -> MortalityModel:
    """
    Annual death fractions from a Gompertz-Makeham survival curve. The final
    year absorbs whatever mass is left so that R(terminal_age - entry_age) = 0.
    """
    years = terminal_age - entry_age
    if years < 1:
        raise DomainError("terminal age must exceed entry age")
    t = np.arange(years + 1, dtype=float)
    log_c = math.log(c)
    surv = np.exp(-a * t - b * c**entry_age * (np.power(c, t) - 1.0) / log_c)
    deaths = surv[:-1] - surv[1:]
    deaths[-1] = max(0.0, 1.0 - float(np.sum(deaths[:-1])))
    return MortalityModel(
        breaks=tuple(float(x) for x in t),
        rates=tuple(float(x) for x in deaths),
        entry_age=entry_age,
    )


def load_mortality_table(path: Path) -> MortalityModel:
    """
    Reads "age_start rate" records under a "# annual_hazard" header. Each
    record runs until the next one's age; the last record spans one year.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    ages: list[float] = []
    rates: list[float] = []
    seen_header = False
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.lower().startswith(TABLE_HEADER):
                seen_header = True
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"expected 'age_start rate', got {line!r}", line=lineno,
                              field=str(path))
        try:
            age, rate = float(parts[0]), float(parts[1])
        except ValueError:
            raise ConfigError(f"non-numeric record {line!r}", line=lineno, field=str(path))
        if ages and age <= ages[-1]:
            raise ConfigError("ages must be strictly increasing", line=lineno, field=str(path))
        if rate < 0 or not math.isfinite(rate):
            raise ConfigError(f"rate must be >= 0 (got {rate})", line=lineno, field=str(path))
        ages.append(age)
        rates.append(rate)

    if not seen_header:
        raise ConfigError(f"missing '{TABLE_HEADER}' header", line=1, field=str(path))
    if not ages:
        raise ConfigError("mortality table has no records", field=str(path))

    breaks = [a - ages[0] for a in ages] + [ages[-1] + 1.0 - ages[0]]
    return MortalityModel(breaks=tuple(breaks), rates=tuple(rates), entry_age=ages[0])


def write_mortality_table(path: Path, m: MortalityModel) -> None:
    lines = [TABLE_HEADER]
    for start, rate in zip(m.breaks, m.rates):
        lines.append(f"{m.entry_age + start:g} {rate:.12g}")
    lines.append("")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines), encoding="utf-8")
