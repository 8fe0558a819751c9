"""
Run configuration: a flat INI-like text file.

    [run]
    preset = glwb-table1     # seeds every other field
    output = out

    [market]
    sigma = 0.25             # overrides the preset

Unknown sections or keys, unparsable values and out-of-range values raise
ConfigError with the line number and the section.key name.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

from gmxb.contracts import (
    GLWB,
    GMWB,
    Contract,
    GlwbContract,
    GlwbSpec,
    GmwbContract,
    GmwbSpec,
    PenaltySchedule,
)
from gmxb.errors import ConfigError, DomainError
from gmxb.exercise import DEFAULT_PARTITION, DenseSearch, ExtremePoints, SearchMode
from gmxb.grid import DOMAIN_MULTIPLE, GridSpec, default_grid
from gmxb.model import (
    MarketModel,
    MortalityModel,
    gompertz_makeham_table,
    load_mortality_table,
    zero_mortality,
)
from gmxb.montecarlo import McConfig
from gmxb.presets import PresetData, load_all_presets
from gmxb.stepper import StepperConfig

BUNDLED = "bundled"
ZERO = "zero"
DENSE = "dense"
EXTREME = "extreme"
TRIENNIAL = "triennial"
NONE = "none"

# slack on N >= t*, matches the pricer
_CUTOFF_SLACK = 1e-9

_REQUIRED = object()

# section -> key -> default (raw text), _REQUIRED when it has none
SCHEMA: dict[str, dict[str, Any]] = {
    "run": {"preset": "", "output": "gmxb-out", "threads": "1", "retain_all": "false"},
    "contract": {
        "kind": _REQUIRED, "w0": "100", "N": _REQUIRED, "delta": "0", "beta": "0",
        "G": "0", "penalties": "", "ratchets": NONE,
    },
    "market": {"sigma": _REQUIRED, "r": _REQUIRED, "alpha": _REQUIRED},
    "mortality": {"table": BUNDLED},
    "grid": {"level": "0"},
    "stepper": {"steps_per_year": "100"},
    "search": {"mode": DENSE, "p": str(DEFAULT_PARTITION), "allow_uncertified": "false"},
    "mc": {"paths": "100000", "seed": "42", "substeps_per_year": "100", "batch_size": "10000"},
    "slice": {"x1": "", "anniversary": "0"},
    "converge": {"levels": "2"},
    "control_maps": {"anniversaries": ""},
}


@dataclass(frozen=True)
class RawValue:
    text: str
    line: int | None  # None for preset and default values


RawConfig = dict[str, dict[str, RawValue]]


def parse_config_text(text: str) -> RawConfig:
    out: RawConfig = {}
    section: str | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            out.setdefault(section, {})
            continue
        if section is None:
            raise ConfigError("key outside of any [section]", line=lineno)
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        name = f"{section}.{key}"
        if key not in SCHEMA[section]:
            raise ConfigError("unknown key", line=lineno, field=name)
        if key in out[section]:
            raise ConfigError("duplicate key", line=lineno, field=name)
        out[section][key] = RawValue(value, lineno)
    return out


def _merge(preset: PresetData, explicit: RawConfig) -> RawConfig:
    merged: RawConfig = {}
    for section, keys in preset.items():
        if section not in SCHEMA:
            raise ConfigError(f"preset uses unknown section [{section}]")
        for key, value in keys.items():
            if key not in SCHEMA[section]:
                raise ConfigError("preset uses unknown key", field=f"{section}.{key}")
            merged.setdefault(section, {})[key] = RawValue(str(value), None)
    for section, keys in explicit.items():
        merged.setdefault(section, {}).update(keys)
    return merged


class _Fields:
    """Typed access to a merged raw config, converting errors to ConfigError."""

    def __init__(self, raw: RawConfig):
        self.raw = raw

    def get(self, section: str, key: str) -> RawValue:
        found = self.raw.get(section, {}).get(key)
        if found is not None:
            return found
        default = SCHEMA[section][key]
        if default is _REQUIRED:
            raise ConfigError("missing required value", field=f"{section}.{key}")
        return RawValue(default, None)

    def convert(self, section: str, key: str, func: Callable[[str], Any]) -> Any:
        value = self.get(section, key)
        try:
            return func(value.text)
        except (ValueError, DomainError) as e:
            raise ConfigError(f"invalid value {value.text!r} ({e})", line=value.line,
                              field=f"{section}.{key}") from None

    def fail(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(message, line=self.get(section, key).line, field=f"{section}.{key}")

    def canonical(self) -> str:
        lines = []
        for section in SCHEMA:
            for key in SCHEMA[section]:
                if key == "output":
                    continue  # moving the output directory keeps the hash
                try:
                    lines.append(f"{section}.{key} = {self.get(section, key).text}")
                except ConfigError:
                    continue
        return "\n".join(lines) + "\n"


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true or false")


def parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def parse_penalties(text: str) -> PenaltySchedule:
    rates: dict[int, float] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if ":" not in part:
            raise ValueError("expected 'anniversary:rate' pairs")
        n, kappa = part.split(":", 1)
        rates[int(n)] = float(kappa)
    return PenaltySchedule.from_mapping(rates)


def parse_ratchets(text: str, n_years: int) -> frozenset[int]:
    lowered = text.strip().lower()
    if lowered == TRIENNIAL:
        return frozenset(range(3, n_years, 3))
    if lowered in (NONE, ""):
        return frozenset()
    values = parse_int_list(text)
    if any(not 1 <= n < n_years for n in values):
        raise ValueError(f"ratchet anniversaries must lie in 1..{n_years - 1}")
    return frozenset(values)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("must be >= 0")
    return value


@dataclass(frozen=True, eq=False)
class RunConfig:
    kind: str
    spec: GlwbSpec | GmwbSpec
    market: MarketModel
    mortality: MortalityModel | None
    mortality_source: str
    grid_level: int
    stepper: StepperConfig
    mode: SearchMode
    partition: int
    mc: McConfig
    output: Path
    retain_all: bool
    slice_x1: float
    slice_anniversary: int
    converge_levels: int
    map_anniversaries: tuple[int, ...]
    preset: str
    config_hash: str

    def contract(self) -> Contract:
        if self.kind == GLWB:
            assert self.mortality is not None
            return GlwbContract(self.spec, self.mortality)  # type: ignore[arg-type]
        return GmwbContract(self.spec)  # type: ignore[arg-type]

    def grid(self) -> GridSpec:
        return default_grid(self.spec.w0, self.grid_level)

    def with_output(self, output: Path) -> RunConfig:
        return replace(self, output=output)

    def with_threads(self, threads: int) -> RunConfig:
        return replace(
            self,
            stepper=replace(self.stepper, threads=threads),
            mc=replace(self.mc, threads=threads),
        )


def _mortality(f: _Fields, n_years: int, base_dir: Path) -> tuple[MortalityModel, str]:
    source = f.get("mortality", "table").text
    if source == BUNDLED:
        return gompertz_makeham_table(), source
    if source == ZERO:
        return zero_mortality(float(n_years)), source
    path = Path(source)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise f.fail("mortality", "table", f"referenced file does not exist: {path}")
    return load_mortality_table(path), source


def build_run_config(raw: RawConfig, *, base_dir: Path = Path(".")) -> RunConfig:
    f = _Fields(raw)

    kind = f.convert("contract", "kind", lambda s: s.strip().lower())
    if kind not in (GLWB, GMWB):
        raise f.fail("contract", "kind", f"expected {GLWB} or {GMWB}, got {kind!r}")
    n_years = f.convert("contract", "N", _positive_int)
    w0 = f.convert("contract", "w0", float)
    if not w0 > 0:
        raise f.fail("contract", "w0", "must be > 0")
    penalties = f.convert("contract", "penalties", parse_penalties)

    mortality: MortalityModel | None = None
    mortality_source = ""
    try:
        if kind == GLWB:
            ratchets = f.convert("contract", "ratchets", lambda s: parse_ratchets(s, n_years))
            spec: GlwbSpec | GmwbSpec = GlwbSpec(
                delta=f.convert("contract", "delta", float),
                beta=f.convert("contract", "beta", float),
                penalties=penalties,
                ratchets=ratchets,
                n_years=n_years,
                w0=w0,
            )
            mortality, mortality_source = _mortality(f, n_years, base_dir)
            if n_years < mortality.cutoff - _CUTOFF_SLACK:
                raise f.fail("contract", "N", f"GLWB expiry must reach the mortality cutoff "
                                              f"t*={mortality.cutoff:g}")
        else:
            spec = GmwbSpec(G=f.convert("contract", "G", float), penalties=penalties,
                            n_years=n_years, w0=w0)
    except DomainError as e:
        raise ConfigError(str(e), field="contract") from None

    sigma, r, alpha = (f.convert("market", key, float) for key in ("sigma", "r", "alpha"))
    try:
        market_model = MarketModel(sigma=sigma, r=r, alpha=alpha)
    except DomainError as e:
        raise ConfigError(str(e), field="market") from None

    threads = f.convert("run", "threads", _positive_int)
    stepper = f.convert(
        "stepper", "steps_per_year",
        lambda s: StepperConfig(steps_per_year=_positive_int(s), threads=threads),
    )

    mode_name = f.convert("search", "mode", lambda s: s.strip().lower())
    partition = f.convert("search", "p", int)
    if partition < 2:
        raise f.fail("search", "p", "partition size must be >= 2")
    mode: SearchMode
    if mode_name == DENSE:
        mode = DenseSearch(partition)
    elif mode_name == EXTREME:
        mode = ExtremePoints(f.convert("search", "allow_uncertified", parse_bool))
    else:
        raise f.fail("search", "mode", f"expected {DENSE} or {EXTREME}, got {mode_name!r}")

    mc = McConfig(
        paths=f.convert("mc", "paths", _positive_int),
        seed=f.convert("mc", "seed", _nonnegative_int),
        substeps_per_year=f.convert("mc", "substeps_per_year", _positive_int),
        batch_size=f.convert("mc", "batch_size", _positive_int),
        threads=threads,
    )

    slice_x1 = f.convert("slice", "x1", lambda s: float(s) if s.strip() else w0)
    if not 0.0 <= slice_x1 <= DOMAIN_MULTIPLE * w0:
        raise f.fail("slice", "x1", "slice lies outside the truncated domain")
    slice_n = f.convert("slice", "anniversary", _nonnegative_int)
    if slice_n >= n_years:
        raise f.fail("slice", "anniversary", f"must lie in 0..{n_years - 1}")

    anniversaries = f.convert("control_maps", "anniversaries", parse_int_list) \
        or tuple(range(n_years))
    if any(not 0 <= n < n_years for n in anniversaries):
        raise f.fail("control_maps", "anniversaries", f"must lie in 0..{n_years - 1}")

    return RunConfig(
        kind=kind,
        spec=spec,
        market=market_model,
        mortality=mortality,
        mortality_source=mortality_source,
        grid_level=f.convert("grid", "level", _nonnegative_int),
        stepper=stepper,
        mode=mode,
        partition=partition,
        mc=mc,
        output=Path(f.get("run", "output").text),
        retain_all=f.convert("run", "retain_all", parse_bool),
        slice_x1=slice_x1,
        slice_anniversary=slice_n,
        converge_levels=f.convert("converge", "levels", _nonnegative_int),
        map_anniversaries=tuple(sorted(set(anniversaries))),
        preset=f.get("run", "preset").text,
        config_hash=hashlib.sha256(f.canonical().encode("utf-8")).hexdigest(),
    )


def resolve_config(
    explicit: RawConfig,
    *,
    preset: str | None = None,
    presets: dict[str, PresetData] | None = None,
    base_dir: Path = Path("."),
) -> RunConfig:
    """Merges a preset (from the argument or [run] preset) under explicit keys."""
    presets = presets if presets is not None else load_all_presets()
    explicit = {s: dict(k) for s, k in explicit.items()}
    if preset:
        explicit.setdefault("run", {})["preset"] = RawValue(preset, None)
    name_value = explicit.get("run", {}).get("preset")
    seed: PresetData = {}
    if name_value is not None and name_value.text:
        if name_value.text not in presets:
            raise ConfigError(f"unknown preset {name_value.text!r} "
                              f"(known: {', '.join(sorted(presets))})",
                              line=name_value.line, field="run.preset")
        seed = presets[name_value.text]
    return build_run_config(_merge(seed, explicit), base_dir=base_dir)


def load_config(path: Path | None, *, preset: str | None = None,
                presets: dict[str, PresetData] | None = None) -> RunConfig:
    if path is None:
        if not preset:
            raise ConfigError("need a config file or --preset")
        return resolve_config({}, preset=preset, presets=presets)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    explicit = parse_config_text(path.read_text(encoding="utf-8"))
    return resolve_config(explicit, preset=preset, presets=presets, base_dir=path.parent)
