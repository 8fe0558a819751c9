from __future__ import annotations

import argparse
from pathlib import Path
from typing import Callable

import numpy as np

from gmxb.config import RunConfig, load_config
from gmxb.contracts import GLWB, GMWB, find_cash_convexity_violation
from gmxb.diagnostics import (
    gap_report,
    homogeneity_check,
    region_mask,
    region_of_interest,
    surrender_count,
)
from gmxb.errors import CertificationError, ConfigError, DomainError, NumericalError
from gmxb.exercise import DenseSearch, ExtremePoints, apply_exercise, candidate_occupancy
from gmxb.export import (
    cm_entries,
    metadata_header,
    write_control_map_csv,
    write_convergence_csv,
    write_report,
    write_slice_csv,
    write_surface_csv,
    write_violations_csv,
)
from gmxb.grid import MINUS, PLUS
from gmxb.montecarlo import mc_policy_value
from gmxb.pricer import PricingResult, convergence_study, price

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3
EXIT_NUMERICAL = 4

HOMOGENEITY_SCALE = 2.0
# lattice for the cash-convexity counterexample search, in multiples of w0
_CASH_LATTICE = np.linspace(0.0, 2.0, 21)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="gmxb", description="GMxB variable annuity pricer")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("price", "Price the contract and write the value and control histograms."),
        ("control-maps", "Write per-anniversary optimal control maps."),
        ("slice", "Write value slices at fixed x1 around one anniversary."),
        ("verify", "Bang-bang gaps, convexity checks and a Monte Carlo cross-check."),
        ("converge", "Value at (w0, w0) over successive refinement levels."),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", nargs="?", help="Run configuration file.")
        sp.add_argument("--preset", help="Bundled or user preset to start from.")
        sp.add_argument("--out", help="Output directory (overrides [run] output).")
        sp.add_argument("--threads", type=int, help="Worker threads for solves and paths.")
    return p.parse_args(argv)


def _header(cfg: RunConfig, result: PricingResult | None = None) -> list[str]:
    grid = result.grid if result is not None else cfg.grid()
    mode = result.mode if result is not None else cfg.mode.describe()
    return metadata_header(cfg.config_hash, grid, mode)


def _price(cfg: RunConfig, **kwargs) -> PricingResult:
    contract = cfg.contract()
    grid = cfg.grid()
    mode = kwargs.pop("mode", cfg.mode)
    print(f"Pricing {contract.kind.upper()} on a {grid.describe()} grid, "
          f"{cfg.stepper.steps_per_year} steps/year, {mode.describe()}...")
    return price(contract, cfg.market, grid, cfg.stepper, mode, log=print, **kwargs)


def run_price(cfg: RunConfig, out_dir: Path) -> int:
    result = _price(cfg, retain_surfaces=False)
    entries: list[tuple[str, object]] = [
        ("kind", result.kind),
        ("preset", cfg.preset or "-"),
        ("value_at_origin", result.value_at_origin),
        ("steps_per_year", cfg.stepper.steps_per_year),
    ]
    for n in sorted(result.control_maps):
        control = result.control_maps[n]
        for label, count in sorted(control.histogram().items()):
            entries.append((f"histogram.n{n}.{label}", count))
        if result.kind == GLWB:
            entries.append((f"surrender_nodes.n{n}", surrender_count(control)))

    path = write_report(out_dir / "summary.txt", entries, _header(cfg, result))
    print(f"[OK] V(w0, w0, 0-) = {result.value_at_origin:.6f}")
    print(f"   Summary written to: {path}")
    return EXIT_OK


def run_control_maps(cfg: RunConfig, out_dir: Path) -> int:
    result = _price(cfg, retain_surfaces=False)
    header = _header(cfg, result)
    for n in cfg.map_anniversaries:
        write_control_map_csv(out_dir / f"control_map_n{n:02d}.csv", result.control_maps[n],
                              header)
    print(f"[OK] Wrote {len(cfg.map_anniversaries)} control maps to: {out_dir}")
    return EXIT_OK


def run_slice(cfg: RunConfig, out_dir: Path) -> int:
    n = cfg.slice_anniversary
    result = _price(cfg, retain_all=cfg.retain_all)
    header = _header(cfg, result)

    surfaces = [result.surface(n, MINUS), result.surface(n, PLUS)]
    surfaces += sorted(
        (s for s in result.interior if result.surface(n, PLUS).time < s.time
         < result.surface(n + 1, MINUS).time),
        key=lambda s: s.time,
    )
    surfaces.append(result.surface(n + 1, MINUS))
    columns = {s.tag: s for s in surfaces}

    path = write_slice_csv(out_dir / f"slice_n{n:02d}.csv", cfg.slice_x1, columns, header)
    write_surface_csv(out_dir / f"surface_n{n:02d}_minus.csv", result.surface(n, MINUS), header)
    write_surface_csv(out_dir / f"surface_n{n:02d}_plus.csv", result.surface(n, PLUS), header)
    print(f"[OK] Slice at x1={cfg.slice_x1:g} around n={n} written to: {path}")
    return EXIT_OK


def run_verify(cfg: RunConfig, out_dir: Path) -> int:
    contract = cfg.contract()
    region = region_of_interest(contract.w0)
    result = _price(cfg, mode=DenseSearch(cfg.partition), check_cm=True, cm_region=region)
    header = _header(cfg, result)
    inside = region_mask(result.grid, region)
    entries: list[tuple[str, object]] = [
        ("kind", result.kind),
        ("value_at_origin", result.value_at_origin),
        ("region_of_interest", f"[0, {region[0]:g}] x [0, {region[1]:g}]"),
    ]

    override = ExtremePoints(allow_uncertified=True)
    for n in sorted(result.control_maps):
        control = result.control_maps[n]
        extreme, _ = apply_exercise(result.surface(n, PLUS), contract, n, override)
        report = gap_report(control.value - extreme.values, control.value, n,
                            contract.certified(n), inside)
        entries += [
            (f"gap.n{n}.certified", report.certified),
            (f"gap.n{n}.max", report.max_gap),
            (f"gap.n{n}.max_scaled", report.max_scaled_gap),
            (f"gap.n{n}.within_1e-6", report.within()),
            (f"occupancy.n{n}", candidate_occupancy(control, contract, cfg.partition, inside)),
        ]
        if result.kind == GMWB:
            lattice = _CASH_LATTICE * contract.w0
            found = find_cash_convexity_violation(contract, n, 1.0, lattice, lattice)
            entries.append((f"cash_convexity_violation.n{n}", "none" if found is None else
                            "; ".join(f"({x.x1:g}, {x.x2:g})" for x in found)))

    for report in result.diagnostics:
        entries += cm_entries(report)

    if result.kind == GLWB:
        entries.append(("homogeneity.c2.n0-", homogeneity_check(result.surface(0, MINUS),
                                                                HOMOGENEITY_SCALE)))

    mc = mc_policy_value(contract, cfg.market, result.control_maps, cfg.mc, log=print)
    deviation = abs(mc.estimate - result.value_at_origin)
    entries += [
        ("mc.paths", mc.paths),
        ("mc.seed", cfg.mc.seed),
        ("mc.estimate", mc.estimate),
        ("mc.standard_error", mc.standard_error),
        ("mc.deviation", deviation),
        ("mc.within_3se_plus_0.5pct",
         deviation <= 3 * mc.standard_error + 0.005 * abs(result.value_at_origin)),
    ]

    path = write_report(out_dir / "verify_report.txt", entries, header)
    write_violations_csv(out_dir / "cm_violations.csv", result.diagnostics, header)
    failing = [r.time_tag for r in result.diagnostics if not r.ok]
    if failing:
        print(f"Warning: convexity/monotonicity violations at {', '.join(failing)}")
    print(f"[OK] Verification report written to: {path}")
    return EXIT_OK


def run_converge(cfg: RunConfig, out_dir: Path) -> int:
    print(f"Convergence study over levels 0..{cfg.converge_levels}...")
    rows = convergence_study(cfg.contract(), cfg.market, cfg.stepper, cfg.mode,
                             cfg.converge_levels, log=print)
    path = write_convergence_csv(out_dir / "converge.csv", rows, _header(cfg))
    print(f"[OK] Convergence table written to: {path}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, Path], int]] = {
    "price": run_price,
    "control-maps": run_control_maps,
    "slice": run_slice,
    "verify": run_verify,
    "converge": run_converge,
}


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    try:
        cfg = load_config(Path(args.config) if args.config else None, preset=args.preset)
        if args.out:
            cfg = cfg.with_output(Path(args.out))
        if args.threads is not None:
            cfg = cfg.with_threads(args.threads)
        out_dir = cfg.output.resolve()
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir)
    except ConfigError as e:
        print(f"[ERROR] Config: {e}")
        return EXIT_CONFIG
    except DomainError as e:
        print(f"[ERROR] Invalid input: {e}")
        return EXIT_CONFIG
    except CertificationError as e:
        print(f"[ERROR] {e}. Use [search] mode = dense, or allow_uncertified = true.")
        return EXIT_CERTIFICATION
    except NumericalError as e:
        print(f"[ERROR] Numerical failure: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
