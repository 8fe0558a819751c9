from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

from gmxb import __version__
from gmxb.contracts import GLWB
from gmxb.diagnostics import CmReport
from gmxb.exercise import ControlMap
from gmxb.grid import GridSpec, ValueSurface
from gmxb.pricer import ConvergenceRow


def fmt(value: float | None) -> str:
    """Fixed float rendering so identical runs write identical bytes."""
    if value is None:
        return ""
    return f"{float(value):.10g}"


def metadata_header(config_hash: str, grid: GridSpec | None, mode: str) -> list[str]:
    lines = [
        f"# gmxb {__version__}",
        f"# config_sha256: {config_hash}",
    ]
    if grid is not None:
        lines.append(f"# grid: {grid.describe()}")
    lines.append(f"# mode: {mode}")
    return lines


def _write(out_path: Path, header: list[str], body: Iterable[str]) -> Path:
    lines = header + list(body) + [""]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines), encoding="utf-8")
    return out_path


def write_surface_csv(out_path: Path, s: ValueSurface, header: list[str]) -> Path:
    x1, x2 = s.grid.mesh()
    rows = (f"{fmt(a)},{fmt(b)},{fmt(v)}"
            for a, b, v in zip(x1.ravel(), x2.ravel(), s.values.ravel()))
    return _write(out_path, header + [f"# surface: {s.tag}", "x1,x2,value"], rows)


def write_control_map_csv(out_path: Path, control: ControlMap, header: list[str]) -> Path:
    """GLWB rows carry the categorical label; GMWB rows carry lambda* x2."""
    x1, x2 = control.grid.mesh()
    if control.kind == GLWB:
        scaled = control.labels().ravel()
    else:
        scaled = [fmt(v) for v in control.scaled_withdrawal().ravel()]
    rows = (
        f"{fmt(a)},{fmt(b)},{fmt(lam)},{sw},{fmt(v)}"
        for a, b, lam, sw, v in zip(x1.ravel(), x2.ravel(), control.lambda_star.ravel(),
                                    scaled, control.value.ravel())
    )
    extra = [f"# anniversary: {control.anniversary}",
             f"# certified: {str(control.certified).lower()}",
             "x1,x2,lambda_star,scaled_withdrawal,value"]
    return _write(out_path, header + extra, rows)


def write_slice_csv(out_path: Path, x1: float, columns: dict[str, ValueSurface],
                    header: list[str]) -> Path:
    """Values along x2 at fixed x1, one column per surface tag."""
    names = list(columns)
    grid = columns[names[0]].grid
    values = [columns[name].slice_at_x1(x1) for name in names]
    rows = (
        ",".join([fmt(x2)] + [fmt(col[j]) for col in values])
        for j, x2 in enumerate(grid.x2_nodes)
    )
    return _write(out_path, header + [f"# x1: {fmt(x1)}", ",".join(["x2"] + names)], rows)


def write_report(out_path: Path, entries: list[tuple[str, object]], header: list[str]) -> Path:
    def render(value: object) -> str:
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, (float, np.floating)):
            return fmt(float(value))
        return str(value)

    return _write(out_path, header, (f"{key}: {render(value)}" for key, value in entries))


def cm_entries(report: CmReport) -> list[tuple[str, object]]:
    prefix = f"cm.{report.time_tag}"
    return [
        (f"{prefix}.convex", report.convex),
        (f"{prefix}.monotone", report.monotone),
        (f"{prefix}.min_d2_x1", report.min_d2_x1),
        (f"{prefix}.min_d2_x2", report.min_d2_x2),
        (f"{prefix}.min_d2_diag", report.min_d2_diag),
        (f"{prefix}.min_d1_x1", report.min_d1_x1),
        (f"{prefix}.min_d1_x2", report.min_d1_x2),
        (f"{prefix}.violations", len(report.violations)),
    ]


def write_violations_csv(out_path: Path, reports: list[CmReport], header: list[str]) -> Path:
    rows = (
        f"{r.time_tag},{v.kind},{fmt(v.x1)},{fmt(v.x2)},{fmt(v.amount)}"
        for r in reports for v in r.violations
    )
    return _write(out_path, header + ["surface,kind,x1,x2,amount"], rows)


def write_convergence_csv(out_path: Path, rows: list[ConvergenceRow], header: list[str]) -> Path:
    body = (
        f"{row.level},{row.nodes},{row.steps_per_year},{row.mode},{fmt(row.value)},"
        f"{fmt(row.change)},{fmt(row.ratio)}"
        for row in rows
    )
    return _write(out_path, header + ["level,grid,steps_per_year,mode,value,change,ratio"], body)
