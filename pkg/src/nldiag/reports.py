"""CSV report emission and the reproducibility manifest.

All numeric CSV fields are serialized with 17 significant digits so reports
round-trip doubles exactly.  Every output directory gets exactly one
manifest recording the command, the full effective configuration, and
content digests of any input files, which together suffice to re-run the
command bit-identically.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__ as _tool_version
from .homotopy import RunReport
from .sweeps import ParameterSweepResult, StepSizeSweepResult

__all__ = [
    "fmt",
    "write_run_report",
    "write_parameter_sweep",
    "write_stepsize_sweep",
    "write_rosenbrock_spectra",
    "write_manifest",
    "file_digest",
]

FAIL_MARKER = "FAIL"


def fmt(x) -> str:
    """17-significant-digit decimal form (lossless for doubles)."""
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_run_report(out_dir, report: RunReport) -> List[str]:
    """Emit steps/eigs/anomalies/localization/crossings CSV files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = report.circuit.unknown_ordering

    rows = []
    for rec in report.steps:
        rows.append([rec.index, fmt(rec.t), *[fmt(v) for v in rec.x],
                     rec.trace.steps_taken, rec.status])
    _write_csv(out / "steps.csv", ["step", "t", *names, "iterations", "status"], rows)

    rows = []
    for rec in report.steps:
        for method in sorted(rec.eigen):
            rep = rec.eigen[method]
            if not rep.usable:
                continue
            for lam in rep.eigenvalues:
                rows.append([rec.index, fmt(rec.t), method,
                             fmt(lam.real), fmt(lam.imag)])
    _write_csv(out / "eigs.csv", ["step", "t", "method", "re", "im"], rows)

    rows = []
    for rec in report.steps:
        for method in sorted(rec.anomalies):
            an = rec.anomalies[method]
            rows.append([rec.index, fmt(rec.t), method,
                         ";".join(sorted(an.flags)), fmt(an.leading_magnitude)])
    _write_csv(out / "anomalies.csv",
               ["step", "t", "method", "flags", "leading_abs_lambda"], rows)

    rows = []
    for rec in report.steps:
        for i, entry in enumerate(rec.localization):
            res = entry.result
            rows.append([
                rec.index, fmt(rec.t), entry.method, i,
                fmt(entry.eigenvalue.real), fmt(entry.eigenvalue.imag),
                ";".join(str(r) for r in res.flagged_rows),
                ";".join(res.flagged_components),
                str(res.no_dominant_peak).lower(),
            ])
    _write_csv(out / "localization.csv",
               ["step", "t", "method", "outlier_index", "eigenvalue_re",
                "eigenvalue_im", "flagged_rows", "flagged_components",
                "no_dominant_peak"], rows)

    rows = []
    dt = report.config.dt
    for method in sorted(report.crossings):
        for ev in report.crossings[method]:
            rows.append([ev.step_index, fmt(ev.step_index * dt), method,
                         ev.kind, "on" if ev.on else "off"])
    _write_csv(out / "crossings.csv",
               ["step", "t", "method", "kind", "direction"], rows)

    return ["steps.csv", "eigs.csv", "anomalies.csv", "localization.csv",
            "crossings.csv"]


def write_parameter_sweep(out_dir, result: ParameterSweepResult,
                          order: int = 1) -> List[str]:
    """Emit grid.csv plus per-value eigenvector dumps for flagged steps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for entry in result.entries:
        for t, lead in zip(entry.ts, entry.leading_abs):
            rows.append([fmt(t), fmt(entry.value), order,
                         FAIL_MARKER if np.isnan(lead) else fmt(lead)])
    _write_csv(out / "grid.csv", ["t", "value", "order", "leading_abs_lambda"], rows)

    rows = []
    for entry in result.entries:
        for which, vec, step in (("first", entry.eigvec_first, entry.first_flagged_step),
                                 ("last", entry.eigvec_last, entry.last_flagged_step)):
            if vec is None:
                continue
            for comp_idx, v in enumerate(vec):
                rows.append([fmt(entry.value), which, step,
                             fmt(entry.ts[step]), comp_idx,
                             fmt(v.real), fmt(v.imag), fmt(abs(v))])
    _write_csv(out / "eigvectors.csv",
               ["value", "which", "step", "t", "component", "re", "im", "abs"],
               rows)
    return ["grid.csv", "eigvectors.csv"]


def write_stepsize_sweep(out_dir, result: StepSizeSweepResult) -> List[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for cell in result.cells:
        rows.append([fmt(cell.t), fmt(cell.dt), cell.order,
                     FAIL_MARKER if cell.leading_abs is None else fmt(cell.leading_abs)])
    _write_csv(out / "grid.csv", ["t", "value", "order", "leading_abs_lambda"], rows)
    return ["grid.csv"]


def write_rosenbrock_spectra(out_dir, map_eigs: np.ndarray,
                             hessian_eigs: Optional[np.ndarray]) -> List[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "spectrum.csv", ["re", "im"],
               [[fmt(l.real), fmt(l.imag)] for l in map_eigs])
    written = ["spectrum.csv"]
    if hessian_eigs is not None:
        _write_csv(out / "hessian_spectrum.csv", ["re", "im"],
                   [[fmt(l.real), fmt(l.imag)] for l in hessian_eigs])
        written.append("hessian_spectrum.csv")
    return written


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command: str, config: Dict,
                   input_digests: Dict[str, str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "input_digests": input_digests,
        "tool_version": _tool_version,
    }
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
