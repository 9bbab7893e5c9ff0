"""
Artifacts of a run: ``summary.csv``, ``report.json``, one ``heat_*.csv``
per trajectory and, on request, SVG decay plots.
"""
from __future__ import annotations

import json
import math
import re
import sys
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd
from rich.console import Console as RichConsole

from finsler_audit.audit import InequalityReport
from finsler_audit.heatflow import HeatTrajectory
from finsler_audit.scenarios import ScenarioResult

logger = RichConsole(file=sys.stderr)

SCHEMA = "finsler-audit/1"
SUMMARY_COLUMNS = [
    "claim",
    "scenario",
    "relation",
    "lhs",
    "rhs",
    "margin",
    "tolerance",
    "passed",
    "informational",
    "error",
]


def jsonable(value):
    """Plain JSON types; infinities become "inf"/"-inf" and NaN becomes null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def report_dict(report: InequalityReport) -> dict:
    row = report.as_row()
    row.update(
        worst_node=report.worst_node,
        divergent=report.divergent,
        runtime=report.runtime,
        details=report.details,
    )
    return jsonable(row)


def summary_frame(results: Sequence[ScenarioResult]) -> pd.DataFrame:
    rows = [report.as_row() for result in results for report in result.reports]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def all_passed(results: Sequence[ScenarioResult]) -> bool:
    return all(result.passed for result in results)


def _slug(text):
    return re.sub(r"[^A-Za-z0-9.]+", "-", text).strip("-")


def write_summary(results, output: Path) -> Path:
    path = output / "summary.csv"
    summary_frame(results).to_csv(path, index=False, float_format="%.12g")
    return path


def write_json(results, output: Path) -> Path:
    payload = {
        "schema": SCHEMA,
        "passed": all_passed(results),
        "scenarios": [
            {
                "name": result.name,
                "source": result.source,
                "seed": result.seed,
                "passed": result.passed,
                "runtime": result.runtime,
                "reports": [report_dict(r) for r in result.reports],
            }
            for result in results
        ],
    }
    path = output / "report.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def write_trajectories(results, output: Path) -> List[Path]:
    paths = []
    for result in results:
        for label, traj in result.trajectories.items():
            path = output / f"heat_{_slug(result.name)}_{_slug(label)}.csv"
            traj.to_csv(path)
            paths.append(path)
    return paths


def plot_trajectory(traj: HeatTrajectory, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot

    fig, ax = matplotlib.pyplot.subplots()
    ax.set_title(f"heat flow {traj.label}", fontsize=12)
    ax.set_xlabel("t")
    ax.set_yscale("log")
    ax.grid(linewidth=0.25)
    positive = traj.deviation > 0.0
    ax.plot(traj.times[positive], traj.deviation[positive], label="|u_t - mean|", linewidth=1)
    positive = traj.energy > 0.0
    ax.plot(traj.times[positive], traj.energy[positive], label="E(u_t)", linestyle="--", linewidth=1)
    if traj.ergodic_bound is not None:
        ax.axhline(traj.ergodic_bound, color="grey", linestyle=":", linewidth=1, label="ergodic bound")
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    matplotlib.pyplot.close(fig)


def write_plots(results, output: Path) -> List[Path]:
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        logger.log("matplotlib is not available, skipping plots")
        return []
    paths = []
    for result in results:
        for label, traj in result.trajectories.items():
            path = output / f"heat_{_slug(result.name)}_{_slug(label)}.svg"
            plot_trajectory(traj, path)
            paths.append(path)
    return paths


def write_artifacts(results, output, plots: bool = False) -> List[Path]:
    """Write every artifact of ``results`` under ``output``; report writing is serial."""
    output = Path(output)
    output.mkdir(parents=True, exist_ok=True)
    paths = [write_summary(results, output), write_json(results, output)]
    paths += write_trajectories(results, output)
    if plots:
        paths += write_plots(results, output)
    logger.log(f"wrote {len(paths)} files to {output}")
    return paths
