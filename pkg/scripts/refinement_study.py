# flake8: noqa E501

import sys
from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console as RichConsole

from finsler_audit.audit import check_bochner_pointwise, check_poincare
from finsler_audit.calculus import OperatorContext, weak_laplacian_residual
from finsler_audit.mesh import Chart, lebesgue_measure, make_sphere_reduction
from finsler_audit.norm import MinkowskiNormSpec
from finsler_audit.scenarios import FunctionRef

logger = RichConsole(file=sys.stdout)

RANDERS = MinkowskiNormSpec.randers(np.eye(2), [0.5, 0.0])


def weak_laplacian_rows(resolutions):
    """|∫φΔu + ∫dφ(∇u)| on the Randers torus; should fall like h^2 or faster."""
    rows = []
    for n in resolutions:
        chart = Chart.periodic_box(2.0 * np.pi, (n, n))
        ctx = OperatorContext(RANDERS, lebesgue_measure(chart, normalize=True))
        u = FunctionRef("sine").values(chart)
        phi = FunctionRef("gaussian-bump", 0.1).values(chart)
        residual = abs(weak_laplacian_residual(ctx, u, phi))
        logger.log(f"weak laplacian N={n}: residual {residual:.3e}")
        rows.append(("weak-laplacian", n, chart.spacing[0], residual))
    return rows


def sphere_rows(resolutions):
    """Poincaré and dimensional Bochner margins of cos θ on the sphere."""
    rows = []
    for n in resolutions:
        _, spec, measure = make_sphere_reduction(n)
        ctx = OperatorContext(spec, measure)
        u = np.cos(ctx.nodes[..., 0])
        poincare = check_poincare(ctx, u, 1.0, tol=1e-6, certified_k=1.0)
        bochner = check_bochner_pointwise(ctx, u, 1.0, "dimensional", tol=1e-2, certified_k=1.0)
        h = ctx.chart.spacing[0]
        # the first Poincaré margin converges to 1/3, the Bochner one to 0
        rows.append(("sphere-poincare", n, h, abs(poincare.margin - 1.0 / 3.0)))
        rows.append(("sphere-bochner-dimensional", n, h, abs(bochner.margin)))
    return rows


def observed_orders(frame):
    orders = {}
    for study, group in frame.groupby("study"):
        group = group[group["value"] > 0.0]
        if len(group) >= 2:
            slope, _ = np.polyfit(np.log(group["h"]), np.log(group["value"]), 1)
            orders[study] = float(slope)
    return orders


def plot_refinement(csv_path, svg_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot

    frame = pd.read_csv(csv_path)
    fig, ax = matplotlib.pyplot.subplots()
    ax.set_title("error against refinement", fontsize=12)
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.grid(linewidth=0.25)
    for study, group in frame.groupby("study"):
        group = group[group["value"] > 0.0]
        ax.plot(group["h"], group["value"], marker="o", linewidth=1, markersize=4, label=study)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    matplotlib.pyplot.close(fig)


def refinement_study(output, torus_resolutions, sphere_resolutions, plots=True):
    output = Path(output)
    output.mkdir(parents=True, exist_ok=True)
    rows = weak_laplacian_rows(torus_resolutions) + sphere_rows(sphere_resolutions)
    frame = pd.DataFrame(rows, columns=["study", "resolution", "h", "value"])
    csv_path = output / "refinement.csv"
    frame.to_csv(csv_path, index=False, float_format="%.12g")

    for study, order in observed_orders(frame).items():
        logger.log(f"{study}: observed order {order:.2f}")

    if plots:
        try:
            plot_refinement(csv_path, output / "refinement.svg")
        except ImportError:
            logger.log("matplotlib is not available, skipping the plot")
    logger.log(f"Refinement study written to {output}")
    return frame


def main():

    output = "refinement-output"
    refinement_study(
        output,
        torus_resolutions=[32, 64, 128],
        sphere_resolutions=[64, 128, 256, 512],
    )


if __name__ == "__main__":
    main()
