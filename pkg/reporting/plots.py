"""
SVG graphics of scan grids and intensity sweeps.

Figures are built with the object API on the Agg canvas, so nothing here
touches pyplot state. The SVG hash salt is fixed and the date metadata
dropped, which makes the output byte-identical between runs.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from optics.types import PhasePoint
from threepath.exceptions import DataFormatError

from .csv_io import read_grid_csv, read_sweep_csv

logger = logging.getLogger(__name__)

SVG_PARAMS = {"svg.hashsalt": "threepath", "svg.fonttype": "none"}
CONTOUR_LEVELS = 12
FIELD_LABELS = {
    "r_abc_det_cps": r"$R_{ABC}^{det}$ (cps)",
    "kappa_mean": r"$\kappa$",
    "kappa_stderr": r"$\Delta\kappa$",
    "kappa_det_pred": r"$\kappa^{det}$",
}


@dataclass(frozen=True)
class ContourPlot:
    """What was drawn: contour levels (empty for a constant field) and the cross."""

    levels: tuple[float, ...]
    argmax: PhasePoint


def _save(figure: Figure, output: str | Path) -> None:
    FigureCanvasAgg(figure)
    with matplotlib.rc_context(SVG_PARAMS):
        figure.savefig(output, format="svg", metadata={"Date": None})


def render_contour(grid_csv: str | Path, field: str, output: str | Path) -> ContourPlot:
    """
    Draw ``field`` over (phi_C, phi_A), both in units of pi, and mark the
    maximum of the detected three-path rate with a cross.
    """
    grid = read_grid_csv(grid_csv)
    values = grid.field(field)
    intensity = grid.field("r_abc_det_cps")
    i, j = np.unravel_index(int(np.argmax(intensity)), intensity.shape)
    argmax = PhasePoint(float(grid.grid_A[i]), float(grid.grid_C[j]))

    x = grid.grid_C / math.pi
    y = grid.grid_A / math.pi
    figure = Figure(figsize=(6.0, 5.0))
    axes = figure.add_subplot()
    finite = values[np.isfinite(values)]
    levels: tuple[float, ...] = ()
    if finite.size == 0:
        raise DataFormatError(f"{grid_csv}: field {field} has no values")
    if finite.min() == finite.max() or len(x) < 2 or len(y) < 2:
        axes.pcolormesh(
            x, y, np.ma.masked_invalid(values), shading="nearest", cmap="viridis"
        )
    else:
        filled = axes.contourf(x, y, np.ma.masked_invalid(values), CONTOUR_LEVELS, cmap="viridis")
        axes.contour(x, y, np.ma.masked_invalid(values), filled.levels, colors="k", linewidths=0.4)
        figure.colorbar(filled, ax=axes, label=FIELD_LABELS[field])
        levels = tuple(float(level) for level in filled.levels)
    axes.plot(argmax.phi_C / math.pi, argmax.phi_A / math.pi, "x", color="red", markersize=10)
    axes.set_xlabel(r"$\varphi_C$ ($\pi$)")
    axes.set_ylabel(r"$\varphi_A$ ($\pi$)")
    axes.set_title(FIELD_LABELS[field])
    _save(figure, output)
    logger.info("wrote %s contour to %s", field, output)
    return ContourPlot(levels=levels, argmax=argmax)


def render_sweep(sweep_csv: str | Path, output: str | Path) -> None:
    """kappa^det against the detected three-path rate, measured kappa with error bars."""
    table = read_sweep_csv(sweep_csv)
    rate = table["r_abc_det_cps"].to_numpy() / 1e3
    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.add_subplot()
    axes.plot(rate, table["kappa_det"], "-o", label=r"$\kappa^{det}$")
    measured = table["kappa_exp"].notna().to_numpy()
    if measured.any():
        axes.errorbar(
            rate[measured],
            table["kappa_exp"].to_numpy()[measured],
            yerr=table["kappa_stderr"].fillna(0.0).to_numpy()[measured],
            fmt="s",
            capsize=3,
            label=r"$\kappa^{exp}$",
        )
    axes.axhline(0.0, color="grey", linewidth=0.5)
    axes.set_xlabel(r"$R_{ABC}^{det}$ (kcps)")
    axes.set_ylabel(r"$\kappa$")
    axes.legend()
    _save(figure, output)
    logger.info("wrote sweep graphic to %s", output)
