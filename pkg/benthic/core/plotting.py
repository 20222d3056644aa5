"""Deterministic SVG line plots and histograms.

Figures are built with the object API (no pyplot global state). Each line
carries the gid `series-<i>` and each histogram bar `bin-<i>`, so the SVG
groups can be located by id.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from pydantic import BaseModel, Field

from .errors import DomainError

logger = logging.getLogger(__name__)

_SVG_RC = {"svg.hashsalt": "benthic", "svg.fonttype": "none", "path.simplify": False}


class PlotKind(str, Enum):
    LINE = "line"
    POINTS = "points"
    BAR = "bar"


class Series(BaseModel):
    """One plotted series; for bars `x` holds the n+1 bin edges."""

    label: str
    x: List[float]
    y: List[float]
    kind: PlotKind = PlotKind.LINE


class PlotStyle(BaseModel):
    title: str = ""
    xlabel: str = "t (h)"
    ylabel: str = "X"
    logy: bool = False
    ylim: Optional[List[float]] = Field(default=None, min_length=2, max_length=2)


def _draw(ax, i: int, s: Series):
    if s.kind == PlotKind.BAR:
        edges = np.asarray(s.x, dtype=float)
        if edges.size != len(s.y) + 1:
            raise DomainError(f"bar series '{s.label}' needs {len(s.y) + 1} edges, got {edges.size}")
        bars = ax.bar(edges[:-1], s.y, width=np.diff(edges), align="edge", label=s.label, edgecolor="black", linewidth=0.3)
        for j, patch in enumerate(bars.patches):
            patch.set_gid(f"bin-{j}")
        return
    if len(s.x) != len(s.y):
        raise DomainError(f"series '{s.label}' has {len(s.x)} x values but {len(s.y)} y values")
    if s.kind == PlotKind.POINTS:
        (line,) = ax.plot(s.x, s.y, linestyle="none", marker="o", markersize=4, label=s.label)
    else:
        (line,) = ax.plot(s.x, s.y, linewidth=1.2, label=s.label)
    line.set_gid(f"series-{i}")


def emit_plot(series: Sequence[Series], style: PlotStyle, path: Union[str, Path]) -> Path:
    """Render `series` to a standalone SVG; identical input gives identical bytes."""
    if not series or any(len(s.y) == 0 for s in series):
        raise DomainError("nothing to plot: empty series")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot(1, 1, 1)
        for i, s in enumerate(series):
            _draw(ax, i, s)
        ax.set_xlabel(style.xlabel)
        ax.set_ylabel(style.ylabel)
        if style.title:
            ax.set_title(style.title)
        if style.logy:
            ax.set_yscale("log")
        if style.ylim is not None:
            ax.set_ylim(*style.ylim)
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    logger.info(f"wrote plot {path}")
    return path
