"""SVG figures drawn from an atlas directory (never from in-memory results).

Every marked point comes straight from ``points.csv``, so a figure can only
show what the data files contain.
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .atlas import AtlasTables, load_atlas  # noqa: E402

FIGURES = ("jointspace", "workspace", "regions")

STYLE = {
    "svg.hashsalt": "rprslice",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.linewidth": 0.6,
    "lines.linewidth": 0.9,
}

SINGULAR = "black"
ASPECT_COLORS = {"WA1": "#5fb4e6", "WA2": "#e08a2c"}
ROLE_COLORS = {(2, 0): "black", (4, 2): "#5fb4e6", (6, 4): "#c0392b"}
MARKS = {
    "CUSP": dict(marker="^", color="#c0392b", s=28),
    "NODE": dict(marker="s", color="#1f4e9c", s=22),
    "TRIPLE_TANGENCY": dict(marker="o", color="#c0392b", s=40),
    "CHAR_CUSP": dict(marker="o", color="#c0392b", s=10),
    "SINGULAR_CROSSING": dict(marker="o", color="#1f4e9c", s=40),
    "CHAR_CROSSING": dict(marker="o", color="#1f4e9c", s=10),
}


class UnknownFigure(ValueError):
    pass


def _torus_pieces(xy: np.ndarray, closed: bool):
    """Split a polyline wherever it wraps around the torus."""
    if closed and len(xy) > 1:
        xy = np.vstack([xy, xy[:1]])
    if len(xy) < 2:
        return [xy]
    jump = np.abs(np.diff(xy, axis=0)).max(axis=1) > math.pi
    cuts = np.nonzero(jump)[0] + 1
    return np.split(xy, cuts)


def _marks(ax, points, kinds, degrees=False):
    for kind in kinds:
        pts = [p for p in points if p["kind"] == kind]
        if not pts:
            continue
        xy = np.array([[p["x"], p["y"]] for p in pts])
        if degrees:
            xy = np.degrees(xy)
        ax.scatter(xy[:, 0], xy[:, 1], zorder=5, linewidths=0, label=kind.lower().replace("_", " "),
                   **MARKS[kind])


def _segment_colors(tables: AtlasTables, cid: str, n: int):
    color = np.array([SINGULAR] * n, dtype=object)
    for s in tables.segments:
        if s["curve_id"] != cid:
            continue
        c = ROLE_COLORS.get((int(s["count_high"]), int(s["count_low"])), "grey")
        a, b = float(s["start"]), float(s["stop"])
        idx = np.arange(n)
        inside = (idx >= a) & (idx <= b) if a <= b else (idx >= a) | (idx <= b)
        color[inside] = c
    return color


def _jointspace(ax, tables: AtlasTables):
    for cid, c in tables.curves.items():
        if c["domain"] != "JOINT_SLICE":
            continue
        xy = c["xy"]
        col = _segment_colors(tables, cid, len(xy))
        # draw runs of equal colour
        start = 0
        for k in range(1, len(xy) + 1):
            if k == len(xy) or col[k] != col[start]:
                seg = xy[start:min(k + 1, len(xy))]
                ax.plot(seg[:, 0], seg[:, 1], color=col[start])
                start = k
        if c.get("closed") and len(xy) > 1:
            ax.plot(xy[[-1, 0], 0], xy[[-1, 0], 1], color=col[-1])
    _marks(ax, tables.points, ("CUSP", "NODE"))
    ax.set_xlabel("rho2")
    ax.set_ylabel("rho3")


def _workspace(ax, tables: AtlasTables, degrees: bool):
    for c in tables.curves.values():
        if c["domain"] != "WORKSPACE_SLICE":
            continue
        color = SINGULAR if c.get("kind") == "SINGULAR" else ASPECT_COLORS.get(c.get("aspect"), "grey")
        for piece in _torus_pieces(c["xy"], bool(c.get("closed"))):
            p = np.degrees(piece) if degrees else piece
            ax.plot(p[:, 0], p[:, 1], color=color, lw=1.1 if color == SINGULAR else 0.8)
    _marks(ax, tables.points, ("TRIPLE_TANGENCY", "CHAR_CUSP", "SINGULAR_CROSSING", "CHAR_CROSSING"), degrees)
    top = 360.0 if degrees else 2 * math.pi
    ax.set_xlim(0, top)
    ax.set_ylim(0, top)
    unit = " (deg)" if degrees else " (rad)"
    ax.set_xlabel("theta1" + unit)
    ax.set_ylabel("alpha" + unit)


def _regions(ax, tables: AtlasTables):
    cm = tables.countmap
    if len(cm):
        x = np.unique(cm[:, 0])
        y = np.unique(cm[:, 1])
        counts = cm[:, 2].reshape(len(x), len(y))
        dx = x[1] - x[0] if len(x) > 1 else 1.0
        dy = y[1] - y[0] if len(y) > 1 else 1.0
        im = ax.imshow(counts.T, origin="lower", cmap="Greys", vmin=0, vmax=6, interpolation="nearest",
                       extent=(x[0] - dx / 2, x[-1] + dx / 2, y[0] - dy / 2, y[-1] + dy / 2), aspect="auto")
        ax.figure.colorbar(im, ax=ax, label="assembly modes", ticks=[0, 2, 4, 6])
    for c in tables.curves.values():
        if c["domain"] == "JOINT_SLICE":
            ax.plot(c["xy"][:, 0], c["xy"][:, 1], color="#5fb4e6", lw=0.7)
    _marks(ax, tables.points, ("CUSP", "NODE"))
    ax.set_xlabel("rho2")
    ax.set_ylabel("rho3")


def draw(tables: AtlasTables, figure: str, degrees: bool = False):
    """Build the matplotlib figure for ``figure``; the caller owns (and closes) it."""
    if figure not in FIGURES:
        raise UnknownFigure(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        if figure == "jointspace":
            _jointspace(ax, tables)
        elif figure == "workspace":
            _workspace(ax, tables, degrees)
        else:
            _regions(ax, tables)
        rho1 = tables.manifest.get("slice", {}).get("rho1")
        if rho1 is not None:
            ax.set_title(f"{figure}, rho1 = {rho1:g}")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="upper right", fontsize=6, frameon=False)
    return fig


def render(tables: AtlasTables, figure: str, path, degrees: bool = False) -> Path:
    fig = draw(tables, figure, degrees)
    path = Path(path)
    try:
        with plt.rc_context(STYLE):
            fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path


def plot_atlas(out_dir, figure: str, degrees: bool = False) -> Path:
    """Render ``figure`` from the atlas in ``out_dir`` to ``out_dir/<figure>.svg``."""
    if figure not in FIGURES:
        raise UnknownFigure(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    tables = load_atlas(out_dir)
    return render(tables, figure, Path(out_dir) / f"{figure}.svg", degrees)
