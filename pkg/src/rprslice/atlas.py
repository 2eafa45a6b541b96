"""Full slice pipeline and the on-disk atlas (CSV tables plus a JSON manifest).

Files written by :func:`save_atlas`:

``curves.csv``
    ``id, domain, x, y, tx, ty``; one row per sample, in sample order.
    Workspace rows are (theta1, alpha) in radians, joint rows (rho2, rho3).
``points.csv``
    ``id, kind, x, y, angle``; cusps and nodes in the joint slice, their
    images in the workspace slice. ``angle`` is in radians, empty if none.
``segments.csv``
    ``curve_id, start, stop, count_high, count_low, lost, role``.
``regions.csv``
    ``id, domain, aspect, count, x, y, cells``.
``countmap.csv``
    ``rho2, rho3, count`` on the cell centres of the region-map window.
``manifest.json``
    tool version, configuration hash and text, slice, tolerances, census,
    per-curve metadata and a checksum of every table.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import jointspace as js
from .charsurf import (LINK_SLACK, SOURCE_EXCLUSION, BasicComponent, CharCurve, LinkBreak,
                       RegionDecomposition, basic_components, characteristic_curves,
                       decompose_basic_regions, workspace_grid)
from .kinematics import (DEDUPE_TOL, NEWTON_TOL, SINGULAR_TOL, Aspect, FKOptions)
from .model import TWO_PI, Config
from .singularity import TracedCurve, map_curve_to_jointspace, trace_singular_curves
from .verify import MATCH_CELLS, TANGENCY_TOL, TRANSVERSAL_MIN, ImageKind, VerificationReport, verify_census

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TABLES = ("curves.csv", "points.csv", "segments.csv", "regions.csv", "countmap.csv")


@dataclass
class SliceAtlas:
    config: Config
    singular_curves: list[TracedCurve]
    joint_curves: list[TracedCurve]
    cusps: list[js.CuspPoint]
    nodes: list[js.NodePoint]
    segments: list[js.SegmentLabel]
    region_map: js.RegionMap | None
    char_curves: list[CharCurve]
    link_breaks: list[LinkBreak]
    decompositions: dict[Aspect, RegionDecomposition]
    components: dict[Aspect, list[BasicComponent]]
    report: VerificationReport | None = None
    suspects: list[js.Suspect] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def geometry(self):
        return self.config.geometry

    @property
    def grid_n(self) -> int:
        return self.config.slice.grid_n

    @property
    def match_tol(self) -> float:
        return MATCH_CELLS * TWO_PI / self.grid_n


def default_window(joint_curves: list[TracedCurve], pad: float = 0.05):
    """Bounding box of the joint-slice singular curves, padded, clipped at zero."""
    if not joint_curves:
        return (0.0, 1.0, 0.0, 1.0)
    pts = np.vstack([c.points for c in joint_curves])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-6)
    lo = np.maximum(lo - pad * span, 0.0)
    hi = hi + pad * span
    return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


def tolerances() -> dict[str, float]:
    return {
        "dedupe_tol": DEDUPE_TOL, "newton_tol": NEWTON_TOL, "singular_tol": SINGULAR_TOL,
        "cusp_tol": js.CUSP_TOL, "cusp_exclusion": js.CUSP_EXCLUSION,
        "node_angle_min": js.NODE_ANGLE_MIN, "triple_spread": js.TRIPLE_SPREAD,
        "source_exclusion": SOURCE_EXCLUSION, "link_slack": LINK_SLACK,
        "tangency_tol": TANGENCY_TOL, "transversal_min": TRANSVERSAL_MIN, "match_cells": MATCH_CELLS,
    }


def analyze(config: Config, window=None, region_resolution: int = 200, region_grid: int = 192,
            fk_opts: FKOptions = FKOptions(), verify: bool = True, regions: bool = True,
            expected: dict[str, int] | None = None) -> SliceAtlas:
    """Trace, project, find cusps/nodes, label, build regions and characteristic curves, verify.

    ``regions=False`` skips the joint-space count map and the basic-region
    decomposition, which the census does not need.
    """
    g, slc = config.geometry, config.slice
    suspects: list[js.Suspect] = []
    sing = trace_singular_curves(g, slc)
    joint = [map_curve_to_jointspace(g, c) for c in sing]
    log.info("%d singular curve(s) traced", len(sing))
    cusps = [c for j, s in zip(joint, sing) for c in js.detect_cusps(g, j, s, fk_opts=fk_opts, suspects=suspects)]
    nodes = js.detect_nodes(g, joint, sing, cusps, fk_opts=fk_opts, suspects=suspects)
    js.name_points(cusps, nodes)
    log.info("%d cusp(s), %d node(s)", len(cusps), len(nodes))
    segments = js.label_segments(g, joint, sing, cusps, nodes, fk_opts)
    win = tuple(window) if window is not None else default_window(joint)
    region_map = None
    if regions:
        region_map = js.count_solutions_map(g, slc.rho1, win, region_resolution, fk_opts.samples)

    cache: dict = {}
    breaks: list[LinkBreak] = []
    chars = []
    for asp in (Aspect.WA1, Aspect.WA2):
        chars += characteristic_curves(g, slc, sing, asp, fk_opts, breaks=breaks, _cache=cache)
    decomp, comps = {}, {}
    if regions:
        grid = workspace_grid(g, slc, region_grid, fk_opts.samples)
        for asp in (Aspect.WA1, Aspect.WA2):
            decomp[asp] = decompose_basic_regions(g, slc, asp, chars, sing, grid=grid)
            comps[asp] = basic_components(g, decomp[asp])

    atlas = SliceAtlas(config, sing, joint, cusps, nodes, segments, region_map, chars, breaks,
                       decomp, comps, None, suspects)
    atlas.provenance = {
        "tool_version": __version__,
        "format_version": FORMAT_VERSION,
        "config_hash": config.text_hash,
        "tolerances": tolerances(),
        "region_resolution": int(region_resolution),
        "region_grid": int(region_grid),
        "fk_samples": int(fk_opts.samples),
        "window": list(win),
    }
    if verify:
        atlas.report = verify_census(atlas, expected)
    return atlas


# --------------------------------------------------------------------------
# persistence

def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _write(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _curve_rows(atlas: SliceAtlas):
    for c in atlas.singular_curves + atlas.joint_curves + [ch.curve for ch in atlas.char_curves]:
        for p, t in zip(c.points, c.tangents):
            yield [c.id, c.domain.value, _num(p[0]), _num(p[1]), _num(t[0]), _num(t[1])]


def _point_rows(atlas: SliceAtlas):
    for c in atlas.cusps:
        yield [c.id, "CUSP", _num(c.location[0]), _num(c.location[1]), ""]
    for n in atlas.nodes:
        yield [n.id, "NODE", _num(n.location[0]), _num(n.location[1]), _num(n.angle)]
    if atlas.report is None:
        return
    for s in atlas.report.cusp_sets:
        k = 0
        for im in s.images:
            if im.kind is ImageKind.TRIPLE_TANGENCY:
                pid = f"{s.cusp.id}/T"
            else:
                k += 1
                pid = f"{s.cusp.id}/C{k}"
            yield [pid, im.kind.value, _num(im.pose[0]), _num(im.pose[1]), _num(im.angle)]
    for s in atlas.report.node_sets:
        ks = kc = 0
        for im in s.images:
            if im.kind is ImageKind.SINGULAR_CROSSING:
                ks += 1
                pid = f"{s.node.id}/S{ks}"
            else:
                kc += 1
                pid = f"{s.node.id}/X{kc}"
            yield [pid, im.kind.value, _num(im.pose[0]), _num(im.pose[1]), _num(im.angle)]


def _segment_rows(atlas: SliceAtlas):
    for s in atlas.segments:
        yield [s.curve_id, _num(s.start), _num(s.stop), s.counts[0], s.counts[1],
               "+".join(a.value for a in s.lost_pair), s.role]


def _region_rows(atlas: SliceAtlas):
    if atlas.region_map is not None:
        for r in atlas.region_map.regions:
            yield [f"Q{r.id + 1}", "JOINT_SLICE", "", r.count, _num(r.representative[0]),
                   _num(r.representative[1]), r.cells]
    for asp in (Aspect.WA1, Aspect.WA2):
        if asp not in atlas.decompositions:
            continue
        for r in atlas.decompositions[asp].regions:
            yield [r.id, "WORKSPACE_SLICE", asp.value, r.count, _num(r.representative.theta1),
                   _num(r.representative.alpha), r.size]


def _countmap_rows(atlas: SliceAtlas):
    m = atlas.region_map
    if m is None:
        return
    r2min, r2max, r3min, r3max = m.window
    n = m.resolution
    c2 = r2min + (np.arange(n) + 0.5) * (r2max - r2min) / n
    c3 = r3min + (np.arange(n) + 0.5) * (r3max - r3min) / n
    for i in range(n):
        for j in range(n):
            yield [_num(c2[i]), _num(c3[j]), int(m.counts[i, j])]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_atlas(atlas: SliceAtlas, out_dir) -> Path:
    """Write the atlas tables and manifest; identical inputs give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "curves.csv", ["id", "domain", "x", "y", "tx", "ty"], _curve_rows(atlas))
    _write(out / "points.csv", ["id", "kind", "x", "y", "angle"], _point_rows(atlas))
    _write(out / "segments.csv", ["curve_id", "start", "stop", "count_high", "count_low", "lost", "role"],
           _segment_rows(atlas))
    _write(out / "regions.csv", ["id", "domain", "aspect", "count", "x", "y", "cells"], _region_rows(atlas))
    _write(out / "countmap.csv", ["rho2", "rho3", "count"], _countmap_rows(atlas))

    curves = {}
    for c in atlas.singular_curves:
        curves[c.id] = {"domain": c.domain.value, "kind": "SINGULAR", "closed": c.closed}
    for c in atlas.joint_curves:
        curves[c.id] = {"domain": c.domain.value, "kind": "SINGULAR_PROJECTION", "closed": c.closed,
                        "source": c.source}
    for ch in atlas.char_curves:
        curves[ch.id] = {"domain": ch.curve.domain.value, "kind": ch.kind.value, "closed": ch.curve.closed,
                         "source": ch.source_curve, "aspect": ch.aspect.value}
    report = None
    if atlas.report is not None:
        report = {"counts": atlas.report.counts, "expected": atlas.report.expected,
                  "passed": atlas.report.passed, "failures": atlas.report.failures,
                  "tolerances": atlas.report.tolerances}
    slc = atlas.config.slice
    manifest = {
        **atlas.provenance,
        "config_text": atlas.config.text,
        "slice": {"rho1": slc.rho1, "grid_n": slc.grid_n, "theta_range": list(slc.theta_range),
                  "alpha_range": list(slc.alpha_range)},
        "curves": curves,
        "suspects": [{"kind": s.kind, "location": list(s.location), "reason": s.reason}
                     for s in atlas.suspects],
        "census": report,
        "tables": {name: _sha256(out / name) for name in TABLES},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


@dataclass
class AtlasTables:
    """An atlas read back from disk: just the tables, for plotting and checks."""

    manifest: dict
    curves: dict[str, dict]
    points: list[dict]
    segments: list[dict]
    regions: list[dict]
    countmap: np.ndarray


def _read(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_atlas(out_dir) -> AtlasTables:
    src = Path(out_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    curves: dict[str, dict] = {}
    for row in _read(src / "curves.csv"):
        c = curves.setdefault(row["id"], {"domain": row["domain"], "xy": [], "t": []})
        c["xy"].append((float(row["x"]), float(row["y"])))
        c["t"].append((float(row["tx"]), float(row["ty"])))
    for cid, c in curves.items():
        c["xy"] = np.array(c["xy"])
        c["t"] = np.array(c["t"])
        c.update(manifest["curves"].get(cid, {}))
    points = _read(src / "points.csv")
    for p in points:
        p["x"], p["y"] = float(p["x"]), float(p["y"])
        p["angle"] = float(p["angle"]) if p["angle"] else None
    cm = _read(src / "countmap.csv")
    countmap = np.array([[float(r["rho2"]), float(r["rho3"]), float(r["count"])] for r in cm]).reshape(-1, 3)
    return AtlasTables(manifest, curves, points, _read(src / "segments.csv"), _read(src / "regions.csv"),
                       countmap)
