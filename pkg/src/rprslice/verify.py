"""Workspace images of cusps and nodes, tangency/transversality checks and the census."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .charsurf import CharCurve
from .jointspace import CuspPoint, NodePoint, _CurveParam
from .kinematics import Aspect, JointCoords, local_solutions, packed, torus_delta, torus_distance
from .model import TWO_PI, ManipulatorGeometry
from .singularity import TracedCurve, joint_jacobians, level_tangents, singular_value_array

TANGENCY_TOL = math.radians(2.0)
TRANSVERSAL_MIN = math.radians(5.0)
MATCH_CELLS = 2

CENSUS_KEYS = ("cusps", "nodes", "tangency_points", "char_cusps", "singular_char_crossings",
               "char_char_crossings")


class MissingCurve(RuntimeError):
    """MISSING_CURVE: no traced curve passes close enough to an image point."""


class ImageKind(str, enum.Enum):
    TRIPLE_TANGENCY = "TRIPLE_TANGENCY"
    CHAR_CUSP = "CHAR_CUSP"
    SINGULAR_CROSSING = "SINGULAR_CROSSING"
    CHAR_CROSSING = "CHAR_CROSSING"


@dataclass
class PointImage:
    pose: np.ndarray
    kind: ImageKind
    angle: float | None = None
    fit_angle: float | None = None
    curve_distance: float = 0.0
    aspects: tuple[str, ...] = ()


@dataclass
class CuspImageSet:
    cusp: CuspPoint
    images: list[PointImage]

    @property
    def tangency(self) -> PointImage:
        return next(i for i in self.images if i.kind is ImageKind.TRIPLE_TANGENCY)

    @property
    def tangency_angle(self) -> float:
        return self.tangency.angle


@dataclass
class NodeImageSet:
    node: NodePoint
    images: list[PointImage]

    @property
    def crossing_angles(self) -> list[float]:
        return [i.angle for i in self.images]


def _unit(v):
    return v / np.linalg.norm(v)


def _line_angle(a, b) -> float:
    """Unoriented angle between two directions, in [0, pi/2]."""
    c = abs(float(_unit(a) @ _unit(b)))
    return math.acos(min(1.0, c))


def _nearest(points: np.ndarray, point, k: int):
    d = torus_distance(points, point)
    order = np.argsort(d)[:k]
    return point + torus_delta(points[order], point), d[order]


def _spread_nearest(points: np.ndarray, point, k: int):
    # nearest samples, skipping near-duplicates that carry no direction
    if len(points) < 2:
        return _nearest(points, point, k)[0]
    gaps = torus_distance(points[1:], points[:-1])
    min_sep = 0.25 * np.median(gaps[gaps > 0]) if np.any(gaps > 0) else 0.0
    rel = torus_delta(points, point)
    kept = []
    for i in np.argsort(np.hypot(rel[:, 0], rel[:, 1])):
        if all(np.hypot(*(rel[i] - rel[j])) >= min_sep for j in kept):
            kept.append(i)
            if len(kept) == k:
                break
    return point + rel[kept]


def fit_tangent(points: np.ndarray, point, k: int = 5) -> np.ndarray:
    """Tangent at ``point`` from a quadratic least-squares fit of the ``k`` nearest distinct samples."""
    near = _spread_nearest(np.asarray(points, float).reshape(-1, 2), np.asarray(point, float), k)
    centred = near - near.mean(axis=0)
    _, _, vt = np.linalg.svd(centred)
    d, nrm = vt[0], vt[1]
    u = (near - point) @ d
    v = (near - point) @ nrm
    deg = 2 if len(near) >= 3 else 1
    coef = np.polyfit(u, v, deg)
    slope = np.polyval(np.polyder(coef), 0.0)
    return _unit(d + slope * nrm)


def check_tangency(curve_a, curve_b, point, tol: float = TANGENCY_TOL,
                   match_tol: float | None = None, k: int = 5) -> tuple[float, bool]:
    """Angle between the local tangents of two sampled curves at ``point``.

    ``curve_a``/``curve_b`` are TracedCurves or (n, 2) arrays in the
    workspace slice. Returns (angle in [0, pi/2], angle < tol).
    """
    pa = curve_a.points if isinstance(curve_a, TracedCurve) else np.asarray(curve_a, float)
    pb = curve_b.points if isinstance(curve_b, TracedCurve) else np.asarray(curve_b, float)
    point = np.asarray(point, float)
    if match_tol is not None:
        for p in (pa, pb):
            if len(p) == 0 or torus_distance(p, point).min() > match_tol:
                raise MissingCurve(f"no sample within {match_tol:.3g} of {point}")
    angle = _line_angle(fit_tangent(pa, point, k), fit_tangent(pb, point, k))
    return angle, angle < tol


def _char_points(char_curves: list[CharCurve], aspect: Aspect | None = None) -> np.ndarray:
    pts = [c.curve.points for c in char_curves if aspect is None or c.aspect is aspect]
    return np.vstack(pts) if pts else np.zeros((0, 2))


def _curve_distance(points, pose) -> float:
    return float(torus_distance(points, pose).min()) if len(points) else math.inf


def _local_char_points(g, param: _CurveParam, s0, pose, delta=5e-2, k=6, radius=5e-2):
    """Characteristic points near a cusp pose, from local solves along the singular curve."""
    out = []
    for m in [x for x in range(-k, k + 1) if x]:
        s = s0 + m * delta
        p = param.point(s)[0]
        img = param.image(s)[0]
        off = torus_delta(p, pose)
        seeds = np.vstack([pose + f * off for f in (-1.0, -1.5, -2.0, -2.5, -3.0, 1.5, 2.0, 3.0)])
        sols = local_solutions(g, JointCoords(param.rho1, float(img[0]), float(img[1])), seeds,
                               dedupe_tol=1e-7)
        for r in sols:
            if torus_distance(r, p) > 1e-6 and torus_distance(r, pose) < radius:
                out.append(pose + torus_delta(r, pose))
    return np.array(out).reshape(-1, 2)


@dataclass
class CurveSet:
    """The traced data the checks need; a SliceAtlas satisfies the same interface."""

    geometry: ManipulatorGeometry
    singular_curves: list[TracedCurve]
    char_curves: list[CharCurve]
    cusps: list[CuspPoint]
    nodes: list[NodePoint]
    grid_n: int

    @property
    def match_tol(self) -> float:
        return MATCH_CELLS * TWO_PI / self.grid_n


def cusp_images(g: ManipulatorGeometry, cusp: CuspPoint, atlas) -> CuspImageSet:
    """Classify the workspace images of a cusp and measure tangency at the triple point."""
    geo = packed(g)
    singular_curves, char_curves, match_tol = atlas.singular_curves, atlas.char_curves, atlas.match_tol
    src = next(c for c in singular_curves if c.id == cusp.curve_id)
    rho1 = src.meta["rho1"]
    param = _CurveParam(geo, rho1, src)
    tri = cusp.triple_pose.angles
    t_sing = level_tangents(geo, rho1, tri[None])[0]

    local = _local_char_points(g, param, cusp.source_index, tri)
    if len(local) < 2:
        raise MissingCurve(f"no characteristic points resolved near cusp {cusp.id}")
    # the characteristic curve passes through the triple point: principal direction of the offsets
    off = local - tri
    _, _, vt = np.linalg.svd(np.vstack([off, -off]))
    angle = _line_angle(vt[0], t_sing)

    chars = _char_points(char_curves, cusp.aspect)
    dist = _curve_distance(chars, tri)
    if dist > match_tol:
        raise MissingCurve(f"no characteristic curve within {match_tol:.3g} of cusp {cusp.id} image")
    fit = _line_angle(fit_tangent(chars, tri), fit_tangent(src.points, tri))
    images = [PointImage(tri, ImageKind.TRIPLE_TANGENCY, angle, fit, dist, (cusp.aspect.value,))]

    allc = _char_points(char_curves)
    for r in cusp.other_poses:
        d = _curve_distance(allc, r)
        if d > match_tol:
            raise MissingCurve(f"no characteristic curve within {match_tol:.3g} of {r}")
        sv = float(singular_value_array(geo, rho1, r[0], r[1]))
        images.append(PointImage(np.asarray(r), ImageKind.CHAR_CUSP, None, None, d,
                                 ("WA1" if sv > 0 else "WA2",)))
    return CuspImageSet(cusp, images)


def _kernel(m):
    _, _, vt = np.linalg.svd(m)
    return vt[-1]


def node_images(g: ManipulatorGeometry, node: NodePoint, atlas) -> NodeImageSet:
    """Classify the workspace images of a node and measure the crossing angles."""
    geo = packed(g)
    singular_curves, char_curves, match_tol = atlas.singular_curves, atlas.char_curves, atlas.match_tol
    rho1 = node.pair_poses[0].rho1
    sing = np.vstack([c.points for c in singular_curves])
    images = []
    for pose in node.pair_poses:
        p = pose.angles
        t_sing = level_tangents(geo, rho1, p[None])[0]
        # the characteristic curve through a fold point is tangent to the kernel of the slice map
        t_char = _kernel(joint_jacobians(geo, rho1, p[None])[0])
        angle = _line_angle(t_sing, t_char)
        aspects = []
        for asp in (Aspect.WA1, Aspect.WA2):
            if _curve_distance(_char_points(char_curves, asp), p) <= match_tol:
                aspects.append(asp.value)
        chars = _char_points(char_curves)
        d = _curve_distance(chars, p)
        if d > match_tol:
            raise MissingCurve(f"no characteristic curve within {match_tol:.3g} of node {node.id} image")
        fit = _line_angle(fit_tangent(chars, p), fit_tangent(sing, p))
        images.append(PointImage(p, ImageKind.SINGULAR_CROSSING, angle, fit, d, tuple(aspects)))
    u1, u2 = node.tangents
    allc = _char_points(char_curves)
    for r in node.other_poses:
        m = joint_jacobians(geo, rho1, np.asarray(r)[None])[0]
        a = np.linalg.solve(m, u1)
        b = np.linalg.solve(m, u2)
        d = _curve_distance(allc, r)
        if d > match_tol:
            raise MissingCurve(f"no characteristic curve within {match_tol:.3g} of {r}")
        sv = float(singular_value_array(geo, rho1, r[0], r[1]))
        images.append(PointImage(np.asarray(r), ImageKind.CHAR_CROSSING, _line_angle(a, b), None, d,
                                 ("WA1" if sv > 0 else "WA2",)))
    return NodeImageSet(node, images)


@dataclass
class VerificationReport:
    counts: dict[str, int]
    expected: dict[str, int] | None
    cusp_sets: list[CuspImageSet]
    node_sets: list[NodeImageSet]
    failures: list[str] = field(default_factory=list)
    tolerances: dict[str, float] = field(default_factory=dict)

    @property
    def matches(self) -> dict[str, bool]:
        if self.expected is None:
            return {}
        return {k: self.counts.get(k) == v for k, v in self.expected.items()}

    @property
    def passed(self) -> bool:
        return not self.failures and all(self.matches.values())

    def lines(self) -> list[str]:
        out = []
        for k in CENSUS_KEYS:
            exp = "" if self.expected is None else f" (expected {self.expected.get(k)})"
            out.append(f"{k}: {self.counts.get(k, 0)}{exp}")
        out += [f"failure: {f}" for f in self.failures]
        return out


REFERENCE_CENSUS = {"cusps": 6, "nodes": 6, "tangency_points": 6, "char_cusps": 8,
                "singular_char_crossings": 12, "char_char_crossings": 6}


def default_census(g: ManipulatorGeometry, rho1: float) -> dict[str, int] | None:
    """Expected counts: known only for the reference geometry at rho1 = 17."""
    from .model import reference_geometry
    if g == reference_geometry() and abs(rho1 - 17.0) < 1e-12:
        return dict(REFERENCE_CENSUS)
    return None


def verify_census(atlas, expected: dict[str, int] | None = None, tangency_tol: float = TANGENCY_TOL,
                  transversal_min: float = TRANSVERSAL_MIN) -> VerificationReport:
    """Aggregate cusp and node image sets into the census report.

    ``expected`` defaults to the reference counts when the atlas is the
    reference geometry at rho1 = 17, otherwise no comparison is made.
    Mismatches and missing curves become report entries, never exceptions.
    """
    g = atlas.geometry
    if expected is None and atlas.singular_curves:
        expected = default_census(g, atlas.singular_curves[0].meta["rho1"])
    failures = []
    cusp_sets, node_sets = [], []
    for c in atlas.cusps:
        try:
            cusp_sets.append(cusp_images(g, c, atlas))
        except MissingCurve as exc:
            failures.append(f"{c.id}: {exc}")
    for n in atlas.nodes:
        try:
            node_sets.append(node_images(g, n, atlas))
        except MissingCurve as exc:
            failures.append(f"{n.id}: {exc}")
    tang = [s.tangency for s in cusp_sets]
    ccusp = [i for s in cusp_sets for i in s.images if i.kind is ImageKind.CHAR_CUSP]
    sc = [i for s in node_sets for i in s.images if i.kind is ImageKind.SINGULAR_CROSSING]
    cc = [i for s in node_sets for i in s.images if i.kind is ImageKind.CHAR_CROSSING]
    for i in tang:
        if not i.angle < tangency_tol:
            failures.append(f"tangency angle {math.degrees(i.angle):.3f} deg at {i.pose}")
    for i in sc + cc:
        if not i.angle > transversal_min:
            failures.append(f"crossing angle {math.degrees(i.angle):.3f} deg at {i.pose}")
    for i in sc:
        if len(i.aspects) != 2:
            failures.append(f"singular crossing at {i.pose} sees aspects {i.aspects}")
    counts = {
        "cusps": len(atlas.cusps),
        "nodes": len(atlas.nodes),
        "tangency_points": sum(i.angle < tangency_tol for i in tang),
        "char_cusps": len(ccusp),
        "singular_char_crossings": sum(i.angle > transversal_min for i in sc),
        "char_char_crossings": sum(i.angle > transversal_min for i in cc),
    }
    tol = {"tangency_tol": tangency_tol, "transversal_min": transversal_min, "match_tol": atlas.match_tol}
    return VerificationReport(counts, expected, cusp_sets, node_sets, failures, tol)
