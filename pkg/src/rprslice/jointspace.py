"""Cusps, nodes, solution-count regions and segment labels in the (rho2, rho3) slice."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import ndimage

from . import _pointwise as pw
from .kinematics import (Aspect, ContinuationError, ContinuationOptions, FKOptions, JointCoords, LinePath, dedupe_angles,
                         SlicePose, aspect_from_value, continue_solutions, forward_kinematics,
                         local_solutions, packed, solution_counts, torus_delta, torus_distance)
from .model import TWO_PI, ManipulatorGeometry
from .singularity import (Domain, TracedCurve, image_speed, joint_jacobians, level_tangents,
                          project_to_level, singular_value_array)

log = logging.getLogger(__name__)

CUSP_TOL = 1e-6
CUSP_EXCLUSION = 1e-3
NODE_ANGLE_MIN = math.radians(1.0)
CLUSTER_RADIUS = 2e-2
TRIPLE_SPREAD = 1e-4


class VerificationFailure(RuntimeError):
    """VERIFICATION_FAILURE: a candidate point failed its FK coalescence check."""


class ProbeFailure(RuntimeError):
    """PROBE_FAILURE: a transversal probe did not see exactly one coalescence."""


@dataclass(frozen=True)
class Suspect:
    """A rejected candidate, kept for reporting."""

    kind: str
    location: tuple[float, float]
    reason: str


# --------------------------------------------------------------------------
# curve parametrisation helpers

class _CurveParam:
    """Fractional-index parametrisation of a workspace curve, projected onto the zero set."""

    def __init__(self, geo, rho1, curve: TracedCurve):
        self.geo = geo
        self.rho1 = rho1
        self.curve = curve
        self.n = len(curve.points)
        steps = np.linalg.norm(curve.steps(), axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(steps)])

    def _wrap(self, s):
        if self.curve.closed:
            return np.mod(s, self.n)
        return np.clip(s, 0.0, self.n - 1.0)

    def raw(self, s):
        s = self._wrap(np.atleast_1d(np.asarray(s, float)))
        i = np.minimum(np.floor(s).astype(int), self.n - 1)
        f = s - i
        p = self.curve.points
        j = (i + 1) % self.n if self.curve.closed else np.minimum(i + 1, self.n - 1)
        return p[i] + f[:, None] * torus_delta(p[j], p[i])

    def point(self, s):
        return np.mod(project_to_level(self.geo, self.rho1, self.raw(s)), TWO_PI)

    def tangent(self, s):
        pts = self.point(s)
        t = level_tangents(self.geo, self.rho1, pts)
        # keep the traced orientation
        s = self._wrap(np.atleast_1d(np.asarray(s, float)))
        ref = self.curve.tangents[np.minimum(np.floor(s).astype(int), self.n - 1)]
        flip = (t * ref).sum(axis=1) < 0
        t[flip] *= -1
        return pts, t

    def speed(self, s):
        pts, t = self.tangent(s)
        return image_speed(self.geo, self.rho1, pts, t)[0]

    def image(self, s):
        pts = self.point(s)
        return np.stack(pw.inverse_kinematics(self.geo, self.rho1, pts[:, 0], pts[:, 1]), axis=-1)

    def arc(self, s) -> float:
        s = float(self._wrap(np.asarray(s, float)))
        i = min(int(s), self.n - 1)
        return float(self.cum[i] + (s - i) * (self.cum[min(i + 1, len(self.cum) - 1)] - self.cum[i]))


def _golden(fn, a, b, tol=1e-10, max_iter=200):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def _ring(center, radius, n=16):
    a = np.linspace(0.0, TWO_PI, n, endpoint=False)
    return center + radius * np.stack([np.cos(a), np.sin(a)], axis=-1)


def _seeds(center, radii=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2)):
    return np.vstack([np.asarray(center, float)[None]] + [_ring(center, r) for r in radii])


def _fk_angles(g, rho1, loc, fk_opts: FKOptions):
    return forward_kinematics(g, JointCoords(rho1, float(loc[0]), float(loc[1])), fk_opts).angles


def _others(angles, centers, radius=CLUSTER_RADIUS):
    """FK solutions farther than ``radius`` from every cluster centre."""
    keep = [a for a in angles if all(torus_distance(a, c) > radius for c in centers)]
    return np.array(keep).reshape(-1, 2)


# --------------------------------------------------------------------------
# cusps

@dataclass
class CuspPoint:
    """Cusp of a joint-slice singular curve (three assembly modes coalesce)."""

    id: str
    location: np.ndarray
    curve_id: str
    source_param: float
    source_index: float
    triple_pose: SlicePose
    aspect: Aspect
    speed: float
    axis: np.ndarray
    triple_spread: float
    distinct_solutions: int
    other_poses: np.ndarray
    label: str = ""


def _cusp_axis(param: _CurveParam, s, h=2e-2):
    """Unit direction pointing into the cusp (second derivative of the image)."""
    j = param.image(np.array([s - h, s, s + h]))
    acc = j[0] + j[2] - 2 * j[1]
    return acc / np.linalg.norm(acc)


def _mp_residual(geo, rho1, r2, r3, th, al):
    ct, st, ca, sa = mpmath.cos(th), mpmath.sin(th), mpmath.cos(al), mpmath.sin(al)
    b1x = geo[0] + rho1 * ct
    b1y = geo[1] + rho1 * st
    v2x = b1x + ca * geo[6] - sa * geo[7] - geo[2]
    v2y = b1y + sa * geo[6] + ca * geo[7] - geo[3]
    v3x = b1x + ca * geo[8] - sa * geo[9] - geo[4]
    v3y = b1y + sa * geo[8] + ca * geo[9] - geo[5]
    f = mpmath.matrix([v2x ** 2 + v2y ** 2 - r2 ** 2, v3x ** 2 + v3y ** 2 - r3 ** 2])
    dbx, dby = -rho1 * st, rho1 * ct
    d2x, d2y = -sa * geo[6] - ca * geo[7], ca * geo[6] - sa * geo[7]
    d3x, d3y = -sa * geo[8] - ca * geo[9], ca * geo[8] - sa * geo[9]
    jac = mpmath.matrix([[2 * (v2x * dbx + v2y * dby), 2 * (v2x * d2x + v2y * d2y)],
                         [2 * (v3x * dbx + v3y * dby), 2 * (v3x * d3x + v3y * d3y)]])
    return f, jac


def _mp_image(geo, rho1, th, al, dps=40):
    """(rho2, rho3) of a double-precision pose, evaluated in extended precision."""
    with mpmath.workdps(dps):
        g = [mpmath.mpf(float(v)) for v in geo]
        zero = mpmath.mpf(0)
        f, _ = _mp_residual(g, mpmath.mpf(float(rho1)), zero, zero, mpmath.mpf(float(th)), mpmath.mpf(float(al)))
        return mpmath.sqrt(f[0]), mpmath.sqrt(f[1])


def precise_roots(geo, rho1, joint23, seeds, dps=40, max_iter=80):
    """Newton in extended precision from each seed; distinct roots in double.

    Clustered roots (a triple root split by a tiny joint offset) sit below
    double-precision resolution of the residual, so they are resolved here.
    """
    found = []
    with mpmath.workdps(dps):
        g = [mpmath.mpf(float(v)) for v in geo]
        r1 = mpmath.mpf(float(rho1))
        # mpf targets keep their extra digits
        r2, r3 = (v if isinstance(v, mpmath.mpf) else mpmath.mpf(float(v)) for v in joint23)
        tol = mpmath.mpf(10) ** (-(dps - 8))
        period = 2 * mpmath.pi
        for seed in np.asarray(seeds, float).reshape(-1, 2):
            x = mpmath.matrix([float(seed[0]), float(seed[1])])
            for _ in range(max_iter):
                f, jac = _mp_residual(g, r1, r2, r3, x[0], x[1])
                try:
                    dx = mpmath.lu_solve(jac, -f)
                except ZeroDivisionError:
                    break
                # wrap in extended precision: a far-off iterate would lose digits in double
                x = x + dx
                for k in range(2):
                    x[k] = x[k] - period * mpmath.floor(x[k] / period)
                if mpmath.norm(dx) < tol:
                    found.append([float(x[0]) % TWO_PI, float(x[1]) % TWO_PI])
                    break
    return dedupe_angles(np.array(found).reshape(-1, 2), 1e-12)


def _triple_check(g, param: _CurveParam, s, offsets=(4e-5, 2e-5, 1e-5)):
    """Resolve the three roots near the cusp pose just inside the wedge.

    The midpoint of the images of s - h and s + h lies strictly between the
    two cusp branches. There the triple root splits into a middle root
    O(h^2) from the cusp pose and two outer roots O(h) away on either side.
    ``offsets`` are workspace distances of s +- h from the cusp pose, so the
    check does not depend on the sampling density.
    """
    pose = param.point(s)[0]
    rate = np.linalg.norm(torus_delta(*param.point(np.array([s + 1e-3, s - 1e-3])))) / 2e-3
    best = None
    for off in offsets:
        h = off / max(rate, 1e-300)
        ends = param.point(np.array([s + h, s - h]))
        # the wedge is only ~off^3 wide, below double resolution of the image
        with mpmath.workdps(40):
            a, b = (_mp_image(param.geo, param.rho1, *e) for e in ends)
            mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        side = torus_delta(*ends)
        normal = np.array([-side[1], side[0]])
        # the outer roots sit near +-0.87 side, the middle one next to the cusp pose
        grid = np.linspace(-1.5, 1.5, 7)
        seeds = pose + grid[:, None, None] * side + grid[None, :, None] * normal
        seeds = seeds.reshape(-1, 2)
        sols = precise_roots(packed(g), param.rho1, mid, seeds)
        near = sols[torus_distance(sols, pose) < 10 * TRIPLE_SPREAD] if len(sols) else sols
        if len(near) == 3:
            d = max(torus_distance(near[a], near[b]) for a in range(3) for b in range(a + 1, 3))
            if best is None or d < best[1]:
                best = (near, d)
            if d < TRIPLE_SPREAD:
                break
    return best


def detect_cusps(g: ManipulatorGeometry, image_curve: TracedCurve, source: TracedCurve,
                 cusp_tol: float = CUSP_TOL, fk_opts: FKOptions = FKOptions(),
                 suspects: list | None = None) -> list[CuspPoint]:
    """Points where the image speed of the projected singular curve vanishes.

    Every strict local minimum of the sampled speed is refined by golden
    section on the curve (re-projected onto the zero set) and accepted when
    the refined speed is below ``cusp_tol`` and a triple root is resolved
    just inside the cusp.
    """
    if image_curve.domain is not Domain.JOINT_SLICE or image_curve.source != source.id:
        raise ValueError("image_curve must be the joint-slice image of source")
    geo = packed(g)
    rho1 = source.meta["rho1"]
    param = _CurveParam(geo, rho1, source)
    sp = image_curve.speed
    n = len(sp)
    idx = np.arange(n)
    if source.closed:
        prev, nxt = sp[(idx - 1) % n], sp[(idx + 1) % n]
        cand = idx[(sp < prev) & (sp <= nxt)]
    else:
        cand = idx[1:-1][(sp[1:-1] < sp[:-2]) & (sp[1:-1] <= sp[2:])]
    out = []
    for i in cand:
        s, v = _golden(lambda x: float(param.speed(x)[0]), i - 1.0, i + 1.0)
        if v >= cusp_tol:
            continue
        pose_xy = param.point(s)[0]
        loc = param.image(s)[0]
        axis = _cusp_axis(param, s)
        pose = SlicePose(pose_xy[0], pose_xy[1], rho1)
        tri = _triple_check(g, param, s)
        if tri is None or tri[1] >= TRIPLE_SPREAD:
            reason = "no triple root resolved" if tri is None else f"triple spread {tri[1]:.3g}"
            log.warning("cusp candidate at %s rejected: %s (VERIFICATION_FAILURE)", loc, reason)
            if suspects is not None:
                suspects.append(Suspect("cusp", tuple(loc), reason))
            continue
        near, spread = tri
        # outer roots of the triple share an aspect, the middle one has the other
        order = np.argsort(torus_distance(near, pose_xy))
        outer = near[order[1:]]
        sv = singular_value_array(geo, rho1, outer[:, 0], outer[:, 1])
        # their singular values are only O(h^2), so classify by sign alone
        aspect = aspect_from_value(float(np.median(sv)), 0.0)
        others = _others(_fk_angles(g, rho1, loc, fk_opts), [pose_xy])
        out.append(CuspPoint("", loc, source.id, param.arc(s), float(np.mod(s, n)), pose, aspect,
                             float(v), axis, float(spread), 1 + len(others), others))
    return out


# --------------------------------------------------------------------------
# nodes

@dataclass
class NodePoint:
    """Transversal crossing of joint-slice singular curves (two folds overlap)."""

    id: str
    location: np.ndarray
    curve_ids: tuple[str, str]
    params: tuple[float, float]
    source_index: tuple[float, float]
    pair_poses: tuple[SlicePose, SlicePose]
    tangents: tuple[np.ndarray, np.ndarray]
    angle: float
    distinct_solutions: int
    other_poses: np.ndarray
    quadrant_counts: tuple[int, int, int, int] = ()
    label: str = ""


def _segment_boxes(pts, closed):
    a = pts if closed else pts[:-1]
    b = np.roll(pts, -1, axis=0) if closed else pts[1:]
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return a, b, lo, hi


def _candidate_pairs(lo, hi):
    """Index pairs (i < j) whose bounding boxes overlap, via a sweep on x."""
    order = np.argsort(lo[:, 0], kind="stable")
    xs = lo[order, 0]
    end = np.searchsorted(xs, hi[order, 0], side="right")
    counts = end - np.arange(len(order)) - 1
    counts = np.maximum(counts, 0)
    first = np.repeat(np.arange(len(order)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    second = first + 1 + offs
    i, j = order[first], order[second]
    ok = (lo[i, 1] <= hi[j, 1]) & (lo[j, 1] <= hi[i, 1])
    i, j = i[ok], j[ok]
    return np.minimum(i, j), np.maximum(i, j)


def _segment_hits(a0, a1, b0, b1):
    """Parameters (u, v) of proper segment intersections, NaN where none."""
    d1 = a1 - a0
    d2 = b1 - b0
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    w = b0 - a0
    with np.errstate(invalid="ignore", divide="ignore"):
        u = (w[:, 0] * d2[:, 1] - w[:, 1] * d2[:, 0]) / den
        v = (w[:, 0] * d1[:, 1] - w[:, 1] * d1[:, 0]) / den
    hit = (den != 0) & (u >= 0) & (u < 1) & (v >= 0) & (v < 1)
    return hit, u, v


def _node_residual(geo, rho1, z):
    p, q = z[:2], z[2:]
    ip = np.array(pw.inverse_kinematics(geo, rho1, p[0], p[1]))
    iq = np.array(pw.inverse_kinematics(geo, rho1, q[0], q[1]))
    return np.array([float(singular_value_array(geo, rho1, p[0], p[1])),
                     float(singular_value_array(geo, rho1, q[0], q[1])),
                     *(ip - iq)])


def refine_node(geo, rho1, p, q, tol=1e-13, max_iter=40):
    """Newton on (sv(P), sv(Q), IK(P) - IK(Q)) = 0; returns (P, Q, residual)."""
    z = np.concatenate([p, q]).astype(float)
    h = 1e-7
    r = _node_residual(geo, rho1, z)
    for _ in range(max_iter):
        if np.abs(r).max() < tol:
            break
        jac = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            jac[:, k] = (_node_residual(geo, rho1, z + e) - _node_residual(geo, rho1, z - e)) / (2 * h)
        try:
            dz = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-4:
            rn = _node_residual(geo, rho1, z + lam * dz)
            if np.abs(rn).max() < np.abs(r).max():
                break
            lam *= 0.5
        z = z + lam * dz
        r = rn
    return np.mod(z[:2], TWO_PI), np.mod(z[2:], TWO_PI), float(np.abs(r).max())


def _image_tangent(geo, rho1, pose):
    t = level_tangents(geo, rho1, pose[None])
    v = np.einsum("nij,nj->ni", joint_jacobians(geo, rho1, pose[None]), t)[0]
    return v / np.linalg.norm(v)


def quadrant_counts(g, rho1, location, u1, u2, eps, samples=1024):
    """Counts at location + eps*(u1+u2), (u2-u1), (-u1-u2), (u1-u2), in angular order."""
    dirs = np.array([u1 + u2, u2 - u1, -u1 - u2, u1 - u2])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = location + eps * dirs
    return tuple(int(c) for c in solution_counts(g, rho1, pts, samples))


def is_node_pattern(counts) -> bool:
    """True when ``counts`` is a cyclic rotation (either direction) of (n, n-2, n-4, n-2)."""
    c = list(counts)
    n = max(c)
    pat = [n, n - 2, n - 4, n - 2]
    return any(c[k:] + c[:k] == pat for k in range(4)) and n - 4 >= 0


def detect_nodes(g: ManipulatorGeometry, image_curves: list[TracedCurve],
                 sources: list[TracedCurve], cusps: list[CuspPoint] = (),
                 cusp_exclusion: float = CUSP_EXCLUSION, node_angle_min: float = NODE_ANGLE_MIN,
                 quadrant_eps: float = 1e-3, fk_opts: FKOptions = FKOptions(),
                 suspects: list | None = None) -> list[NodePoint]:
    """Transversal self- and mutual crossings of the projected singular curves."""
    by_id = {s.id: s for s in sources}
    if not image_curves:
        return []
    rho1 = sources[0].meta["rho1"]
    geo = packed(g)
    params = {c.id: _CurveParam(geo, rho1, by_id[c.source]) for c in image_curves}
    segs = []
    for c in image_curves:
        a, b, lo, hi = _segment_boxes(c.points, c.closed)
        ok = np.all(np.isfinite(lo), axis=1) & np.all(np.isfinite(hi), axis=1)
        for k in np.nonzero(ok)[0]:
            segs.append((c.id, int(k), len(c.points), c.closed))
    if not segs:
        return []
    allp = {c.id: c for c in image_curves}
    a0 = np.array([allp[cid].points[k] for cid, k, _, _ in segs])
    a1 = np.array([allp[cid].points[(k + 1) % n] for cid, k, n, _ in segs])
    lo, hi = np.minimum(a0, a1), np.maximum(a0, a1)
    i, j = _candidate_pairs(lo, hi)
    same = np.array([segs[x][0] == segs[y][0] for x, y in zip(i, j)], dtype=bool)
    k_i = np.array([segs[x][1] for x in i])
    k_j = np.array([segs[y][1] for y in j])
    n_c = np.array([segs[x][2] for x in i])
    gap = np.abs(k_i - k_j)
    gap = np.where(same, np.minimum(gap, n_c - gap), n_c)
    keep = ~(same & (gap <= 1))
    i, j = i[keep], j[keep]
    hit, u, v = _segment_hits(a0[i], a1[i], a0[j], a1[j])
    i, j, u, v = i[hit], j[hit], u[hit], v[hit]

    cusp_at = {}
    for c in cusps:
        cusp_at.setdefault(c.curve_id, []).append(c.source_param)

    found: list[NodePoint] = []
    for x, y, uu, vv in zip(i, j, u, v):
        cid_a, ka = segs[x][0], segs[x][1]
        cid_b, kb = segs[y][0], segs[y][1]
        pa, pb = params[cid_a], params[cid_b]
        sa, sb = ka + uu, kb + vv
        P, Q, res = refine_node(geo, rho1, pa.point(sa)[0], pb.point(sb)[0])
        if res > 1e-9 or torus_distance(P, Q) < 1e-6:
            if suspects is not None:
                suspects.append(Suspect("node", tuple(a0[x]), f"refinement residual {res:.3g}"))
            continue
        loc = np.array(pw.inverse_kinematics(geo, rho1, P[0], P[1]))
        if any(np.linalg.norm(loc - f.location) < 1e-6 for f in found):
            continue
        src_a, src_b = by_id[allp[cid_a].source], by_id[allp[cid_b].source]
        arc_a, arc_b = pa.arc(sa), pb.arc(sb)
        near_cusp = False
        for cid, arc in ((src_a.id, arc_a), (src_b.id, arc_b)):
            for ca in cusp_at.get(cid, []):
                length = params[cid_a].cum[-1] if cid == src_a.id else params[cid_b].cum[-1]
                d = abs(arc - ca)
                d = min(d, length - d)
                if d < max(cusp_exclusion, 3 * length / len(params[cid_a].cum)):
                    near_cusp = True
        if near_cusp:
            log.info("crossing near a cusp at %s skipped", loc)
            continue
        t1 = _image_tangent(geo, rho1, P)
        t2 = _image_tangent(geo, rho1, Q)
        angle = math.acos(min(1.0, abs(float(t1 @ t2))))
        if angle < node_angle_min:
            if suspects is not None:
                suspects.append(Suspect("node", tuple(loc), f"crossing angle {angle:.3g} rad"))
            continue
        # both fold points must be genuine double roots at the node
        joint = JointCoords(rho1, float(loc[0]), float(loc[1]))
        # Newton converges only linearly onto a double root
        sols = local_solutions(g, joint, np.vstack([_seeds(P), _seeds(Q)]), dedupe_tol=1e-6, step_tol=1e-6)
        if not (len(sols) and torus_distance(sols, P).min() < 1e-5 and torus_distance(sols, Q).min() < 1e-5):
            if suspects is not None:
                suspects.append(Suspect("node", tuple(loc), "fold pair not recovered"))
            continue
        others = _others(_fk_angles(g, rho1, loc, fk_opts), [P, Q])
        quads = quadrant_counts(g, rho1, loc, t1, t2, quadrant_eps, fk_opts.samples)
        found.append(NodePoint("", loc, (src_a.id, src_b.id), (arc_a, arc_b), (float(sa), float(sb)),
                               (SlicePose(P[0], P[1], rho1), SlicePose(Q[0], Q[1], rho1)),
                               (t1, t2), angle, 2 + len(others), others, quads))
    return found


def name_points(cusps: list[CuspPoint], nodes: list[NodePoint]):
    """Assign deterministic ids, ordered by location."""
    for k, c in enumerate(sorted(cusps, key=lambda c: (round(c.location[0], 9), round(c.location[1], 9)))):
        c.id = f"CP{k + 1}"
    for k, nd in enumerate(sorted(nodes, key=lambda n: (round(n.location[0], 9), round(n.location[1], 9)))):
        nd.id = f"N{k + 1}"
    cusps.sort(key=lambda c: int(c.id[2:]))
    nodes.sort(key=lambda n: int(n.id[1:]))


# --------------------------------------------------------------------------
# region map

@dataclass
class Region:
    id: int
    count: int
    cells: int
    representative: np.ndarray


@dataclass
class RegionMap:
    """Solution counts on cell centres of a (rho2, rho3) window.

    ``labels`` is -1 on boundary cells (count changes within one cell or odd
    count), otherwise the region index.
    """

    window: tuple[float, float, float, float]
    resolution: int
    counts: np.ndarray
    labels: np.ndarray
    regions: list[Region]

    def cell_of(self, rho23) -> tuple[int, int]:
        r2min, r2max, r3min, r3max = self.window
        n = self.resolution
        i = int((rho23[0] - r2min) / (r2max - r2min) * n)
        j = int((rho23[1] - r3min) / (r3max - r3min) * n)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError("point outside the region-map window")
        return i, j

    def count_at(self, rho23) -> int:
        return int(self.counts[self.cell_of(rho23)])

    def adjacency(self) -> set[tuple[int, int]]:
        """Region pairs separated by a thin boundary band (dilation by two cells)."""
        pairs = set()
        for r in self.regions:
            grown = ndimage.binary_dilation(self.labels == r.id, iterations=2)
            for other in np.unique(self.labels[grown]):
                if other >= 0 and other != r.id:
                    pairs.add((min(r.id, int(other)), max(r.id, int(other))))
        return pairs


def count_solutions_map(g: ManipulatorGeometry, rho1: float, window, resolution: int = 200,
                        samples: int = 1024) -> RegionMap:
    r2min, r2max, r3min, r3max = (float(w) for w in window)
    if not (r2max > r2min and r3max > r3min):
        raise ValueError("window bounds must be ordered")
    n = int(resolution)
    c2 = r2min + (np.arange(n) + 0.5) * (r2max - r2min) / n
    c3 = r3min + (np.arange(n) + 0.5) * (r3max - r3min) / n
    grid = np.stack(np.meshgrid(c2, c3, indexing="ij"), axis=-1).reshape(-1, 2)
    counts = solution_counts(g, rho1, grid, samples).reshape(n, n)
    interior = counts % 2 == 0
    pad = np.pad(counts, 1, mode="edge")
    for di, dj in ((0, 1), (2, 1), (1, 0), (1, 2)):
        interior &= pad[di:di + n, dj:dj + n] == counts
    labels = -np.ones((n, n), dtype=int)
    regions = []
    for value in np.unique(counts[interior]):
        lab, k = ndimage.label(interior & (counts == value))
        for r in range(1, k + 1):
            cells = np.argwhere(lab == r)
            rid = len(regions)
            labels[lab == r] = rid
            mid = cells[len(cells) // 2]
            regions.append(Region(rid, int(value), len(cells), np.array([c2[mid[0]], c3[mid[1]]])))
    return RegionMap((r2min, r2max, r3min, r3max), n, counts, labels, regions)


# --------------------------------------------------------------------------
# segment labels

@dataclass
class SegmentLabel:
    """Arc of a joint-slice singular curve between consecutive cusps/nodes."""

    curve_id: str
    start: float
    stop: float
    counts: tuple[int, int]
    lost_pair: tuple[Aspect, Aspect]
    lost_poses: tuple[SlicePose, SlicePose]
    coalescence: SlicePose
    role: str = ""
    meta: dict = field(default_factory=dict)


def _breakpoints(curve: TracedCurve, cusps, nodes):
    pts = [c.source_index for c in cusps if c.curve_id == curve.source]
    for nd in nodes:
        for cid, s in zip(nd.curve_ids, nd.source_index):
            if cid == curve.source:
                pts.append(s)
    return sorted(pts)


def probe_segment(g, rho1, image: TracedCurve, index: float, source_param: _CurveParam,
                  delta: float = 5e-2, fk_opts: FKOptions = FKOptions(),
                  cont_opts: ContinuationOptions = ContinuationOptions()):
    """Cross the image curve at fractional sample ``index`` from the higher-count side.

    Returns (counts, lost configurations, coalescence pose).
    """
    geo = packed(g)
    p = source_param.point(index)[0]
    loc = source_param.image(index)[0]
    tan = _image_tangent(geo, rho1, p)
    normal = np.array([-tan[1], tan[0]])
    for d in (delta, delta / 4, delta / 16):
        # asymmetric so that the fold is not hit at a round path parameter
        a, b = loc + d * normal, loc - 0.7 * d * normal
        ca, cb = (int(c) for c in solution_counts(g, rho1, np.array([a, b]), fk_opts.samples))
        if abs(ca - cb) != 2:
            continue
        hi_side, lo_side = (a, b) if ca > cb else (b, a)
        start = forward_kinematics(g, JointCoords(rho1, *hi_side), fk_opts)
        try:
            res = continue_solutions(g, LinePath(hi_side, lo_side), start, cont_opts, fk_opts)
        except ContinuationError:
            continue
        ev = res.coalescences
        if len(ev) != 1 or any(e.kind.value == "BIRTH" for e in res.events):
            continue
        i, j = ev[0].branch_ids
        lost = (start.solutions[i], start.solutions[j])
        if torus_distance(ev[0].location.angles, p) > 1e-3:
            continue
        return (max(ca, cb), min(ca, cb)), lost, ev[0].location
    raise ProbeFailure(f"probe at {loc} on {image.id} did not isolate one coalescence")


def label_segments(g: ManipulatorGeometry, image_curves: list[TracedCurve], sources: list[TracedCurve],
                   cusps: list[CuspPoint], nodes: list[NodePoint],
                   fk_opts: FKOptions = FKOptions()) -> list[SegmentLabel]:
    """Split each image curve at cusps and nodes and probe each piece once."""
    by_id = {s.id: s for s in sources}
    out = []
    for img in image_curves:
        src = by_id[img.source]
        rho1 = src.meta["rho1"]
        param = _CurveParam(packed(g), rho1, src)
        n = len(src.points)
        cuts = _breakpoints(img, cusps, nodes)
        if not cuts:
            pieces = [(0.0, float(n))]
        elif src.closed:
            pieces = [(cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1)] + [(cuts[-1], cuts[0] + n)]
        else:
            edges = [0.0] + cuts + [n - 1.0]
            pieces = [(edges[k], edges[k + 1]) for k in range(len(edges) - 1)]
        for a, b in pieces:
            mid = 0.5 * (a + b)
            try:
                counts, lost, where = probe_segment(g, rho1, img, mid, param, fk_opts=fk_opts)
            except ProbeFailure as exc:
                log.warning("%s", exc)
                continue
            out.append(SegmentLabel(img.id, a % n, b % n if src.closed else b, counts,
                                    (lost[0].aspect, lost[1].aspect), (lost[0].pose, lost[1].pose), where,
                                    role=f"{img.id}:{counts[0]}-{counts[1]}"))
    return out
