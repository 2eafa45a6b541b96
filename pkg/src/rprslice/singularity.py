"""Singular configurations and tracing of the singular curves in a slice."""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import _pointwise as pw
from .kinematics import (SINGULAR_TOL, Aspect, SlicePose, ZeroLengthLegError, aspect_from_value,
                         packed, torus_delta)
from .model import TWO_PI, ManipulatorGeometry, SliceConfig

log = logging.getLogger(__name__)

EDGE_ROOT_TOL = 1e-10
GRAD_STEP = 1e-6


class ResolutionWarning(UserWarning):
    """RESOLUTION_WARNING: ambiguous marching-squares cells survived refinement."""


class Domain(str, enum.Enum):
    WORKSPACE_SLICE = "WORKSPACE_SLICE"
    JOINT_SLICE = "JOINT_SLICE"


@dataclass
class TracedCurve:
    """Ordered polyline with unit tangents.

    Workspace curves store (theta1, alpha) wrapped to [0, 2pi); use
    :func:`rprslice.kinematics.torus_delta` for differences. Joint-slice curves
    store (rho2, rho3), and sample ``i`` is the image of source sample ``i``.
    """

    id: str
    domain: Domain
    points: np.ndarray
    tangents: np.ndarray
    closed: bool
    source: str | None = None
    speed: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def steps(self) -> np.ndarray:
        """Displacement from each sample to the next (n-1 rows, or n if closed)."""
        nxt = np.roll(self.points, -1, axis=0) if self.closed else self.points[1:]
        cur = self.points if self.closed else self.points[:-1]
        if self.domain is Domain.WORKSPACE_SLICE:
            return torus_delta(nxt, cur)
        return nxt - cur

    def arc_length(self) -> np.ndarray:
        """Cumulative arc length at each sample (starts at 0)."""
        seg = np.linalg.norm(self.steps(), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg[: len(self) - 1])])

    def length(self) -> float:
        return float(np.linalg.norm(self.steps(), axis=1).sum())


def singular_value(g: ManipulatorGeometry, pose: SlicePose) -> float:
    """Signed determinant of the leg lines' normalised line coordinates."""
    _, _, v2x, v2y, v3x, v3y = pw.leg_vectors(packed(g), pose.rho1, pose.theta1, pose.alpha)
    if (v2x == 0 and v2y == 0) or (v3x == 0 and v3y == 0):
        raise ZeroLengthLegError("leg line undefined at zero length")
    return float(pw.singular_value(packed(g), pose.rho1, pose.theta1, pose.alpha))


def aspect_of(g: ManipulatorGeometry, pose: SlicePose, singular_tol: float = SINGULAR_TOL) -> Aspect:
    return aspect_from_value(singular_value(g, pose), singular_tol)


def singular_value_array(geo, rho1, theta, alpha):
    with np.errstate(invalid="ignore", divide="ignore"):
        return pw.singular_value(geo, rho1, np.asarray(theta, float), np.asarray(alpha, float))


def singular_gradient(geo, rho1, theta, alpha, h=GRAD_STEP):
    """Central-difference gradient of the singular value, shape (..., 2)."""
    theta = np.asarray(theta, float)
    alpha = np.asarray(alpha, float)
    gt = (singular_value_array(geo, rho1, theta + h, alpha) - singular_value_array(geo, rho1, theta - h, alpha)) / (2 * h)
    ga = (singular_value_array(geo, rho1, theta, alpha + h) - singular_value_array(geo, rho1, theta, alpha - h)) / (2 * h)
    return np.stack([gt, ga], axis=-1)


def level_tangents(geo, rho1, pts):
    grad = singular_gradient(geo, rho1, pts[:, 0], pts[:, 1])
    t = np.stack([-grad[:, 1], grad[:, 0]], axis=-1)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def project_to_level(geo, rho1, pts, iters=8):
    """Move points onto the zero set along the gradient (Newton in 1-D)."""
    pts = np.array(pts, float)
    for _ in range(iters):
        s = singular_value_array(geo, rho1, pts[:, 0], pts[:, 1])
        grad = singular_gradient(geo, rho1, pts[:, 0], pts[:, 1])
        gg = (grad * grad).sum(axis=1)
        step = np.where(gg > 0, s / np.where(gg > 0, gg, 1.0), 0.0)
        pts = pts - step[:, None] * grad
        if np.all(np.abs(s) < 1e-14):
            break
    return pts


# --------------------------------------------------------------------------
# marching squares on the torus

def _axis(lo, hi, n):
    periodic = hi - lo >= TWO_PI - 1e-12
    if periodic:
        return lo + np.arange(n) * (TWO_PI / n), True
    return np.linspace(lo, hi, n + 1), False


def _edge_roots(geo, rho1, p0, p1, v0, v1):
    """Bisect singular_value along straight edges p0 -> p1 (sign change given)."""
    a = np.zeros(len(p0))
    b = np.ones(len(p0))
    va = v0.copy()
    for _ in range(60):
        m = 0.5 * (a + b)
        pm = p0 + m[:, None] * (p1 - p0)
        vm = singular_value_array(geo, rho1, pm[:, 0], pm[:, 1])
        done = np.abs(vm) < EDGE_ROOT_TOL * 1e-2
        same = (vm >= 0) == (va >= 0)
        a = np.where(same & ~done, m, a)
        va = np.where(same & ~done, vm, va)
        b = np.where(~same & ~done, m, b)
        a = np.where(done, m, a)
        b = np.where(done, m, b)
        if np.all(b - a < 1e-15):
            break
    m = 0.5 * (a + b)
    return p0 + m[:, None] * (p1 - p0)


def _march(geo, rho1, ths, als, pth, pal):
    """Marching squares; returns vertices, segments and ambiguous-cell count."""
    nt, na = len(ths), len(als)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.asarray(_kernels.backend.singular_value_grid(geo, float(rho1), ths, als))
    vals = np.where(np.isfinite(vals), vals, 1e-300)
    pos = vals >= 0
    ct = nt if pth else nt - 1
    ca = na if pal else na - 1

    def corner(i, j):
        # coordinates of corner (i, j) of the cell grid, unwrapped across the seam
        th = ths[i % nt] + (i // nt) * TWO_PI if pth else ths[i]
        al = als[j % na] + (j // na) * TWO_PI if pal else als[j]
        return th, al

    # theta-edges (i,j)-(i+1,j) and alpha-edges (i,j)-(i,j+1)
    ti, tj = np.meshgrid(np.arange(ct), np.arange(na), indexing="ij")
    ai, aj = np.meshgrid(np.arange(nt), np.arange(ca), indexing="ij")
    t_cross = pos[ti % nt, tj] != pos[(ti + 1) % nt, tj]
    a_cross = pos[ai, aj % na] != pos[ai, (aj + 1) % na]

    vert_id = {}
    verts = []

    def add_edges(kind, ii, jj, di, dj):
        if len(ii) == 0:
            return
        p0 = np.stack(corner(ii, jj), axis=-1)
        p1 = np.stack(corner(ii + di, jj + dj), axis=-1)
        v0 = vals[ii % nt, jj % na]
        v1 = vals[(ii + di) % nt, (jj + dj) % na]
        roots = _edge_roots(geo, rho1, p0, p1, v0, v1)
        for k in range(len(ii)):
            vert_id[(kind, int(ii[k]), int(jj[k]))] = len(verts)
            verts.append(roots[k])

    add_edges("T", ti[t_cross], tj[t_cross], 1, 0)
    add_edges("A", ai[a_cross], aj[a_cross], 0, 1)
    verts = np.array(verts).reshape(-1, 2)

    def norm_edge(kind, i, j):
        return (kind, i % nt if pth else i, j % na if pal else j)

    segments = []
    ambiguous = 0
    ci, cj = np.meshgrid(np.arange(ct), np.arange(ca), indexing="ij")
    c00 = pos[ci % nt, cj % na]
    c10 = pos[(ci + 1) % nt, cj % na]
    c11 = pos[(ci + 1) % nt, (cj + 1) % na]
    c01 = pos[ci % nt, (cj + 1) % na]
    active = ~((c00 == c10) & (c10 == c11) & (c11 == c01))
    for i, j in zip(*np.nonzero(active)):
        i = int(i)
        j = int(j)
        edges = []
        # counter-clockwise: bottom, right, top, left
        for kind, ei, ej, a, b in (("T", i, j, c00[i, j], c10[i, j]),
                                   ("A", i + 1, j, c10[i, j], c11[i, j]),
                                   ("T", i, j + 1, c01[i, j], c11[i, j]),
                                   ("A", i, j, c00[i, j], c01[i, j])):
            if a != b:
                edges.append(vert_id[norm_edge(kind, ei, ej)])
        if len(edges) == 2:
            segments.append((edges[0], edges[1]))
            continue
        ambiguous += 1
        th0, al0 = corner(i, j)
        th1, al1 = corner(i + 1, j + 1)
        centre = float(singular_value_array(geo, rho1, 0.5 * (th0 + th1), 0.5 * (al0 + al1)))
        bottom, right, top, left = edges
        if (centre >= 0) == bool(c00[i, j]):
            # centre joins the (0,0) and (1,1) corners: cut off the other two
            segments.append((bottom, right))
            segments.append((top, left))
        else:
            segments.append((left, bottom))
            segments.append((right, top))
    return verts, segments, ambiguous


def _link(nverts, segments):
    adj = [[] for _ in range(nverts)]
    for a, b in segments:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(nverts, dtype=bool)
    chains = []
    # open chains first: start at degree-1 vertices (window boundary)
    starts = [v for v in range(nverts) if len(adj[v]) == 1] + list(range(nverts))
    for s in starts:
        if seen[s] or not adj[s]:
            continue
        chain = [s]
        seen[s] = True
        prev, cur = -1, s
        closed = False
        while True:
            nxt = [v for v in adj[cur] if v != prev and not seen[v]]
            if not nxt:
                closed = len(chain) > 2 and s in adj[cur] and prev != s
                break
            prev, cur = cur, nxt[0]
            seen[cur] = True
            chain.append(cur)
        chains.append((chain, closed))
    return chains


def trace_singular_curves(g: ManipulatorGeometry, slc: SliceConfig) -> list[TracedCurve]:
    """Zero set of the singular value on the (theta1, alpha) slice grid."""
    geo = packed(g)
    n = slc.grid_n
    for attempt in range(2):
        ths, pth = _axis(*slc.theta_range, n)
        als, pal = _axis(*slc.alpha_range, n)
        verts, segments, ambiguous = _march(geo, slc.rho1, ths, als, pth, pal)
        if not ambiguous:
            break
        if attempt == 0:
            log.info("%d ambiguous cells at grid %d; subdividing", ambiguous, n)
            n *= 2
    else:
        warnings.warn(f"{ambiguous} ambiguous cells remain at grid {n} (RESOLUTION_WARNING)",
                      ResolutionWarning, stacklevel=2)
    verts = np.mod(verts, TWO_PI) if len(verts) else verts
    curves = []
    for chain, closed in _link(len(verts), segments):
        if len(chain) < 2:
            continue
        pts = verts[chain]
        # a zero exactly on a grid node is the root of every edge meeting there
        gap = np.linalg.norm(torus_delta(np.roll(pts, -1, axis=0), pts), axis=1)
        keep = gap > 1e-12 if closed else np.append(gap[:-1] > 1e-12, True)
        pts = pts[keep]
        if len(pts) < 2:
            continue
        tan = level_tangents(geo, slc.rho1, pts)
        step = torus_delta(pts[1], pts[0])
        if float(step @ tan[0]) < 0:
            pts = pts[::-1].copy()
            tan = level_tangents(geo, slc.rho1, pts)
        curves.append((pts, tan, closed))
    # deterministic order: by lowest (theta, alpha) sample
    curves.sort(key=lambda c: tuple(c[0][np.lexsort((c[0][:, 1], c[0][:, 0]))[0]]))
    out = []
    for k, (pts, tan, closed) in enumerate(curves):
        if closed:
            # rotate so each closed curve starts at its lexicographically lowest sample
            r = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
            pts = np.roll(pts, -r, axis=0)
            tan = np.roll(tan, -r, axis=0)
        out.append(TracedCurve(f"S{k}", Domain.WORKSPACE_SLICE, pts, tan, closed,
                               meta={"grid_n": n, "rho1": slc.rho1}))
    return out


def joint_jacobians(geo, rho1, pts):
    """(n, 2, 2) array of d(rho2, rho3)/d(theta1, alpha)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        j = pw.joint_jacobian(geo, rho1, pts[:, 0], pts[:, 1])
    return np.stack(j, axis=-1).reshape(-1, 2, 2)


def image_speed(geo, rho1, pts, tangents):
    """Joint-space speed per unit workspace arc length, normalised by |M|."""
    m = joint_jacobians(geo, rho1, pts)
    v = np.einsum("nij,nj->ni", m, tangents)
    return np.linalg.norm(v, axis=1) / np.linalg.norm(m, axis=(1, 2)), v


def map_curve_to_jointspace(g: ManipulatorGeometry, curve: TracedCurve) -> TracedCurve:
    if curve.domain is not Domain.WORKSPACE_SLICE:
        raise ValueError("map_curve_to_jointspace expects a workspace-slice curve")
    geo = packed(g)
    rho1 = curve.meta["rho1"]
    pts = curve.points
    r2, r3 = pw.inverse_kinematics(geo, rho1, pts[:, 0], pts[:, 1])
    img = np.stack([r2, r3], axis=-1)
    speed, v = image_speed(geo, rho1, pts, curve.tangents)
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        tan = np.where(norm > 1e-300, v / norm, np.nan)
    return TracedCurve(f"J{curve.id[1:]}", Domain.JOINT_SLICE, img, tan, curve.closed,
                       source=curve.id, speed=speed, meta=dict(curve.meta))
