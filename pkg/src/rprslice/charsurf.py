"""Characteristic curves, basic regions and basic components of each aspect."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _pointwise as pw
from .jointspace import _CurveParam
from .kinematics import (Aspect, FKOptions, JointCoords, SlicePose, forward_kinematics,
                         forward_kinematics_batch, local_solutions, packed, solution_counts,
                         torus_distance)
from .model import ManipulatorGeometry, SliceConfig
from .singularity import Domain, TracedCurve, joint_jacobians, singular_value_array

log = logging.getLogger(__name__)

SOURCE_EXCLUSION = 1e-3
LINK_SLACK = 2e-3
END_LEVELS = 32
END_SPANS = 4


class CurveKind(str, enum.Enum):
    SINGULAR_IMAGE = "SINGULAR_IMAGE"
    NONSINGULAR_IMAGE = "NONSINGULAR_IMAGE"


@dataclass
class CharCurve:
    """Workspace preimage of a projected singular curve, inside one aspect.

    ``source_index[k]`` is the (fractional) sample index of ``source_curve``
    whose joint image sample ``k`` shares.
    """

    curve: TracedCurve
    aspect: Aspect
    kind: CurveKind
    source_curve: str
    source_index: np.ndarray

    @property
    def id(self) -> str:
        return self.curve.id


@dataclass(frozen=True)
class LinkBreak:
    """LINK_BREAK: a characteristic chain ends (solution count changes)."""

    curve_id: str
    source_curve: str
    source_index: float
    pose: tuple[float, float]


def _aspect_sign(aspect: Aspect) -> float:
    if aspect is Aspect.WA1:
        return 1.0
    if aspect is Aspect.WA2:
        return -1.0
    raise ValueError("aspect must be WA1 or WA2")


def characteristic_points(g: ManipulatorGeometry, source: TracedCurve, fk_opts: FKOptions = FKOptions(),
                          exclusion: float = SOURCE_EXCLUSION):
    """Per sample of ``source``: the nonsingular preimages of its joint image."""
    geo = packed(g)
    rho1 = source.meta["rho1"]
    pts = source.points
    img = np.stack(pw.inverse_kinematics(geo, rho1, pts[:, 0], pts[:, 1]), axis=-1)
    sols = forward_kinematics_batch(g, rho1, img, fk_opts)
    out = []
    for p, s in zip(pts, sols):
        if len(s):
            s = s[torus_distance(s, p) > exclusion]
        if len(s):
            sv = singular_value_array(geo, rho1, s[:, 0], s[:, 1])
            s = s[np.abs(sv) > fk_opts.singular_tol]
        out.append(s)
    return out, img


def _link_chains(geo, rho1, source: TracedCurve, cand, img):
    """Nearest-prediction linking of candidate points between consecutive samples."""
    n = len(cand)
    nxt = {}
    prv = {}
    last = n if source.closed else n - 1
    for i in range(last):
        j = (i + 1) % n
        a, b = cand[i], cand[j]
        if len(a) == 0 or len(b) == 0:
            continue
        dj = img[j] - img[i]
        m = joint_jacobians(geo, rho1, a)
        try:
            step = np.linalg.solve(m, np.broadcast_to(dj, (len(a), 2))[..., None])[..., 0]
        except np.linalg.LinAlgError:
            continue
        pred = a + step
        d = np.array([[torus_distance(pp, q) for q in b] for pp in pred])
        # near a fold the point moves like sqrt(s), so the linear prediction overshoots
        tol = 0.75 * np.linalg.norm(step, axis=1) + LINK_SLACK
        used = set()
        for flat in np.argsort(d, axis=None):
            ka, kb = np.unravel_index(flat, d.shape)
            if d[ka, kb] > tol[ka]:
                break
            if (i, ka) in nxt or kb in used:
                continue
            nxt[(i, int(ka))] = (j, int(kb))
            prv[(j, int(kb))] = (i, int(ka))
            used.add(kb)
    chains = []
    seen = set()
    nodes = [(i, k) for i in range(n) for k in range(len(cand[i]))]
    for start in nodes:
        if start in seen or start in prv:
            continue
        chain = [start]
        seen.add(start)
        while chain[-1] in nxt and nxt[chain[-1]] not in seen:
            chain.append(nxt[chain[-1]])
            seen.add(chain[-1])
        chains.append((chain, False))
    for start in nodes:
        if start in seen:
            continue
        chain = [start]
        seen.add(start)
        while nxt.get(chain[-1]) is not None and nxt[chain[-1]] not in seen:
            chain.append(nxt[chain[-1]])
            seen.add(chain[-1])
        chains.append((chain, True))
    return chains


def _extend_end(g, param: _CurveParam, s0: float, direction: int, pts: np.ndarray, sign: float,
                fk_opts: FKOptions, exclusion: float, levels: int = END_LEVELS, max_spans: int = END_SPANS):
    """Follow a chain end towards the parameter where its root disappears.

    Steps in the source parameter past the last linked sample, doubling
    after a success and halving after a miss, for at most ``max_spans``
    samples. Near a fold the root converges like sqrt(s), so without this
    the last sample can sit far from the fold limit.
    """
    geo = packed(g)
    state = [pts[-1], param.image(s0)[0]]

    def attempt(s):
        cur, img_cur = state
        src = param.point(s)[0]
        img = param.image(s)[0]
        step = np.linalg.solve(joint_jacobians(geo, param.rho1, cur[None])[0], img - img_cur)
        seeds = np.vstack([cur + f * step for f in (0.0, 0.5, 1.0)])
        sols = local_solutions(g, JointCoords(param.rho1, float(img[0]), float(img[1])), seeds,
                               tol=fk_opts.newton_tol)
        if not len(sols):
            return None
        sv = singular_value_array(geo, param.rho1, sols[:, 0], sols[:, 1])
        ok = ((sv * sign > fk_opts.singular_tol) & (torus_distance(sols, src) > exclusion)
              & (torus_distance(sols, cur + step) < 0.75 * np.linalg.norm(step) + LINK_SLACK))
        if not ok.any():
            return None
        cand = sols[ok]
        best = cand[np.argmin(torus_distance(cand, cur + step))]
        state[:] = [best, img]
        return best

    out_s, out_p = [], []
    start, h = s0, 1.0
    # adaptive steps: grow after a success, halve after a miss
    while h >= 2.0 ** -levels and abs(s0 - start) < max_spans:
        s = s0 + direction * h
        best = attempt(s)
        if best is None:
            h *= 0.5
            continue
        out_s.append(s)
        out_p.append(best)
        s0 = s
        h = min(1.0, 2.0 * h)
    return np.array(out_s), np.array(out_p).reshape(-1, 2)


def char_tangents(geo, rho1, pts, src_pts, src_tan):
    """Tangents of characteristic points: M(p)^-1 M(source) t_source."""
    v = np.einsum("nij,nj->ni", joint_jacobians(geo, rho1, src_pts), src_tan)
    m = joint_jacobians(geo, rho1, pts)
    t = np.linalg.solve(m, v[..., None])[..., 0]
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def characteristic_curves(g: ManipulatorGeometry, slc: SliceConfig, singular_curves: list[TracedCurve],
                          aspect: Aspect, fk_opts: FKOptions = FKOptions(), min_samples: int = 2,
                          breaks: list | None = None, _cache: dict | None = None) -> list[CharCurve]:
    """Nonsingular preimages of the projected singular curves lying in ``aspect``."""
    sign = _aspect_sign(aspect)
    geo = packed(g)
    rho1 = slc.rho1
    out = []
    for src in singular_curves:
        key = src.id
        if _cache is not None and key in _cache:
            cand, img = _cache[key]
        else:
            cand, img = characteristic_points(g, src, fk_opts)
            if _cache is not None:
                _cache[key] = (cand, img)
        kept = []
        for s in cand:
            if len(s):
                sv = singular_value_array(geo, rho1, s[:, 0], s[:, 1])
                s = s[sv * sign > 0]
            kept.append(s)
        for chain, closed in _link_chains(geo, rho1, src, kept, img):
            if len(chain) < min_samples:
                continue
            idx = np.array([i for i, _ in chain], dtype=float)
            pts = np.array([kept[i][k] for i, k in chain])
            if not closed:
                param = _CurveParam(geo, rho1, src)
                s_b, p_b = _extend_end(g, param, idx[0], -1, pts[::-1], sign, fk_opts, SOURCE_EXCLUSION)
                s_f, p_f = _extend_end(g, param, idx[-1], 1, pts, sign, fk_opts, SOURCE_EXCLUSION)
                idx = np.concatenate([s_b[::-1], idx, s_f])
                pts = np.vstack([p_b[::-1], pts, p_f])
            src_pts, src_tan = _CurveParam(geo, rho1, src).tangent(idx)
            tan = char_tangents(geo, rho1, pts, src_pts, src_tan)
            cid = f"C{aspect.value[-1]}.{len(out)}"
            curve = TracedCurve(cid, Domain.WORKSPACE_SLICE, pts, tan, closed, source=src.id,
                                meta={"rho1": rho1, "aspect": aspect.value})
            out.append(CharCurve(curve, aspect, CurveKind.NONSINGULAR_IMAGE, src.id, idx))
            if breaks is not None and not closed:
                for end in (0, -1):
                    breaks.append(LinkBreak(cid, src.id, float(idx[end]), tuple(pts[end])))
    return out


# --------------------------------------------------------------------------
# basic regions

@dataclass
class WorkspaceGrid:
    """Cell-centre labels on the (theta1, alpha) slice: aspect sign and joint-image count."""

    n: int
    thetas: np.ndarray
    alphas: np.ndarray
    sign: np.ndarray
    counts: np.ndarray
    periodic: bool

    def cell_of(self, pose) -> tuple[int, int]:
        th, al = float(pose[0]), float(pose[1])
        dt = self.thetas[1] - self.thetas[0]
        da = self.alphas[1] - self.alphas[0]
        i = int(np.floor((th - self.thetas[0]) / dt + 0.5))
        j = int(np.floor((al - self.alphas[0]) / da + 0.5))
        if self.periodic:
            return i % self.n, j % self.n
        return min(max(i, 0), self.n - 1), min(max(j, 0), self.n - 1)


def workspace_grid(g: ManipulatorGeometry, slc: SliceConfig, n: int = 192,
                   samples: int = 1024) -> WorkspaceGrid:
    t0, t1 = slc.theta_range
    a0, a1 = slc.alpha_range
    ths = t0 + (np.arange(n) + 0.5) * (t1 - t0) / n
    als = a0 + (np.arange(n) + 0.5) * (a1 - a0) / n
    geo = packed(g)
    T, A = np.meshgrid(ths, als, indexing="ij")
    sv = singular_value_array(geo, slc.rho1, T, A)
    img = np.stack(pw.inverse_kinematics(geo, slc.rho1, T.ravel(), A.ravel()), axis=-1)
    counts = solution_counts(g, slc.rho1, img, samples).reshape(n, n)
    return WorkspaceGrid(n, ths, als, np.sign(sv), counts, slc.full_torus)


def _rasterize(grid: WorkspaceGrid, curves: list[TracedCurve]) -> np.ndarray:
    wall = np.zeros((grid.n, grid.n), dtype=bool)
    span = np.array([grid.thetas[-1] - grid.thetas[0], grid.alphas[-1] - grid.alphas[0]]) * grid.n / (grid.n - 1)
    cell = span / grid.n
    for c in curves:
        p = c.points
        if len(p) == 0:
            continue
        steps = c.steps()
        starts = p if c.closed else p[:-1]
        sub = np.maximum(1, np.ceil(np.abs(steps / cell).max(axis=1) * 3).astype(int))
        k = np.repeat(np.arange(len(starts)), sub)
        f = np.arange(sub.sum()) - np.repeat(np.cumsum(sub) - sub, sub)
        q = starts[k] + (f / sub[k])[:, None] * steps[k]
        q = np.vstack([q, p[-1:]])
        i = np.floor((q[:, 0] - grid.thetas[0]) / cell[0] + 0.5).astype(int)
        j = np.floor((q[:, 1] - grid.alphas[0]) / cell[1] + 0.5).astype(int)
        if grid.periodic:
            i %= grid.n
            j %= grid.n
        ok = (i >= 0) & (i < grid.n) & (j >= 0) & (j < grid.n)
        wall[i[ok], j[ok]] = True
    return wall


def _periodic_components(mask: np.ndarray, key: np.ndarray, periodic: bool):
    """Connected components of ``mask`` with equal ``key``, wrapping both axes if periodic."""
    n0, n1 = mask.shape
    idx = np.arange(mask.size).reshape(mask.shape)
    rows, cols = [], []
    for axis in (0, 1):
        nb_idx = np.roll(idx, -1, axis=axis)
        nb_mask = np.roll(mask, -1, axis=axis)
        nb_key = np.roll(key, -1, axis=axis)
        ok = mask & nb_mask & (key == nb_key)
        if not periodic:
            edge = np.zeros_like(ok)
            if axis == 0:
                edge[-1, :] = True
            else:
                edge[:, -1] = True
            ok &= ~edge
        rows.append(idx[ok])
        cols.append(nb_idx[ok])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(mask.size, mask.size))
    _, lab = connected_components(graph, directed=False)
    lab = lab.reshape(mask.shape)
    return np.where(mask, lab, -1)


@dataclass
class BasicRegion:
    id: str
    aspect: Aspect
    count: int
    representative: SlicePose
    cells: np.ndarray
    boundary: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass
class RegionDecomposition:
    grid: WorkspaceGrid
    labels: np.ndarray
    regions: list[BasicRegion]

    def region_of(self, pose, search: int = 2) -> BasicRegion | None:
        """Region containing ``pose`` (nearest labelled cell within ``search`` cells)."""
        i, j = self.grid.cell_of(pose)
        n = self.grid.n
        best = None
        for di in range(-search, search + 1):
            for dj in range(-search, search + 1):
                a, b = i + di, j + dj
                if self.grid.periodic:
                    a, b = a % n, b % n
                elif not (0 <= a < n and 0 <= b < n):
                    continue
                lab = self.labels[a, b]
                if lab >= 0 and (best is None or di * di + dj * dj < best[0]):
                    best = (di * di + dj * dj, lab)
        return None if best is None else self.regions[best[1]]


def decompose_basic_regions(g: ManipulatorGeometry, slc: SliceConfig, aspect: Aspect,
                            char_curves: list[CharCurve], singular_curves: list[TracedCurve],
                            grid: WorkspaceGrid | None = None, n: int = 192,
                            min_cells: int = 4) -> RegionDecomposition:
    """Connected components of the aspect minus its characteristic curves.

    Cells are keyed by the joint-image solution count, which jumps across
    every characteristic curve, and curves are also rasterised as walls.
    """
    sign = _aspect_sign(aspect)
    grid = grid or workspace_grid(g, slc, n)
    mine = [c.curve for c in char_curves if c.aspect is aspect]
    wall = _rasterize(grid, mine + list(singular_curves))
    mask = (grid.sign == sign) & ~wall & (grid.counts % 2 == 0)
    comp = _periodic_components(mask, grid.counts, grid.periodic)
    labels = -np.ones_like(comp)
    regions: list[BasicRegion] = []
    ids, sizes = np.unique(comp[comp >= 0], return_counts=True)
    order = sorted((c for c, s in zip(ids, sizes) if s >= min_cells),
                   key=lambda c: tuple(np.argwhere(comp == c)[0]))
    walls_by_curve = {c.id: _rasterize(grid, [c]) for c in mine + list(singular_curves)}
    for c in order:
        m = comp == c
        cells = np.argwhere(m)
        # representative: the cell deepest inside the component
        depth = ndimage.distance_transform_cdt(np.pad(m, 1, mode="wrap" if grid.periodic else "constant"))[1:-1, 1:-1]
        ci, cj = np.unravel_index(int(np.argmax(np.where(m, depth, -1))), m.shape)
        rep = SlicePose(grid.thetas[ci], grid.alphas[cj], slc.rho1)
        grown = ndimage.binary_dilation(m, iterations=2)
        boundary = sorted(k for k, w in walls_by_curve.items() if (w & grown).any())
        rid = len(regions)
        labels[m] = rid
        regions.append(BasicRegion(f"WAb{aspect.value[-1]}.{rid + 1}", aspect,
                                   int(grid.counts[ci, cj]), rep, cells, boundary))
    return RegionDecomposition(grid, labels, regions)


@dataclass
class BasicComponent:
    """Joint-space image of a basic region."""

    region: BasicRegion
    samples: np.ndarray

    def contains(self, g: ManipulatorGeometry, decomposition: RegionDecomposition,
                 joint: JointCoords, fk_opts: FKOptions = FKOptions()) -> bool:
        """True when some assembly mode of ``joint`` lies in this region."""
        for pose in forward_kinematics(g, joint, fk_opts).angles:
            r = decomposition.region_of(pose)
            if r is not None and r.id == self.region.id:
                return True
        return False


def basic_components(g: ManipulatorGeometry, decomposition: RegionDecomposition) -> list[BasicComponent]:
    geo = packed(g)
    grid = decomposition.grid
    out = []
    for r in decomposition.regions:
        th = grid.thetas[r.cells[:, 0]]
        al = grid.alphas[r.cells[:, 1]]
        img = np.stack(pw.inverse_kinematics(geo, r.representative.rho1, th, al), axis=-1)
        out.append(BasicComponent(r, img))
    return out
