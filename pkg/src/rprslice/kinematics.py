"""Inverse/forward kinematics in a fixed-rho1 slice and solution continuation."""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from . import _pointwise as pw
from .model import TWO_PI, ManipulatorGeometry, platform_frame

DEDUPE_TOL = 1e-6
SINGULAR_TOL = 1e-8
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


class KinematicsError(ValueError):
    pass


class ZeroLengthLegError(KinematicsError):
    """A leg has zero length, so its line (and passive angle) is undefined."""


class ContinuationError(RuntimeError):
    """STEP_FAILURE: branches could not be kept apart away from a fold."""


class Aspect(str, enum.Enum):
    WA1 = "WA1"
    WA2 = "WA2"
    SINGULAR = "SINGULAR"


@functools.lru_cache(maxsize=64)
def _packed(g: ManipulatorGeometry) -> np.ndarray:
    f = platform_frame(g)
    geo = np.array([*g.a1, *g.a2, *g.a3, *f.p2, *f.p3], dtype=float)
    geo.setflags(write=False)
    return geo


def packed(g: ManipulatorGeometry) -> np.ndarray:
    """Geometry as the flat float array the kernels consume."""
    return _packed(g)


def wrap(angle):
    return np.mod(angle, TWO_PI)


def torus_delta(a, b):
    """Signed shortest difference a - b on the circle, in (-pi, pi]."""
    return np.mod(np.asarray(a) - np.asarray(b) + math.pi, TWO_PI) - math.pi


def torus_distance(p, q) -> float | np.ndarray:
    """Euclidean distance between (theta, alpha) points on the flat torus."""
    d = torus_delta(np.asarray(p, float), np.asarray(q, float))
    return np.sqrt((d * d).sum(axis=-1))


@dataclass(frozen=True)
class SlicePose:
    theta1: float
    alpha: float
    rho1: float

    def __post_init__(self):
        if not self.rho1 > 0:
            raise KinematicsError("rho1 must be positive")
        object.__setattr__(self, "theta1", float(wrap(self.theta1)))
        object.__setattr__(self, "alpha", float(wrap(self.alpha)))

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.theta1, self.alpha])


@dataclass(frozen=True)
class JointCoords:
    rho1: float
    rho2: float
    rho3: float

    def __post_init__(self):
        if min(self.rho1, self.rho2, self.rho3) < 0:
            raise KinematicsError("leg lengths must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho1, self.rho2, self.rho3])


@dataclass(frozen=True)
class Configuration:
    pose: SlicePose
    b1: tuple[float, float]
    b2: tuple[float, float]
    b3: tuple[float, float]
    theta2: float
    theta3: float
    det_j: float
    aspect: Aspect


@dataclass(frozen=True)
class FKOptions:
    samples: int = 1024
    newton_tol: float = NEWTON_TOL
    max_iter: int = NEWTON_MAX_ITER
    dedupe_tol: float = DEDUPE_TOL
    singular_tol: float = SINGULAR_TOL


@dataclass
class SolutionSet:
    joint: JointCoords
    solutions: list[Configuration]
    nonconvergence: bool = False
    singular_input: bool = False

    @property
    def count(self) -> int:
        return len(self.solutions)

    @property
    def angles(self) -> np.ndarray:
        """(count, 2) array of (theta1, alpha)."""
        return np.array([c.pose.angles for c in self.solutions]).reshape(-1, 2)

    def by_aspect(self, aspect: Aspect) -> list[Configuration]:
        return [c for c in self.solutions if c.aspect is aspect]


def aspect_from_value(value: float, singular_tol: float = SINGULAR_TOL) -> Aspect:
    if abs(value) < singular_tol:
        return Aspect.SINGULAR
    return Aspect.WA1 if value > 0 else Aspect.WA2


def inverse_kinematics(g: ManipulatorGeometry, pose: SlicePose) -> JointCoords:
    r2, r3 = pw.inverse_kinematics(packed(g), pose.rho1, pose.theta1, pose.alpha)
    return JointCoords(pose.rho1, float(r2), float(r3))


def residuals(g: ManipulatorGeometry, pose: SlicePose, joint: JointCoords) -> tuple[float, float]:
    """(|B2-A2|^2 - rho2^2, |B3-A3|^2 - rho3^2) at ``pose``."""
    f2, f3 = pw.residuals(packed(g), joint.rho1, joint.rho2, joint.rho3, pose.theta1, pose.alpha)
    return float(f2), float(f3)


def passive_angles(g: ManipulatorGeometry, pose: SlicePose) -> tuple[float, float]:
    _, _, v2x, v2y, v3x, v3y = pw.leg_vectors(packed(g), pose.rho1, pose.theta1, pose.alpha)
    if v2x == 0 and v2y == 0:
        raise ZeroLengthLegError("leg 2 has zero length")
    if v3x == 0 and v3y == 0:
        raise ZeroLengthLegError("leg 3 has zero length")
    return float(math.atan2(v2y, v2x)), float(math.atan2(v3y, v3x))


def configuration(g: ManipulatorGeometry, pose: SlicePose,
                  singular_tol: float = SINGULAR_TOL) -> Configuration:
    geo = packed(g)
    b1x, b1y, b2x, b2y, b3x, b3y = (float(v) for v in pw.platform_points(geo, pose.rho1, pose.theta1, pose.alpha))
    t2 = math.atan2(b2y - geo[3], b2x - geo[2])
    t3 = math.atan2(b3y - geo[5], b3x - geo[4])
    with np.errstate(invalid="ignore", divide="ignore"):
        det = float(pw.singular_value(geo, pose.rho1, pose.theta1, pose.alpha))
    aspect = Aspect.SINGULAR if not math.isfinite(det) else aspect_from_value(det, singular_tol)
    return Configuration(pose, (b1x, b1y), (b2x, b2y), (b3x, b3y), t2, t3, det, aspect)


def dedupe_angles(raw: np.ndarray, tol: float) -> np.ndarray:
    """Merge torus-close points, then sort by ascending alpha then theta."""
    kept: list[np.ndarray] = []
    for p in raw:
        if not np.all(np.isfinite(p)):
            continue
        if all(torus_distance(p, q) >= tol for q in kept):
            kept.append(p)
    if not kept:
        return np.zeros((0, 2))
    arr = np.array(kept)
    return arr[np.lexsort((arr[:, 0], arr[:, 1]))]


def _solution_set(g, joint, raw, opts: FKOptions) -> SolutionSet:
    ang = dedupe_angles(raw, opts.dedupe_tol)
    geo = packed(g)
    scale = 1.0 + joint.rho2 ** 2 + joint.rho3 ** 2
    sols = [configuration(g, SlicePose(t, a, joint.rho1), opts.singular_tol) for t, a in ang]
    nonconv = False
    if len(ang):
        f2, f3 = pw.residuals(geo, joint.rho1, joint.rho2, joint.rho3, ang[:, 0], ang[:, 1])
        nonconv = bool(np.any(np.hypot(f2, f3) > 1e-6 * scale))
    close = False
    for i in range(len(ang)):
        for j in range(i + 1, len(ang)):
            if torus_distance(ang[i], ang[j]) < 10 * opts.dedupe_tol:
                close = True
    return SolutionSet(joint, sols, nonconvergence=nonconv, singular_input=close)


def forward_kinematics(g: ManipulatorGeometry, joint: JointCoords,
                       opts: FKOptions = FKOptions()) -> SolutionSet:
    """All assembly modes of ``joint`` in the slice rho1 = joint.rho1."""
    out = np.full((_kernels.MAX_SOLUTIONS, 2), np.nan)
    _kernels.backend.fk_raw(packed(g), float(joint.rho1), float(joint.rho2), float(joint.rho3),
                            opts.samples, opts.newton_tol, opts.max_iter, out)
    return _solution_set(g, joint, out, opts)


def forward_kinematics_batch(g: ManipulatorGeometry, rho1: float, rho23,
                             opts: FKOptions = FKOptions()) -> list[np.ndarray]:
    """Deduplicated (theta, alpha) solution arrays for many (rho2, rho3) points."""
    rho23 = np.ascontiguousarray(np.asarray(rho23, float).reshape(-1, 2))
    raw, _ = _kernels.backend.fk_raw_batch(packed(g), float(rho1), rho23, opts.samples,
                                           opts.newton_tol, opts.max_iter)
    return [dedupe_angles(r, opts.dedupe_tol) for r in raw]


def solution_counts(g: ManipulatorGeometry, rho1: float, rho23, samples: int = 1024) -> np.ndarray:
    """Number of assembly modes at each (rho2, rho3), without refinement."""
    rho23 = np.ascontiguousarray(np.asarray(rho23, float).reshape(-1, 2))
    return _kernels.backend.fk_count_batch(packed(g), float(rho1), rho23, samples)


def local_solutions(g: ManipulatorGeometry, joint: JointCoords, seeds,
                    tol: float = NEWTON_TOL, max_iter: int = 100,
                    dedupe_tol: float = 1e-9, step_tol: float = 1e-11) -> np.ndarray:
    """Damped Newton from every seed; return the distinct converged poses.

    Meant for resolving clustered roots (near a cusp or a fold) that the
    global sampled solver merges. A seed counts as converged only once its
    full Newton step drops below ``step_tol``: near a multiple root the
    residual alone is a poor test. The result is sorted like FK output.
    """
    geo = packed(g)
    x = np.array(seeds, float).reshape(-1, 2)
    r1, r2, r3 = joint.rho1, joint.rho2, joint.rho3
    scale = 1.0 + r2 * r2 + r3 * r3
    f2, f3 = pw.residuals(geo, r1, r2, r3, x[:, 0], x[:, 1])
    res = np.hypot(f2, f3)
    last = np.full(len(x), np.inf)
    for _ in range(max_iter):
        live = last > step_tol
        if not live.any():
            break
        j11, j12, j21, j22 = pw.residual_jacobian(geo, r1, x[:, 0], x[:, 1])
        det = j11 * j22 - j12 * j21
        det = np.where(det == 0.0, np.nan, det)
        step = -np.stack([(j22 * f2 - j12 * f3) / det, (-j21 * f2 + j11 * f3) / det], axis=-1)
        step = np.where(np.isfinite(step), step, 0.0)
        size = np.linalg.norm(step, axis=1)
        last = np.where(live, size, last)
        lam = np.ones(len(x))
        done = ~live | (size <= step_tol)
        for _ in range(20):
            y = x + lam[:, None] * step
            g2, g3 = pw.residuals(geo, r1, r2, r3, y[:, 0], y[:, 1])
            ok = ~done & (np.hypot(g2, g3) <= res)
            x = np.where(ok[:, None], y, x)
            f2 = np.where(ok, g2, f2)
            f3 = np.where(ok, g3, f3)
            res = np.where(ok, np.hypot(g2, g3), res)
            done |= ok
            if done.all():
                break
            lam = np.where(done, lam, 0.5 * lam)
        # a seed that cannot decrease its residual is stuck
        last = np.where(done | ~live, last, np.inf)
        if not (live & done).any():
            break
    good = x[(last <= step_tol) & (res <= 10 * tol * scale)]
    return dedupe_angles(np.mod(good, TWO_PI), dedupe_tol)


# --------------------------------------------------------------------------
# continuation

class EventKind(str, enum.Enum):
    COALESCENCE = "COALESCENCE"
    BIRTH = "BIRTH"


@dataclass(frozen=True)
class BranchEvent:
    path_parameter: float
    kind: EventKind
    branch_ids: tuple[int, int]
    location: SlicePose
    separation: float = 0.0


@dataclass
class Branch:
    id: int
    start_index: int | None
    ts: list[float] = field(default_factory=list)
    poses: list[np.ndarray] = field(default_factory=list)
    alive: bool = True
    sign: float = 0.0

    @property
    def end(self) -> np.ndarray:
        return self.poses[-1]


@dataclass
class ContinuationResult:
    branches: list[Branch]
    events: list[BranchEvent]
    final: SolutionSet
    # permutation[i] = index in the start set reached by start solution i at the
    # end of the path (closed paths), or None if the branch was lost
    permutation: list[int | None] | None

    @property
    def coalescences(self) -> list[BranchEvent]:
        return [e for e in self.events if e.kind is EventKind.COALESCENCE]


class Path:
    """Parametric curve t in [0, 1] -> (rho2, rho3) at fixed rho1."""

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, t: float) -> np.ndarray:
        h = 1e-7
        lo, hi = max(t - h, 0.0), min(t + h, 1.0)
        return (self(hi) - self(lo)) / (hi - lo)


class LinePath(Path):
    def __init__(self, start: Sequence[float], end: Sequence[float]):
        self.start = np.asarray(start, float)
        self.end = np.asarray(end, float)

    def __call__(self, t):
        return self.start + t * (self.end - self.start)

    def derivative(self, t):
        return self.end - self.start


class CirclePath(Path):
    """Counter-clockwise circle starting at ``center + radius*(cos phase, sin phase)``."""

    def __init__(self, center: Sequence[float], radius: float, phase: float = 0.0, turns: float = 1.0):
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.phase = float(phase)
        self.turns = float(turns)

    def __call__(self, t):
        a = self.phase + TWO_PI * self.turns * t
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def derivative(self, t):
        a = self.phase + TWO_PI * self.turns * t
        w = TWO_PI * self.turns * self.radius
        return w * np.array([-math.sin(a), math.cos(a)])


class ConcatPath(Path):
    """Traverse ``first`` then ``second``, each over half of [0, 1]."""

    def __init__(self, first: Path, second: Path):
        self.first, self.second = first, second

    def __call__(self, t):
        return self.first(2 * t) if t <= 0.5 else self.second(2 * t - 1)

    def derivative(self, t):
        return 2 * (self.first.derivative(2 * t) if t < 0.5 else self.second.derivative(2 * t - 1))


class ReversedPath(Path):
    def __init__(self, path: Path):
        self.path = path

    def __call__(self, t):
        return self.path(1.0 - t)

    def derivative(self, t):
        return -self.path.derivative(1.0 - t)


@dataclass(frozen=True)
class ContinuationOptions:
    dt_initial: float = 1e-3
    dt_max: float = 2e-2
    dt_min: float = 1e-12
    max_angle_step: float = 0.05
    corrector_iter: int = 12
    corrector_tol: float = 1e-12
    pair_tol: float = 2e-2
    check_births: bool = True


class _Stepper:
    def __init__(self, g, rho1, path, opts: ContinuationOptions):
        self.geo = packed(g)
        self.rho1 = float(rho1)
        self.path = path
        self.opts = opts
        k = _kernels.backend
        self._res = k.residuals
        self._jac = k.residual_jacobian
        self._sv = k.singular_value

    def sv(self, x):
        return float(self._sv(self.geo, self.rho1, x[0], x[1]))

    def f(self, x, t):
        r = self.path(t)
        return np.array(self._res(self.geo, self.rho1, r[0], r[1], x[0], x[1]))

    def jac(self, x):
        j11, j12, j21, j22 = self._jac(self.geo, self.rho1, x[0], x[1])
        return np.array([[j11, j12], [j21, j22]])

    def velocity(self, x, t):
        r = self.path(t)
        rhs = 2.0 * r * self.path.derivative(t)
        return np.linalg.solve(self.jac(x), rhs)

    def step(self, x, t, dt, sign):
        """Predict-correct from (x, t) to t + dt; None on failure."""
        o = self.opts
        try:
            xp = x + dt * self.velocity(x, t)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(xp - x) > o.max_angle_step:
            return None
        t1 = t + dt
        r = self.path(t1)
        scale = 1.0 + r @ r
        y = xp
        for _ in range(o.corrector_iter):
            fy = self.f(y, t1)
            if np.hypot(*fy) <= o.corrector_tol * scale:
                break
            try:
                y = y - np.linalg.solve(self.jac(y), fy)
            except np.linalg.LinAlgError:
                return None
        else:
            if np.hypot(*self.f(y, t1)) > 1e3 * o.corrector_tol * scale:
                return None
        if np.linalg.norm(y - x) > o.max_angle_step or np.linalg.norm(y - xp) > 0.25 * max(np.linalg.norm(xp - x), 1e-14) + 1e-12:
            return None
        s = self.sv(y)
        if s * sign <= 0:
            return None
        return y

    def fold_point(self, x, t):
        """Refine (theta, alpha, t) onto f = 0, singular_value = 0."""
        z = np.array([x[0], x[1], t])
        h = 1e-7
        for _ in range(30):
            fx = self.f(z[:2], z[2])
            r = np.array([fx[0], fx[1], self.sv(z[:2])])
            if np.abs(r).max() < 1e-13:
                break
            jac = np.zeros((3, 3))
            jac[:2, :2] = self.jac(z[:2])
            jac[:2, 2] = -2.0 * self.path(z[2]) * self.path.derivative(z[2])
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                jac[2, k] = (self.sv(z[:2] + e) - self.sv(z[:2] - e)) / (2 * h)
            try:
                dz = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            if np.linalg.norm(dz) > 0.1:
                dz *= 0.1 / np.linalg.norm(dz)
            z = z + dz
        return z[:2], float(np.clip(z[2], 0.0, 1.0))


def _match(points: np.ndarray, targets: np.ndarray, tol: float) -> list[int | None]:
    out: list[int | None] = []
    for p in points:
        if len(targets) == 0:
            out.append(None)
            continue
        d = torus_distance(targets, p)
        j = int(np.argmin(d))
        out.append(j if d[j] < tol else None)
    return out


def continue_solutions(g: ManipulatorGeometry, path: Path | Callable, start: SolutionSet,
                       opts: ContinuationOptions = ContinuationOptions(),
                       fk_opts: FKOptions = FKOptions()) -> ContinuationResult:
    """Track every start solution along ``path`` from t = 0 to t = 1.

    Branches that reach a fold of the slice map are paired with their
    mirrored partner and terminated with a COALESCENCE event; branches that
    appear when the path enters a region with more assembly modes are added
    with a BIRTH event. For a closed path the final solutions are matched back
    to the start set to give the induced permutation.
    """
    if not isinstance(path, Path):
        fn = path
        path = type("FnPath", (Path,), {"__call__": lambda self, t: np.asarray(fn(t), float)})()
    rho1 = start.joint.rho1
    st = _Stepper(g, rho1, path, opts)
    p0 = path(0.0)
    if abs(p0[0] - start.joint.rho2) > 1e-9 or abs(p0[1] - start.joint.rho3) > 1e-9:
        raise KinematicsError("start solution set is not at path(0)")

    branches: list[Branch] = []
    for i, c in enumerate(start.solutions):
        x = c.pose.angles.copy()
        branches.append(Branch(i, i, [0.0], [x], True, math.copysign(1.0, c.det_j)))
    events: list[BranchEvent] = []

    t = 0.0
    dt = opts.dt_initial
    while t < 1.0 and any(b.alive for b in branches):
        dt = min(dt, 1.0 - t)
        alive = [b for b in branches if b.alive]
        trial = {b.id: st.step(b.end, t, dt, b.sign) for b in alive}
        failed = [b for b in alive if trial[b.id] is None]
        if not failed:
            t_new = t + dt if dt < 1.0 - t else 1.0
            for b in alive:
                b.ts.append(t_new)
                b.poses.append(trial[b.id])
            _check_separation(st, alive, events, fk_opts.dedupe_tol, t_new)
            if opts.check_births:
                _detect_births(g, st, branches, events, t, t_new, fk_opts)
            t = t_new
            dt = min(dt * 1.5, opts.dt_max)
            continue
        dt *= 0.5
        if dt >= opts.dt_min:
            continue
        _terminate(st, failed, alive, events, t, opts)
        dt = opts.dt_initial * 1e-3

    final = forward_kinematics(g, JointCoords(rho1, *path(1.0)), fk_opts)
    perm = None
    p1 = path(1.0)
    if np.allclose(p0, p1, atol=1e-12):
        start_ang = start.angles
        perm = []
        for b in branches:
            if b.start_index is None:
                continue
            perm.append(_match([b.end], start_ang, 1e-5)[0] if b.alive else None)
    return ContinuationResult(branches, events, final, perm)


def _check_separation(st: _Stepper, alive, events, tol, t):
    """Mirrored branches that land on the fold together coalesce there."""
    for i, a in enumerate(alive):
        for b in alive[i + 1:]:
            if not (a.alive and b.alive) or torus_distance(a.end, b.end) >= tol:
                continue
            if a.sign == b.sign:
                raise ContinuationError(
                    f"branches {a.id} and {b.id} merged at t={t:.6g} without a fold (STEP_FAILURE)")
            sep = float(torus_distance(a.end, b.end))
            loc, tf = st.fold_point(a.end + 0.5 * torus_delta(b.end, a.end), t)
            a.alive = b.alive = False
            events.append(BranchEvent(tf, EventKind.COALESCENCE, (a.id, b.id),
                                      SlicePose(loc[0], loc[1], st.rho1), sep))


def _terminate(st: _Stepper, failed, alive, events, t, opts):
    pending = list(failed)
    while pending:
        a = pending.pop(0)
        partners = [b for b in alive if b is not a and b.alive and b.sign != a.sign]
        if not partners:
            raise ContinuationError(f"branch {a.id} stalled at t={t:.6g} with no mirrored partner (STEP_FAILURE)")
        d = [torus_distance(a.end, b.end) for b in partners]
        b = partners[int(np.argmin(d))]
        sep = float(min(d))
        if sep > opts.pair_tol:
            raise ContinuationError(
                f"branch {a.id} stalled at t={t:.6g}; nearest mirrored branch {b.id} is {sep:.3g} away (STEP_FAILURE)")
        mid = a.end + 0.5 * torus_delta(b.end, a.end)
        loc, tf = st.fold_point(mid, t)
        a.alive = b.alive = False
        if b in pending:
            pending.remove(b)
        events.append(BranchEvent(tf, EventKind.COALESCENCE, (a.id, b.id),
                                  SlicePose(loc[0], loc[1], st.rho1), sep))


def _detect_births(g, st: _Stepper, branches, events, t0, t1, fk_opts):
    alive = [b for b in branches if b.alive]
    r = st.path(t1)
    count = int(solution_counts(g, st.rho1, [r], fk_opts.samples)[0])
    if count <= len(alive):
        return
    lo, hi = t0, t1
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if int(solution_counts(g, st.rho1, [st.path(mid)], fk_opts.samples)[0]) > len(alive):
            hi = mid
        else:
            lo = mid
    sols = forward_kinematics(g, JointCoords(st.rho1, *st.path(t1)), fk_opts).angles
    ends = np.array([b.end for b in alive]).reshape(-1, 2)
    new = [s for s in sols if len(ends) == 0 or torus_distance(ends, s).min() > 1e-4]
    signs = [st.sv(s) > 0 for s in new]
    # births come in mirrored pairs; an unpaired root is a double root right at a fold, try again next step
    if len(new) % 2 or 2 * sum(signs) != len(new):
        return
    ids = []
    for s in new:
        b = Branch(len(branches), None, [t1], [s.copy()], True, math.copysign(1.0, st.sv(s)))
        branches.append(b)
        ids.append(b.id)
    for k in range(0, len(ids) - 1, 2):
        mid = new[k] + 0.5 * torus_delta(new[k + 1], new[k])
        loc, tb = st.fold_point(mid, hi)
        events.append(BranchEvent(tb, EventKind.BIRTH, (ids[k], ids[k + 1]),
                                  SlicePose(loc[0], loc[1], st.rho1)))
