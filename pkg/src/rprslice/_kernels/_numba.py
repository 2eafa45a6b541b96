"""Compiled kernels (numba, scalar loops)."""
import math
import types

import numpy as np
from numba import njit, prange

from .. import _pointwise as pw
from . import _loops

MAX_SOLUTIONS = 16

_jit = njit(cache=True, nogil=True)



def _compile(module, names):
    """Jit ``names`` (in dependency order) so they call each other compiled."""
    ns = dict(vars(module))
    for name in names:
        f = ns[name]
        ns[name] = _jit(types.FunctionType(f.__code__, ns, name, f.__defaults__))
    return ns


_pw = _compile(pw, ["platform_points", "leg_vectors", "inverse_kinematics", "residuals",
                    "residual_jacobian", "joint_jacobian", "singular_value", "loop_point"])
loop_point = _pw["loop_point"]
residuals = _pw["residuals"]
residual_jacobian = _pw["residual_jacobian"]
singular_value = _pw["singular_value"]
constraint_loops = _compile(_loops, ["constraint_loops"])["constraint_loops"]


@_jit
def _bisect(geo, r1, r2, r3, ta, tb, mode, a, b, ga):
    for _ in range(80):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        gm = loop_point(geo, r1, r2, r3, ta, tb, mode, m)[2]
        if gm == 0.0:
            return m
        if (gm > 0.0) == (ga > 0.0):
            a = m
            ga = gm
        else:
            b = m
    return 0.5 * (a + b)


@_jit
def _valley(geo, r1, r2, r3, ta, tb, mode, a, b, s):
    """Minimise s*g on [a, b] by golden section; return (u, g)."""
    inv = 0.6180339887498949
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    gc = s * loop_point(geo, r1, r2, r3, ta, tb, mode, c)[2]
    gd = s * loop_point(geo, r1, r2, r3, ta, tb, mode, d)[2]
    for _ in range(70):
        if gc < gd:
            b = d
            d = c
            gd = gc
            c = b - inv * (b - a)
            gc = s * loop_point(geo, r1, r2, r3, ta, tb, mode, c)[2]
        else:
            a = c
            c = d
            gc = gd
            d = a + inv * (b - a)
            gd = s * loop_point(geo, r1, r2, r3, ta, tb, mode, d)[2]
        if b - a < 1e-15:
            break
    u = 0.5 * (a + b)
    return u, loop_point(geo, r1, r2, r3, ta, tb, mode, u)[2]


@_jit
def _scan_loop(geo, r1, r2, r3, ta, tb, mode, nsamp, roots, nroots, refine):
    """Find sign changes and near-double valleys of g along one loop.

    Returns the updated root count. With ``refine`` false only counts.
    """
    h = 2.0 * math.pi / nsamp
    g = np.empty(nsamp)
    for k in range(nsamp):
        g[k] = loop_point(geo, r1, r2, r3, ta, tb, mode, k * h)[2]
    for k in range(nsamp):
        k1 = (k + 1) % nsamp
        u0 = k * h
        if g[k] == 0.0:
            if nroots < roots.shape[0]:
                roots[nroots] = u0
            nroots += 1
            continue
        if g[k] * g[k1] < 0.0:
            if nroots < roots.shape[0]:
                roots[nroots] = _bisect(geo, r1, r2, r3, ta, tb, mode, u0, u0 + h, g[k]) if refine else u0
            nroots += 1
            continue
        km = (k - 1) % nsamp
        if g[km] * g[k] > 0.0 and g[k] * g[k1] > 0.0 and abs(g[k]) <= abs(g[km]) and abs(g[k]) < abs(g[k1]):
            s = 1.0 if g[k] > 0.0 else -1.0
            uv, gv = _valley(geo, r1, r2, r3, ta, tb, mode, u0 - h, u0 + h, s)
            if gv * s < 0.0:
                if nroots + 1 < roots.shape[0]:
                    if refine:
                        roots[nroots] = _bisect(geo, r1, r2, r3, ta, tb, mode, u0 - h, uv, g[km])
                        roots[nroots + 1] = _bisect(geo, r1, r2, r3, ta, tb, mode, uv, u0 + h, gv)
                    else:
                        roots[nroots] = uv
                        roots[nroots + 1] = uv
                nroots += 2
    return nroots


@_jit
def _newton_polish(geo, r1, r2, r3, th, al, tol, max_iter, max_move):
    scale = 1.0 + r2 * r2 + r3 * r3
    t0 = th
    a0 = al
    f2, f3 = residuals(geo, r1, r2, r3, th, al)
    res = math.hypot(f2, f3)
    for _ in range(max_iter):
        if res <= tol * scale:
            break
        j11, j12, j21, j22 = residual_jacobian(geo, r1, th, al)
        det = j11 * j22 - j12 * j21
        if det == 0.0:
            break
        dt = -(j22 * f2 - j12 * f3) / det
        da = -(-j21 * f2 + j11 * f3) / det
        lam = 1.0
        accepted = False
        while lam > 1e-3:
            nt = th + lam * dt
            na = al + lam * da
            n2, n3 = residuals(geo, r1, r2, r3, nt, na)
            nres = math.hypot(n2, n3)
            if nres < res:
                th = nt
                al = na
                f2 = n2
                f3 = n3
                res = nres
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
    if math.hypot(th - t0, al - a0) > max_move:
        return t0, a0
    return th, al


@_jit
def fk_raw(geo, r1, r2, r3, nsamp, tol, max_iter, out):
    """Write raw (theta, alpha) roots into ``out``; return the root count."""
    loops, nl = constraint_loops(geo, r1, r2)
    roots = np.empty(MAX_SOLUTIONS)
    n = 0
    for li in range(nl):
        ta = loops[li, 0]
        tb = loops[li, 1]
        mode = loops[li, 2]
        m = _scan_loop(geo, r1, r2, r3, ta, tb, mode, nsamp, roots, 0, True)
        for j in range(min(m, MAX_SOLUTIONS)):
            th, al, _ = loop_point(geo, r1, r2, r3, ta, tb, mode, roots[j])
            th, al = _newton_polish(geo, r1, r2, r3, th, al, tol, max_iter, 1e-5)
            if n < out.shape[0]:
                out[n, 0] = th % (2.0 * math.pi)
                out[n, 1] = al % (2.0 * math.pi)
            n += 1
    return n


@njit(cache=True, parallel=True)
def fk_raw_batch(geo, r1, rho23, nsamp, tol, max_iter):
    b = rho23.shape[0]
    out = np.full((b, MAX_SOLUTIONS, 2), np.nan)
    counts = np.zeros(b, dtype=np.int64)
    for i in prange(b):
        counts[i] = fk_raw(geo, r1, rho23[i, 0], rho23[i, 1], nsamp, tol, max_iter, out[i])
    return out, counts


@njit(cache=True, parallel=True)
def fk_count_batch(geo, r1, rho23, nsamp):
    b = rho23.shape[0]
    counts = np.zeros(b, dtype=np.int64)
    roots = np.empty((b, MAX_SOLUTIONS))
    for i in prange(b):
        loops, nl = constraint_loops(geo, r1, rho23[i, 0])
        n = 0
        for li in range(nl):
            n = _scan_loop(geo, r1, rho23[i, 0], rho23[i, 1], loops[li, 0], loops[li, 1],
                           loops[li, 2], nsamp, roots[i], n, False)
        counts[i] = n
    return counts


@njit(cache=True, parallel=True)
def singular_value_grid(geo, r1, thetas, alphas):
    out = np.empty((thetas.shape[0], alphas.shape[0]))
    for i in prange(thetas.shape[0]):
        for j in range(alphas.shape[0]):
            out[i, j] = singular_value(geo, r1, thetas[i], alphas[j])
    return out
