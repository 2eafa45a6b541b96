"""Pure-numpy kernels, vectorised over batches of joint points.

Same algorithm as the compiled kernels: sample each leg-2 constraint loop,
bracket sign changes of the leg-3 residual, catch near-double roots through
golden-section search in residual valleys, bisect, then Newton-polish.
"""
import math

import numpy as np

from .. import _pointwise as pw
from . import _loops

MAX_SOLUTIONS = 16
CHUNK = 512

loop_point = pw.loop_point
residuals = pw.residuals
residual_jacobian = pw.residual_jacobian
singular_value = pw.singular_value
constraint_loops = _loops.constraint_loops


def _loop_table(geo, r1, rho2):
    table = np.zeros((len(rho2), _loops.MAX_LOOPS, 3))
    valid = np.zeros((len(rho2), _loops.MAX_LOOPS), dtype=bool)
    for i, r2 in enumerate(rho2):
        lp, n = constraint_loops(geo, r1, float(r2))
        table[i] = lp
        valid[i, :n] = True
    return table, valid


def _g(geo, r1, r2, r3, lp, u):
    return loop_point(geo, r1, r2, r3, lp[..., 0], lp[..., 1], lp[..., 2], u)[2]


def _bisect(geo, r1, r2, r3, lp, a, b, ga):
    a = a.copy()
    b = b.copy()
    ga = ga.copy()
    for _ in range(80):
        m = 0.5 * (a + b)
        active = (m > a) & (m < b)
        if not active.any():
            break
        gm = _g(geo, r1, r2, r3, lp, m)
        exact = active & (gm == 0.0)
        a = np.where(exact, m, a)
        b = np.where(exact, m, b)
        same = active & ~exact & ((gm > 0.0) == (ga > 0.0))
        other = active & ~exact & ~same
        a = np.where(same, m, a)
        ga = np.where(same, gm, ga)
        b = np.where(other, m, b)
    return 0.5 * (a + b)


def _valley(geo, r1, r2, r3, lp, a, b, s):
    inv = 0.6180339887498949
    a = a.copy()
    b = b.copy()
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    gc = s * _g(geo, r1, r2, r3, lp, c)
    gd = s * _g(geo, r1, r2, r3, lp, d)
    for _ in range(70):
        left = gc < gd
        nb = np.where(left, d, b)
        na = np.where(left, a, c)
        nc = np.where(left, nb - inv * (nb - na), d)
        nd = np.where(left, c, na + inv * (nb - na))
        new = _g(geo, r1, r2, r3, lp, np.where(left, nc, nd)) * s
        gc, gd = np.where(left, new, gd), np.where(left, gc, new)
        a, b, c, d = na, nb, nc, nd
    u = 0.5 * (a + b)
    return u, _g(geo, r1, r2, r3, lp, u)


def _newton_polish(geo, r1, r2, r3, th, al, tol, max_iter, max_move):
    scale = 1.0 + r2 * r2 + r3 * r3
    t0, a0 = th.copy(), al.copy()
    f2, f3 = residuals(geo, r1, r2, r3, th, al)
    res = np.hypot(f2, f3)
    live = np.ones(th.shape, dtype=bool)
    for _ in range(max_iter):
        live &= res > tol * scale
        if not live.any():
            break
        j11, j12, j21, j22 = residual_jacobian(geo, r1, th, al)
        det = j11 * j22 - j12 * j21
        live &= det != 0.0
        det = np.where(det == 0.0, 1.0, det)
        dt = -(j22 * f2 - j12 * f3) / det
        da = -(-j21 * f2 + j11 * f3) / det
        accepted = np.zeros(th.shape, dtype=bool)
        lam = 1.0
        while lam > 1e-3:
            nt = th + lam * dt
            na = al + lam * da
            n2, n3 = residuals(geo, r1, r2, r3, nt, na)
            nres = np.hypot(n2, n3)
            take = live & ~accepted & (nres < res)
            th = np.where(take, nt, th)
            al = np.where(take, na, al)
            f2 = np.where(take, n2, f2)
            f3 = np.where(take, n3, f3)
            res = np.where(take, nres, res)
            accepted |= take
            lam *= 0.5
        live &= accepted
    moved = np.hypot(th - t0, al - a0) > max_move
    return np.where(moved, t0, th), np.where(moved, a0, al)


def _scan_chunk(geo, r1, rho23, nsamp, refine):
    """Return per-point root lists (u-brackets resolved) for one chunk."""
    table, valid = _loop_table(geo, r1, rho23[:, 0])
    h = 2.0 * math.pi / nsamp
    k = np.arange(nsamp)
    u = k * h
    r2 = rho23[:, 0][:, None, None]
    r3 = rho23[:, 1][:, None, None]
    g = _g(geo, r1, r2, r3, table[:, :, None, :], u[None, None, :])
    g = np.where(valid[..., None], g, np.nan)
    g1 = np.roll(g, -1, axis=-1)
    gm = np.roll(g, 1, axis=-1)
    zero = g == 0.0
    sign = ~zero & (g * g1 < 0.0)
    valley = (~zero & (gm * g > 0.0) & (g * g1 > 0.0)
              & (np.abs(g) <= np.abs(gm)) & (np.abs(g) < np.abs(g1)))

    pts, lps, ks, subs, roots = [], [], [], [], []

    pi, li, ki = np.nonzero(zero)
    pts.append(pi); lps.append(li); ks.append(ki); subs.append(np.zeros_like(ki)); roots.append(u[ki])

    pi, li, ki = np.nonzero(sign)
    lp = table[pi, li]
    rr2 = rho23[pi, 0]
    rr3 = rho23[pi, 1]
    ur = _bisect(geo, r1, rr2, rr3, lp, u[ki], u[ki] + h, g[pi, li, ki]) if refine else u[ki]
    pts.append(pi); lps.append(li); ks.append(ki); subs.append(np.zeros_like(ki)); roots.append(ur)

    pi, li, ki = np.nonzero(valley)
    lp = table[pi, li]
    rr2 = rho23[pi, 0]
    rr3 = rho23[pi, 1]
    gk = g[pi, li, ki]
    s = np.where(gk > 0.0, 1.0, -1.0)
    uv, gv = _valley(geo, r1, rr2, rr3, lp, u[ki] - h, u[ki] + h, s)
    hit = gv * s < 0.0
    pi, li, ki, lp, rr2, rr3, uv, gv = (x[hit] for x in (pi, li, ki, lp, rr2, rr3, uv, gv))
    if refine:
        left = _bisect(geo, r1, rr2, rr3, lp, u[ki] - h, uv, g[pi, li, (ki - 1) % nsamp])
        right = _bisect(geo, r1, rr2, rr3, lp, uv, u[ki] + h, gv)
    else:
        left = right = uv
    for sub, ur in ((0, left), (1, right)):
        pts.append(pi); lps.append(li); ks.append(ki); subs.append(np.full_like(ki, sub)); roots.append(ur)

    pts, lps, ks, subs, roots = (np.concatenate(x) for x in (pts, lps, ks, subs, roots))
    order = np.lexsort((subs, ks, lps, pts))
    return table, pts[order], lps[order], roots[order]


def fk_raw_batch(geo, r1, rho23, nsamp, tol, max_iter):
    rho23 = np.asarray(rho23, dtype=float).reshape(-1, 2)
    b = len(rho23)
    out = np.full((b, MAX_SOLUTIONS, 2), np.nan)
    counts = np.zeros(b, dtype=np.int64)
    for start in range(0, b, CHUNK):
        sl = slice(start, min(start + CHUNK, b))
        chunk = rho23[sl]
        table, pts, lps, roots = _scan_chunk(geo, r1, chunk, nsamp, True)
        lp = table[pts, lps]
        rr2 = chunk[pts, 0]
        rr3 = chunk[pts, 1]
        th, al, _ = loop_point(geo, r1, rr2, rr3, lp[:, 0], lp[:, 1], lp[:, 2], roots)
        th, al = _newton_polish(geo, r1, rr2, rr3, th, al, tol, max_iter, 1e-5)
        th = np.mod(th, 2.0 * math.pi)
        al = np.mod(al, 2.0 * math.pi)
        local = np.bincount(pts, minlength=len(chunk))
        counts[sl] = local
        slot = np.arange(len(pts)) - np.repeat(np.cumsum(local) - local, local)
        keep = slot < MAX_SOLUTIONS
        out[start + pts[keep], slot[keep], 0] = th[keep]
        out[start + pts[keep], slot[keep], 1] = al[keep]
    return out, counts


def fk_raw(geo, r1, r2, r3, nsamp, tol, max_iter, out):
    sols, counts = fk_raw_batch(geo, r1, np.array([[r2, r3]]), nsamp, tol, max_iter)
    n = int(counts[0])
    m = min(n, out.shape[0])
    out[:m] = sols[0, :m]
    return n


def fk_count_batch(geo, r1, rho23, nsamp):
    rho23 = np.asarray(rho23, dtype=float).reshape(-1, 2)
    counts = np.zeros(len(rho23), dtype=np.int64)
    for start in range(0, len(rho23), CHUNK):
        sl = slice(start, min(start + CHUNK, len(rho23)))
        _, pts, _, _ = _scan_chunk(geo, r1, rho23[sl], nsamp, False)
        counts[sl] = np.bincount(pts, minlength=sl.stop - sl.start)
    return counts


def singular_value_grid(geo, r1, thetas, alphas):
    return singular_value(geo, r1, thetas[:, None], alphas[None, :])
