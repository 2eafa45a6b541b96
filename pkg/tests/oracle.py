"""Brute-force forward kinematics, written without any package code.

A dense (theta1, alpha) grid is scanned for cells in which both squared-length
residuals change sign; those cells are bisected as quadtrees until tiny, then
polished by a few Newton steps. Slow but independent of the production solver,
which eliminates alpha along one leg's constraint loop instead.
"""
import math

import numpy as np

TWO_PI = 2.0 * math.pi

# reference geometry, written out again on purpose
A1 = np.array([0.0, 0.0])
A2 = np.array([15.91, 0.0])
A3 = np.array([0.0, 10.0])
D12, D23, D31 = 17.04, 16.54, 20.84


def platform():
    """Platform vertices 2 and 3 in the frame of vertex 1, counter-clockwise."""
    x = (D12 ** 2 + D31 ** 2 - D23 ** 2) / (2.0 * D12)
    return np.array([D12, 0.0]), np.array([x, math.sqrt(D31 ** 2 - x ** 2)])


P2, P3 = platform()


def ik(rho1, theta, alpha):
    b1 = A1 + rho1 * np.array([np.cos(theta), np.sin(theta)])
    c, s = np.cos(alpha), np.sin(alpha)
    rot = np.array([[c, -s], [s, c]])
    b2 = b1 + rot @ P2
    b3 = b1 + rot @ P3
    return np.linalg.norm(b2 - A2), np.linalg.norm(b3 - A3)


def _f(rho1, rho2, rho3, th, al):
    ux = A1[0] + rho1 * np.cos(th)
    uy = A1[1] + rho1 * np.sin(th)
    c, s = np.cos(al), np.sin(al)
    out = []
    for p, a, r in ((P2, A2, rho2), (P3, A3, rho3)):
        bx = ux + c * p[0] - s * p[1] - a[0]
        by = uy + s * p[0] + c * p[1] - a[1]
        out.append(bx * bx + by * by - r * r)
    return out


def _grid_values(rho1, rho2, rho3, n):
    t = np.linspace(0.0, TWO_PI, n + 1)
    ux = A1[0] + rho1 * np.cos(t)
    uy = A1[1] + rho1 * np.sin(t)
    c, s = np.cos(t), np.sin(t)
    vals = []
    for p, a, r in ((P2, A2, rho2), (P3, A3, rho3)):
        wx = c * p[0] - s * p[1]
        wy = s * p[0] + c * p[1]
        ex, ey = ux - a[0], uy - a[1]
        v = (ex * ex + ey * ey)[:, None] + (wx * wx + wy * wy)[None, :] + 2.0 * (np.outer(ex, wx) + np.outer(ey, wy))
        vals.append(v - r * r)
    return t, vals


def _changes(c00, c01, c10, c11):
    lo = np.minimum(np.minimum(c00, c01), np.minimum(c10, c11))
    hi = np.maximum(np.maximum(c00, c01), np.maximum(c10, c11))
    return (lo <= 0) & (hi >= 0)


def brute_force_fk(rho1, rho2, rho3, n=2048, depth=30, dedupe=1e-6):
    t, (f2, f3) = _grid_values(rho1, rho2, rho3, n)
    m2 = _changes(f2[:-1, :-1], f2[:-1, 1:], f2[1:, :-1], f2[1:, 1:])
    m3 = _changes(f3[:-1, :-1], f3[:-1, 1:], f3[1:, :-1], f3[1:, 1:])
    i, j = np.nonzero(m2 & m3)
    h = TWO_PI / n
    # cells: lower-left corner and size
    x0 = t[i].astype(float)
    y0 = t[j].astype(float)
    size = h
    for _ in range(depth):
        size /= 2.0
        xs = np.concatenate([x0, x0 + size, x0, x0 + size])
        ys = np.concatenate([y0, y0, y0 + size, y0 + size])
        corners = [(xs, ys), (xs + size, ys), (xs, ys + size), (xs + size, ys + size)]
        vals = [_f(rho1, rho2, rho3, cx, cy) for cx, cy in corners]
        keep = (_changes(vals[0][0], vals[1][0], vals[2][0], vals[3][0])
                & _changes(vals[0][1], vals[1][1], vals[2][1], vals[3][1]))
        x0, y0 = xs[keep], ys[keep]
        if len(x0) > 20000:
            raise RuntimeError("oracle subdivision exploded")
    pts = np.stack([x0 + size / 2, y0 + size / 2], axis=1)
    pts = _polish(rho1, rho2, rho3, pts)
    return _dedupe(np.mod(pts, TWO_PI), dedupe)


def _polish(rho1, rho2, rho3, pts, steps=4, eps=1e-7):
    for _ in range(steps):
        th, al = pts[:, 0], pts[:, 1]
        f = np.stack(_f(rho1, rho2, rho3, th, al), axis=1)
        ft = (np.stack(_f(rho1, rho2, rho3, th + eps, al), axis=1) - np.stack(_f(rho1, rho2, rho3, th - eps, al), axis=1)) / (2 * eps)
        fa = (np.stack(_f(rho1, rho2, rho3, th, al + eps), axis=1) - np.stack(_f(rho1, rho2, rho3, th, al - eps), axis=1)) / (2 * eps)
        det = ft[:, 0] * fa[:, 1] - fa[:, 0] * ft[:, 1]
        ok = np.abs(det) > 1e-12
        dth = np.where(ok, (f[:, 0] * fa[:, 1] - fa[:, 0] * f[:, 1]) / np.where(ok, det, 1.0), 0.0)
        dal = np.where(ok, (ft[:, 0] * f[:, 1] - f[:, 0] * ft[:, 1]) / np.where(ok, det, 1.0), 0.0)
        pts = pts - np.stack([dth, dal], axis=1)
    return pts


def torus_distance(p, q):
    d = np.mod(np.asarray(p) - np.asarray(q) + math.pi, TWO_PI) - math.pi
    return np.sqrt((d * d).sum(axis=-1))


def _dedupe(pts, tol):
    out = []
    for p in pts[np.lexsort((pts[:, 1], pts[:, 0]))]:
        if all(torus_distance(p, q) > tol for q in out):
            out.append(p)
    return np.array(out).reshape(-1, 2)
