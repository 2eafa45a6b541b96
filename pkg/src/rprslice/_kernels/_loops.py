"""Enumeration of the leg-2 constraint loops on the (theta, alpha) torus.

For fixed rho1 and rho2 the set f2 = 0 projects onto theta intervals where
the triangle A2-B1-B2 closes, i.e. |d12 - rho2| <= |B1 - A2| <= d12 + rho2.
Since |B1 - A2|^2 = P + Q cos(theta - theta0), the admissible set is an
arccos window: empty, one arc, two arcs, or the full circle (two branches).
"""
import math

import numpy as np

MAX_LOOPS = 2


def constraint_loops(geo, rho1, rho2):
    """Return a (MAX_LOOPS, 3) array of (ta, tb, mode) rows and the row count."""
    out = np.zeros((MAX_LOOPS, 3))
    ex = geo[0] - geo[2]
    ey = geo[1] - geo[3]
    e = math.sqrt(ex * ex + ey * ey)
    d = math.sqrt(geo[6] * geo[6] + geo[7] * geo[7])
    if rho2 <= 0.0 or e == 0.0:
        return out, 0
    big_p = e * e + rho1 * rho1
    big_q = 2.0 * rho1 * e
    theta0 = math.atan2(ey, ex)
    lo = abs(d - rho2)
    hi = d + rho2
    cl = (lo * lo - big_p) / big_q
    ch = (hi * hi - big_p) / big_q
    if ch < -1.0 or cl > 1.0 or cl >= ch:
        return out, 0
    if cl <= -1.0 and ch >= 1.0:
        out[0, 0] = 0.0
        out[0, 1] = 2.0 * math.pi
        out[0, 2] = 1.0
        out[1, 0] = 0.0
        out[1, 1] = 2.0 * math.pi
        out[1, 2] = 2.0
        return out, 2
    if cl <= -1.0:
        w = math.acos(ch)
        out[0, 0] = theta0 + w
        out[0, 1] = theta0 + 2.0 * math.pi - w
        return out, 1
    if ch >= 1.0:
        w = math.acos(cl)
        out[0, 0] = theta0 - w
        out[0, 1] = theta0 + w
        return out, 1
    wa = math.acos(ch)
    wb = math.acos(cl)
    out[0, 0] = theta0 + wa
    out[0, 1] = theta0 + wb
    out[1, 0] = theta0 - wb
    out[1, 1] = theta0 - wa
    return out, 2
