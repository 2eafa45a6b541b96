"""Pointwise slice kinematics.

Every function here is written with plain arithmetic and numpy ufuncs only,
so the same source broadcasts over numpy arrays and compiles under
``numba.njit`` for scalar arguments. ``geo`` is the packed float array
``[a1x, a1y, a2x, a2y, a3x, a3y, p2x, p2y, p3x, p3y]``.
"""
import numpy as np


def platform_points(geo, rho1, theta, alpha):
    b1x = geo[0] + rho1 * np.cos(theta)
    b1y = geo[1] + rho1 * np.sin(theta)
    ca = np.cos(alpha)
    sa = np.sin(alpha)
    b2x = b1x + ca * geo[6] - sa * geo[7]
    b2y = b1y + sa * geo[6] + ca * geo[7]
    b3x = b1x + ca * geo[8] - sa * geo[9]
    b3y = b1y + sa * geo[8] + ca * geo[9]
    return b1x, b1y, b2x, b2y, b3x, b3y


def leg_vectors(geo, rho1, theta, alpha):
    b1x, b1y, b2x, b2y, b3x, b3y = platform_points(geo, rho1, theta, alpha)
    return (b1x - geo[0], b1y - geo[1], b2x - geo[2], b2y - geo[3],
            b3x - geo[4], b3y - geo[5])


def inverse_kinematics(geo, rho1, theta, alpha):
    _, _, v2x, v2y, v3x, v3y = leg_vectors(geo, rho1, theta, alpha)
    return np.sqrt(v2x * v2x + v2y * v2y), np.sqrt(v3x * v3x + v3y * v3y)


def residuals(geo, rho1, rho2, rho3, theta, alpha):
    _, _, v2x, v2y, v3x, v3y = leg_vectors(geo, rho1, theta, alpha)
    return v2x * v2x + v2y * v2y - rho2 * rho2, v3x * v3x + v3y * v3y - rho3 * rho3


def residual_jacobian(geo, rho1, theta, alpha):
    """d(f2, f3)/d(theta, alpha) for the squared-length residuals."""
    _, _, v2x, v2y, v3x, v3y = leg_vectors(geo, rho1, theta, alpha)
    dbx = -rho1 * np.sin(theta)
    dby = rho1 * np.cos(theta)
    ca = np.cos(alpha)
    sa = np.sin(alpha)
    # d/dalpha of R(alpha) p
    r2x = -sa * geo[6] - ca * geo[7]
    r2y = ca * geo[6] - sa * geo[7]
    r3x = -sa * geo[8] - ca * geo[9]
    r3y = ca * geo[8] - sa * geo[9]
    j11 = 2.0 * (v2x * dbx + v2y * dby)
    j12 = 2.0 * (v2x * r2x + v2y * r2y)
    j21 = 2.0 * (v3x * dbx + v3y * dby)
    j22 = 2.0 * (v3x * r3x + v3y * r3y)
    return j11, j12, j21, j22


def joint_jacobian(geo, rho1, theta, alpha):
    """d(rho2, rho3)/d(theta, alpha); undefined where a leg has zero length."""
    j11, j12, j21, j22 = residual_jacobian(geo, rho1, theta, alpha)
    rho2, rho3 = inverse_kinematics(geo, rho1, theta, alpha)
    return j11 / (2.0 * rho2), j12 / (2.0 * rho2), j21 / (2.0 * rho3), j22 / (2.0 * rho3)


def singular_value(geo, rho1, theta, alpha):
    """Determinant of the normalised line coordinates of the three legs.

    Row i is (n_x, n_y, -n . A_i) with n the unit normal of leg i; the
    determinant vanishes iff the leg lines are concurrent or parallel.
    """
    v1x, v1y, v2x, v2y, v3x, v3y = leg_vectors(geo, rho1, theta, alpha)
    l1 = np.sqrt(v1x * v1x + v1y * v1y)
    l2 = np.sqrt(v2x * v2x + v2y * v2y)
    l3 = np.sqrt(v3x * v3x + v3y * v3y)
    n1x = -v1y / l1
    n1y = v1x / l1
    n2x = -v2y / l2
    n2y = v2x / l2
    n3x = -v3y / l3
    n3y = v3x / l3
    w1 = -(n1x * geo[0] + n1y * geo[1])
    w2 = -(n2x * geo[2] + n2y * geo[3])
    w3 = -(n3x * geo[4] + n3y * geo[5])
    return (n1x * (n2y * w3 - w2 * n3y)
            - n1y * (n2x * w3 - w2 * n3x)
            + w1 * (n2x * n3y - n2y * n3x))


def loop_point(geo, rho1, rho2, rho3, ta, tb, mode, u):
    """Point on a leg-2 constraint loop and the leg-3 residual there.

    The set f2 = 0 is parametrised by theta with alpha solved in closed form.
    ``mode`` 0 is an arc theta in [ta, tb] traversed out and back (the
    cosine substitution keeps the fold ends smooth in ``u``); modes 1 and 2
    are full-circle branches with the + and - arccos sign.
    """
    is_arc = 1.0 * (mode == 0)
    theta = is_arc * (ta + (tb - ta) * 0.5 * (1.0 - np.cos(u))) + (1.0 - is_arc) * u
    sigma = is_arc * (1.0 - 2.0 * (u > np.pi)) + 1.0 * (mode == 1) - 1.0 * (mode == 2)
    b1x = geo[0] + rho1 * np.cos(theta)
    b1y = geo[1] + rho1 * np.sin(theta)
    vx = b1x - geo[2]
    vy = b1y - geo[3]
    r = np.sqrt(vx * vx + vy * vy)
    d = np.sqrt(geo[6] * geo[6] + geo[7] * geo[7])
    c = (rho2 * rho2 - r * r - d * d) / (2.0 * d * r)
    c = np.minimum(np.maximum(c, -1.0), 1.0)
    alpha = np.arctan2(vy, vx) + sigma * np.arccos(c) - np.arctan2(geo[7], geo[6])
    ca = np.cos(alpha)
    sa = np.sin(alpha)
    b3x = b1x + ca * geo[8] - sa * geo[9] - geo[4]
    b3y = b1y + sa * geo[8] + ca * geo[9] - geo[5]
    return theta, alpha, b3x * b3x + b3y * b3y - rho3 * rho3
