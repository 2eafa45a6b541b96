import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rprslice import _pointwise as pw
from rprslice.kinematics import Aspect, SlicePose, packed, torus_delta
from rprslice.model import SliceConfig
from rprslice.singularity import (Domain, aspect_of, level_tangents, project_to_level, singular_gradient,
                                  singular_value, singular_value_array, trace_singular_curves)


def packed_geo():
    from rprslice.model import reference_geometry
    return packed(reference_geometry())


def test_singular_value_vanishes_for_concurrent_legs(geometry):
    # at a zero of the singular value the three leg lines are concurrent
    geo = packed(geometry)
    al = np.linspace(0, 2 * math.pi, 4001)
    sv = singular_value_array(geo, 17.0, np.full_like(al, 1.0), al)
    k = np.nonzero(np.sign(sv[:-1]) != np.sign(sv[1:]))[0][0]
    a0 = project_to_level(geo, 17.0, np.array([[1.0, al[k]]]))[0]
    v = pw.leg_vectors(geo, 17.0, a0[0], a0[1])
    anchors = geometry.anchors
    lines = [np.array([-v[2 * i + 1], v[2 * i], v[2 * i + 1] * anchors[i, 0] - v[2 * i] * anchors[i, 1]])
             for i in range(3)]
    m = np.array([ln / np.linalg.norm(ln[:2]) for ln in lines])
    assert abs(np.linalg.det(m)) < 1e-9


def test_reference_slice_has_one_closed_curve(singular):
    sing, joint = singular
    assert len(sing) == 1 and sing[0].closed
    c = sing[0]
    assert c.domain is Domain.WORKSPACE_SLICE
    geo_res = np.abs(singular_value_array(packed_geo(), 17.0, c.points[:, 0], c.points[:, 1]))
    assert geo_res.max() < 1e-9
    assert len(joint) == 1 and joint[0].domain is Domain.JOINT_SLICE and joint[0].source == c.id


def test_tangents_are_unit_and_level(singular):
    c = singular[0][0]
    assert np.allclose(np.linalg.norm(c.tangents, axis=1), 1.0)
    grad = singular_gradient(packed_geo(), 17.0, c.points[:, 0], c.points[:, 1])
    cos = np.abs((grad * c.tangents).sum(axis=1)) / np.linalg.norm(grad, axis=1)
    assert cos.max() < 1e-4
    # orientation follows the traversal direction
    steps = c.steps()
    assert (np.einsum("ij,ij->i", steps, c.tangents) > 0).mean() > 0.99


def test_curve_length_converges(geometry, singular):
    coarse = trace_singular_curves(geometry, SliceConfig(17.0, 128))
    fine = singular[0]
    assert len(coarse) == len(fine)
    assert coarse[0].length() == pytest.approx(fine[0].length(), rel=2e-3)


def test_partial_window_gives_open_curves(geometry):
    slc = SliceConfig(17.0, 64, (0.0, 2.0), (0.0, 2.0))
    curves = trace_singular_curves(geometry, slc)
    assert curves and all(not c.closed for c in curves)
    for c in curves:
        assert c.points.min() >= 0.0 and c.points.max() <= 2.0 + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi, exclude_max=True), st.floats(0, 2 * math.pi, exclude_max=True))
def test_aspect_matches_sign(theta, alpha):
    from rprslice.model import reference_geometry
    g = reference_geometry()
    pose = SlicePose(theta, alpha, 17.0)
    v = singular_value(g, pose)
    a = aspect_of(g, pose)
    if abs(v) > 1e-6:
        assert a is (Aspect.WA1 if v > 0 else Aspect.WA2)


def test_level_tangents_are_orthogonal_to_gradient():
    geo = packed_geo()
    pts = np.array([[0.3, 1.0], [2.0, 4.0], [5.0, 0.5]])
    t = level_tangents(geo, 17.0, pts)
    g = singular_gradient(geo, 17.0, pts[:, 0], pts[:, 1])
    assert np.allclose((t * g).sum(axis=1), 0.0, atol=1e-9 * np.linalg.norm(g, axis=1).max())


def test_projection_lands_on_level(singular):
    geo = packed_geo()
    c = singular[0][0]
    pts = c.points[::97]
    normal = np.column_stack([-c.tangents[::97, 1], c.tangents[::97, 0]])
    q = project_to_level(geo, 17.0, pts + 1e-3 * normal)
    assert np.abs(singular_value_array(geo, 17.0, q[:, 0], q[:, 1])).max() < 1e-9
    assert np.linalg.norm(torus_delta(q, pts), axis=1).max() < 2e-3
