import itertools
import math

import numpy as np
import pytest

from rprslice import _pointwise as pw
from rprslice.jointspace import (CUSP_TOL, NODE_ANGLE_MIN, TRIPLE_SPREAD, count_solutions_map, detect_cusps,
                                 is_node_pattern, label_segments, precise_roots)
from rprslice.kinematics import Aspect, packed, torus_distance
from rprslice.singularity import singular_value_array


def test_cusp_census(points):
    cusps, _ = points
    assert len(cusps) == 6
    assert sorted(c.distinct_solutions for c in cusps) == [2, 2, 2, 2, 2, 4]
    assert [c.id for c in cusps] == [f"CP{k}" for k in range(1, 7)]


def test_cusps_are_verified_triple_points(geometry, points):
    geo = packed(geometry)
    for c in points[0]:
        assert c.speed < CUSP_TOL
        assert c.triple_spread < TRIPLE_SPREAD
        assert c.aspect in (Aspect.WA1, Aspect.WA2)
        p = c.triple_pose.angles
        assert abs(singular_value_array(geo, 17.0, p[0], p[1])) < 1e-6
        loc = np.array(pw.inverse_kinematics(geo, 17.0, p[0], p[1]))
        assert np.linalg.norm(loc - c.location) < 1e-9
        assert c.distinct_solutions == 1 + len(c.other_poses)
        assert np.linalg.norm(c.axis) == pytest.approx(1.0)


def test_precise_roots_split_the_triple(geometry, points):
    # just inside the wedge the triple splits into three nearby simple roots
    geo = packed(geometry)
    c = points[0][0]
    pose = c.triple_pose.angles
    target = c.location + 1e-4 * c.axis
    seeds = pose + np.array([[0, 0], [1e-2, 0], [-1e-2, 0], [0, 1e-2], [0, -1e-2], [5e-3, 5e-3], [-5e-3, -5e-3]])
    roots = precise_roots(geo, 17.0, target, seeds)
    for r in roots:
        r2, r3 = pw.inverse_kinematics(geo, 17.0, r[0], r[1])
        assert abs(r2 - target[0]) < 1e-12 and abs(r3 - target[1]) < 1e-12


def test_detect_cusps_checks_its_inputs(geometry, singular):
    sing, joint = singular
    with pytest.raises(ValueError):
        detect_cusps(geometry, sing[0], sing[0])


def test_node_census(points):
    _, nodes = points
    assert len(nodes) == 6
    assert sorted(n.distinct_solutions for n in nodes) == [2, 2, 2, 4, 4, 4]
    for n in nodes:
        assert is_node_pattern(n.quadrant_counts), n.quadrant_counts
        assert n.angle > NODE_ANGLE_MIN
        assert n.distinct_solutions == 2 + len(n.other_poses)


def test_node_fold_points_share_the_image(geometry, points):
    geo = packed(geometry)
    for n in points[1]:
        p, q = (s.angles for s in n.pair_poses)
        assert torus_distance(p, q) > 1e-3
        for x in (p, q):
            assert abs(singular_value_array(geo, 17.0, x[0], x[1])) < 1e-8
            assert np.allclose(pw.inverse_kinematics(geo, 17.0, x[0], x[1]), n.location, atol=1e-9)


@pytest.mark.parametrize("n", [4, 6])
def test_node_pattern_rotations(n):
    base = (n, n - 2, n - 4, n - 2)
    for k in range(4):
        assert is_node_pattern(base[k:] + base[:k])
    assert not is_node_pattern((n, n - 2, n - 2, n - 4))
    assert not is_node_pattern((n, n, n, n))
    assert not is_node_pattern((2, 0, -2, 0))


def test_count_map_reference_points(geometry):
    m = count_solutions_map(geometry, 17.0, (10, 20, 12, 25), resolution=40)
    assert m.count_at((15, 15)) == 6
    assert m.count_at((13.25, 20.39)) == 4
    assert all(r.count % 2 == 0 for r in m.regions)
    assert m.adjacency()
    with pytest.raises(ValueError):
        m.count_at((0, 0))
    with pytest.raises(ValueError):
        count_solutions_map(geometry, 17.0, (5, 1, 0, 1))


def test_count_changes_by_two_across_regions(geometry):
    m = count_solutions_map(geometry, 17.0, (0, 50, 0, 50), resolution=60)
    ids = {r.id: r for r in m.regions}
    for a, b in m.adjacency():
        assert abs(ids[a].count - ids[b].count) in (0, 2)


def test_segment_labels(geometry, singular, points):
    sing, joint = singular
    cusps, nodes = points
    labels = label_segments(geometry, joint, sing, cusps, nodes)
    # every cusp and every node branch cuts the single closed curve once
    assert len(labels) == len(cusps) + 2 * len(nodes)
    for s in labels:
        hi, lo = s.counts
        assert hi - lo == 2
        assert set(s.lost_pair) == {Aspect.WA1, Aspect.WA2}
        # the pair meets on the singular curve
        c = s.coalescence.angles
        assert abs(singular_value_array(packed(geometry), 17.0, c[0], c[1])) < 1e-6


def test_loop_around_a_cusp_changes_assembly_mode(geometry, points):
    from rprslice.kinematics import CirclePath, JointCoords, continue_solutions, forward_kinematics
    geo = packed(geometry)
    for c in points[0]:
        phase = math.atan2(c.axis[1], c.axis[0])
        path = CirclePath(c.location, 0.3, phase)
        start = forward_kinematics(geometry, JointCoords(17.0, *path(0.0)))
        res = continue_solutions(geometry, path, start)
        moved = [(i, j) for i, j in enumerate(res.permutation) if j is not None and j != i]
        assert len(moved) == 1
        i, j = moved[0]
        assert start.solutions[i].aspect is start.solutions[j].aspect
        # the moving branch never changes aspect
        poses = np.array(res.branches[i].poses)
        sv = singular_value_array(geo, 17.0, poses[:, 0], poses[:, 1])
        assert np.all(np.sign(sv) == np.sign(sv[0]))


def test_id_order_is_numeric():
    from rprslice.jointspace import CuspPoint, name_points
    from rprslice.kinematics import SlicePose
    pose = SlicePose(0, 0, 17)
    cusps = [CuspPoint("", np.array([float(k), 0.0]), "S0", 0.0, 0.0, pose, Aspect.WA1, 0.0, np.array([1.0, 0]),
                       0.0, 2, np.zeros((1, 2))) for k in range(12)]
    name_points(cusps, [])
    assert [c.id for c in cusps] == [f"CP{k}" for k in range(1, 13)]
    assert [c.location[0] for c in cusps] == sorted(c.location[0] for c in cusps)


def test_all_pairs_of_quadrant_counts_differ_by_two(points):
    for n in points[1]:
        q = n.quadrant_counts
        for a, b in itertools.pairwise(q + q[:1]):
            assert abs(a - b) == 2
