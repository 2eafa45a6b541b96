"""The numba kernels and the numpy fallback must agree."""
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from rprslice._kernels import MAX_SOLUTIONS, get_backend
from rprslice.kinematics import NEWTON_TOL, dedupe_angles, packed, torus_distance

nb = get_backend("numba")
npb = get_backend("numpy")


@pytest.fixture(scope="module")
def geo(geometry):
    return packed(geometry)


@pytest.fixture(scope="module")
def joints():
    rng = np.random.default_rng(7)
    return np.column_stack([rng.uniform(0, 50, 40), rng.uniform(0, 50, 40)])


def test_fk_raw_agrees(geo):
    for r2, r3 in ((15.0, 15.0), (13.25, 20.39), (30.0, 10.0), (1000.0, 1.0)):
        a = np.full((MAX_SOLUTIONS, 2), np.nan)
        b = np.full((MAX_SOLUTIONS, 2), np.nan)
        nb.fk_raw(geo, 17.0, r2, r3, 1024, NEWTON_TOL, 50, a)
        npb.fk_raw(geo, 17.0, r2, r3, 1024, NEWTON_TOL, 50, b)
        a, b = dedupe_angles(a, 1e-6), dedupe_angles(b, 1e-6)
        assert len(a) == len(b)
        for p in a:
            assert torus_distance(p, b).min() < 1e-9


def test_fk_batch_and_counts_agree(geo, joints):
    ra, _ = nb.fk_raw_batch(geo, 17.0, joints, 1024, NEWTON_TOL, 50)
    rb, _ = npb.fk_raw_batch(geo, 17.0, joints, 1024, NEWTON_TOL, 50)
    for a, b in zip(ra, rb):
        a, b = dedupe_angles(a, 1e-6), dedupe_angles(b, 1e-6)
        assert len(a) == len(b)
        for p in a:
            assert torus_distance(p, b).min() < 1e-9
    assert np.array_equal(nb.fk_count_batch(geo, 17.0, joints, 1024), npb.fk_count_batch(geo, 17.0, joints, 1024))


def test_singular_grid_agrees(geo):
    t = np.linspace(0, 2 * math.pi, 33)
    a = nb.singular_value_grid(geo, 17.0, t, t)
    b = npb.singular_value_grid(geo, 17.0, t, t)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_environment_selects_backend():
    code = "from rprslice import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, RPRSLICE_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["RPRSLICE_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert bad.returncode != 0 and "RPRSLICE_BACKEND" in bad.stderr
