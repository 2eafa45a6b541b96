import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from rprslice.kinematics import Aspect  # noqa: E402
from rprslice.model import REFERENCE_CONFIG_TEXT, SliceConfig, load_config, reference_geometry  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, title: str, passed: bool, detail: str = "") -> str:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def geometry():
    return reference_geometry()


@pytest.fixture(scope="session")
def reference_config():
    return load_config(REFERENCE_CONFIG_TEXT)


@pytest.fixture(scope="session")
def slice512():
    return SliceConfig(17.0, 512)


@pytest.fixture(scope="session")
def singular(geometry, slice512):
    from rprslice.singularity import map_curve_to_jointspace, trace_singular_curves
    sing = trace_singular_curves(geometry, slice512)
    return sing, [map_curve_to_jointspace(geometry, c) for c in sing]


@pytest.fixture(scope="session")
def points(geometry, singular):
    from rprslice.jointspace import detect_cusps, detect_nodes, name_points
    sing, joint = singular
    cusps = [c for j, s in zip(joint, sing) for c in detect_cusps(geometry, j, s)]
    nodes = detect_nodes(geometry, joint, sing, cusps)
    name_points(cusps, nodes)
    return cusps, nodes


@pytest.fixture(scope="session")
def char_curves(geometry, slice512, singular):
    from rprslice.charsurf import characteristic_curves
    sing, _ = singular
    cache: dict = {}
    return [c for asp in (Aspect.WA1, Aspect.WA2)
            for c in characteristic_curves(geometry, slice512, sing, asp, _cache=cache)]


@pytest.fixture(scope="session")
def atlas(reference_config):
    """Full analysis of the reference slice (about 40 s, shared by all tests)."""
    from rprslice.atlas import analyze
    return analyze(reference_config)


@pytest.fixture(scope="session")
def atlas_dir(atlas, tmp_path_factory):
    from rprslice.atlas import save_atlas
    return save_atlas(atlas, tmp_path_factory.mktemp("atlas"))
