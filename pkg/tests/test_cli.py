import json
import math

import numpy as np
import pytest

from rprslice.atlas import SliceAtlas, analyze, load_atlas, save_atlas
from rprslice.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from rprslice.model import REFERENCE_CONFIG_TEXT, Config, SliceConfig, load_config
from rprslice.plot import FIGURES, UnknownFigure, draw, render


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fk_lists_six_modes(capsys):
    code, out, _ = run(capsys, "fk", "--rho", "17", "15", "15")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "count: 6" and len(lines) == 7
    assert sum("aspect=WA1" in ln for ln in lines) == 3


def test_fk_unreachable_is_not_an_error(capsys):
    code, out, _ = run(capsys, "fk", "--rho", "17", "1000", "15")
    assert code == EXIT_OK and out.strip() == "count: 0"


def test_fk_then_ik_round_trip(capsys):
    code, out, _ = run(capsys, "fk", "--rho", "17", "13.25", "20.39", "--json")
    data = json.loads(out)
    assert code == EXIT_OK and data["count"] == 4
    for s in data["solutions"]:
        code, out, _ = run(capsys, "ik", "--pose", repr(s["theta1"]), repr(s["alpha"]), "--json")
        j = json.loads(out)
        assert abs(j["rho2"] - 13.25) < 1e-9 and abs(j["rho3"] - 20.39) < 1e-9


def test_ik_degrees(capsys):
    code, out, _ = run(capsys, "ik", "--pose", "0", "0", "--degrees")
    assert code == EXIT_OK
    r1, r2, r3 = map(float, out.split()[1:])
    assert r1 == 17.0 and r2 == pytest.approx(34.04 - 15.91)


@pytest.mark.parametrize("argv, code", [
    (["fk", "--rho", "17", "15"], EXIT_USAGE),
    (["frobnicate"], EXIT_USAGE),
    (["ik"], EXIT_USAGE),
    (["analyze"], EXIT_USAGE),
    (["fk", "--rho", "17", "-1", "15"], EXIT_VALIDATION),
    (["ik", "--pose", "0", "0", "--rho", "0"], EXIT_VALIDATION),
    (["fk", "--rho", "17", "15", "15", "--config", "/nonexistent/geometry.cfg"], EXIT_VALIDATION),
], ids=["fk-two-values", "unknown-command", "ik-no-pose", "analyze-no-out", "negative-leg", "zero-rho1",
        "missing-config"])
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(REFERENCE_CONFIG_TEXT.replace("d1 = 17.04", "d1 = 99"))
    code, _, err = run(capsys, "fk", "--rho", "17", "15", "15", "--config", str(cfg))
    assert code == EXIT_VALIDATION and "d1" in err


def test_plot_needs_an_atlas(tmp_path, capsys):
    assert run(capsys, "plot", "--out", str(tmp_path))[0] == EXIT_VALIDATION
    assert run(capsys, "plot", "--out", str(tmp_path), "--figure", "nope")[0] == EXIT_USAGE


def test_plot_marks_match_points_table(atlas_dir):
    tables = load_atlas(atlas_dir)
    fig = draw(tables, "workspace")
    try:
        drawn = {}
        for coll in fig.axes[0].collections:
            drawn[coll.get_label()] = np.asarray(coll.get_offsets())
    finally:
        import matplotlib.pyplot as plt
        plt.close(fig)
    for kind in ("TRIPLE_TANGENCY", "CHAR_CUSP", "SINGULAR_CROSSING", "CHAR_CROSSING"):
        rows = np.array([[p["x"], p["y"]] for p in tables.points if p["kind"] == kind])
        got = drawn[kind.lower().replace("_", " ")]
        assert np.array_equal(np.sort(got, axis=0), np.sort(rows, axis=0))
    counts = {k: sum(p["kind"] == k for p in tables.points) for k in ("TRIPLE_TANGENCY", "CHAR_CUSP",
                                                                         "SINGULAR_CROSSING", "CHAR_CROSSING")}
    assert counts == {"TRIPLE_TANGENCY": 6, "CHAR_CUSP": 8, "SINGULAR_CROSSING": 12, "CHAR_CROSSING": 6}


def test_plot_command_writes_every_figure(atlas_dir, capsys):
    for name in FIGURES:
        code, out, _ = run(capsys, "plot", "--out", str(atlas_dir), "--figure", name)
        assert code == EXIT_OK
        text = (atlas_dir / f"{name}.svg").read_text()
        assert text.startswith("<?xml") and "<svg" in text


def test_manifest_records_the_run(atlas_dir, reference_config):
    m = json.loads((atlas_dir / "manifest.json").read_text())
    assert m["config_hash"] == reference_config.text_hash
    assert m["config_text"] == REFERENCE_CONFIG_TEXT
    assert m["census"]["passed"] and m["slice"]["rho1"] == 17.0
    assert set(m["tables"]) == {"curves.csv", "points.csv", "segments.csv", "regions.csv", "countmap.csv"}


def test_empty_atlas_plots_empty_axes(tmp_path, reference_config):
    empty = SliceAtlas(reference_config, [], [], [], [], [], None, [], [], {}, {})
    save_atlas(empty, tmp_path)
    tables = load_atlas(tmp_path)
    assert not tables.curves and not tables.points and len(tables.countmap) == 0
    for name in FIGURES:
        fig = draw(tables, name)
        assert not fig.axes[0].lines and not fig.axes[0].collections
        import matplotlib.pyplot as plt
        plt.close(fig)
        render(tables, name, tmp_path / f"{name}.svg")
    with pytest.raises(UnknownFigure):
        draw(tables, "nope")


def test_analysis_is_byte_identical(tmp_path):
    base = load_config(REFERENCE_CONFIG_TEXT)
    cfg = Config(base.geometry, SliceConfig(17.0, 256), base.text_hash, base.text)
    dirs = []
    for k in range(2):
        atlas = analyze(cfg, region_resolution=48, region_grid=64)
        dirs.append(save_atlas(atlas, tmp_path / f"run{k}"))
    for name in ("curves.csv", "points.csv", "segments.csv", "regions.csv", "countmap.csv", "manifest.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def test_verify_mismatch_exits_numerical(tmp_path, capsys, monkeypatch):
    import rprslice.verify as v
    monkeypatch.setitem(v.REFERENCE_CENSUS, "cusps", 7)
    code, out, _ = run(capsys, "verify", "--grid", "256")
    assert code == EXIT_NUMERICAL and "census: FAIL" in out
    assert math.isfinite(len(out))
