import json
import math
from pathlib import Path

import numpy as np
import pytest

import gaussfind as gf

FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def test_geometry_and_field_numerics():
    assert gf.clamp_coordinate(-3.0, 10) == 0.0
    assert gf.clamp_coordinate(42.0, 10) == 9.0
    assert abs(gf.rho_from_theta(math.pi / 4, 20, 10) - 0.75) <= 1e-12
    g = {"mu_x": 50, "mu_y": 50, "sigma_x": 10, "sigma_y": 10, "theta": 0}
    assert abs(gf.pdf(50, 50, g) - 1 / (200 * math.pi)) <= 1e-12
    field = gf.rasterize(g, 100, 80)
    assert field.shape == (80, 100)
    assert np.unravel_index(np.argmax(field), field.shape) == (50, 50)
    assert abs(field.sum() - 1.0) < 1e-2


def test_compose_max_matches_numpy():
    rng = np.random.default_rng(3)
    fields = [rng.random((7, 9)) for _ in range(3)]
    np.testing.assert_array_equal(gf.compose_max(fields), np.maximum.reduce(fields))
    with pytest.raises(gf.GaussfindError) as err:
        gf.compose_max([np.zeros((2, 2)), np.zeros((3, 2))])
    assert err.value.code == "DimensionMismatch"


def test_parse_validate_render_report():
    raw = (FIXTURES / "replay" / "phantom_ct_chest_oob.txt").read_text()
    parsed = gf.parse_response(raw, 512, 512)
    assert parsed["strategy"] in {"DirectParse", "FencedBlock", "BalancedBraceScan"}
    validated = gf.validate_analysis(parsed["response"])
    assert validated["log"]["entries"], "out-of-bounds input must be corrected"
    for f in validated["response"]["findings"]:
        b, c = f["bbox"], f["center"]
        assert 0 <= b["x_min"] <= c["x"] <= b["x_max"] <= 511
        assert 0 <= b["y_min"] <= c["y"] <= b["y_max"] <= 511

    pixels, meta = gf.load_image((FIXTURES / "images" / "phantom_ct_chest.png").read_bytes(), "phantom_ct_chest.png")
    assert pixels.shape == (512, 512, 3)
    assert meta["width"] == 512
    layers = gf.render_all(pixels, validated["response"], alpha=0.0)
    np.testing.assert_array_equal(layers["overlay"], pixels)
    assert layers["sketch"].shape == (512, 512, 4)
    assert layers["field"].max() == 1.0

    report = gf.build_report(validated["response"], validated["log"], spacing=(0.5, 0.5))
    md = gf.export_report(report, "md")
    assert "## Finding 1" in md and "mm" in md
    assert gf.export_report(report, "json").startswith("{")


def test_unparseable_raises_typed_error():
    with pytest.raises(gf.GaussfindError) as err:
        gf.parse_response("The image shows nothing in particular.", 64, 64)
    assert err.value.code == "Unparseable"


def test_prompt_is_deterministic():
    assert gf.build_prompt(512, 512) == gf.build_prompt(512, 512)
    assert "x in [0, 511]" in gf.build_prompt(512, 512)


def test_analyze_replay_writes_layout(tmp_path):
    out = tmp_path / "session"
    result = gf.analyze(FIXTURES / "images" / "phantom_mri_brain.png", out, backend="replay",
                        fixture=FIXTURES / "replay" / "phantom_mri_brain.txt")
    assert len(result["analysis"]["findings"]) == 1
    expected = {"original.png", "raw.txt", "analysis.json", "validation.json", "sketch.png", "overlay.png",
                "heatmap.png", "composite.png", "report.json", "report.md", "report.html"}
    assert {p.name for p in out.iterdir()} == expected
    assert json.loads((out / "report.json").read_text()) == result["report"]

    with pytest.raises(gf.GaussfindError) as err:
        gf.analyze(FIXTURES / "images" / "phantom_mri_brain.png", tmp_path / "x", backend="replay",
                   fixture=FIXTURES / "replay" / "missing.txt")
    assert err.value.code == "FixtureMissing"
