import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erase.metrics import RegionSummary
from erase.montage import default_montage
from erase.report import (bar_chart_svg, default_virtual_positions, fmt, idw, read_region_summary_csv,
                          topography_svg, write_region_summary_csv)

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def montage():
    return default_montage()


def test_bar_chart_no_bars_when_nothing_significant(montage):
    root = ET.fromstring(bar_chart_svg({"C3": 0.0, "Cz": 0.0, "C4": 0.0}, montage))
    assert not [e for e in root.iter(f"{SVG}rect") if e.get("class") == "bar"]


def test_bar_chart_colours_by_region(montage):
    root = ET.fromstring(bar_chart_svg({"C3": 0.8, "Cz": 0.0, "C4": -0.5}, montage))
    bars = {e.get("data-label"): e for e in root.iter(f"{SVG}rect") if e.get("class") == "bar"}
    assert set(bars) == {"C3", "C4"}
    assert bars["C3"].get("fill") == "red" and bars["C4"].get("fill") == "blue"
    assert float(bars["C3"].get("height")) > float(bars["C4"].get("height")) > 0


def test_topography_masks_non_significant(montage):
    values = {"C3": 1.0, "C4": 2.0, "Cz": -1.0}
    sig = {"C3": True, "C4": False, "Cz": True}
    root = ET.fromstring(topography_svg(values, sig, montage, "t", n_virtual=3))
    shown = {e.get("data-label") for e in root.iter(f"{SVG}circle") if e.get("class") == "significant"}
    masked = {e.get("data-label") for e in root.iter(f"{SVG}circle") if e.get("class") == "masked"}
    assert shown == {"C3", "Cz"} and masked == {"C4"}
    assert len([e for e in root.iter(f"{SVG}circle") if e.get("class") == "virtual"]) == 3
    assert root.find(f".//{SVG}polygon[@id='ha-outline']") is not None
    # the masked value must not drive the colour scale
    assert "+/-1" in "".join(root.itertext())


def test_topography_deterministic(montage):
    values = {l: float(i) for i, l in enumerate(montage.labels[:20])}
    sig = {l: i % 2 == 0 for i, l in enumerate(montage.labels[:20])}
    assert topography_svg(values, sig, montage) == topography_svg(values, sig, montage)


def test_topography_needs_montage_electrodes(montage):
    with pytest.raises(ValueError):
        topography_svg({"EMG1": 1.0}, {"EMG1": True}, montage)


def test_idw_exact_at_points_and_bounded():
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]])
    vals = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(idw(pts, vals, pts), vals)
    grid = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    est = idw(pts, vals, grid)
    assert est.min() >= vals.min() - 1e-12 and est.max() <= vals.max() + 1e-12


def test_virtual_positions_outside_head():
    p = default_virtual_positions(8)
    assert p.shape == (8, 2)
    np.testing.assert_allclose(np.hypot(*p.T), 1.08)
    assert np.all(p[:, 1] < 0)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(min_value=-1e300, max_value=1e300))
def test_fmt_round_trips_to_ten_digits(x):
    assert float(fmt(x)) == pytest.approx(x, rel=1e-9, abs=0)


def test_fmt_special_values():
    assert fmt(None) == "" and fmt(True) == "1" and fmt(np.int64(3)) == "3"
    assert fmt(float("nan")) == "nan" and fmt(-np.inf) == "-inf"


def test_region_summary_csv_round_trip(tmp_path):
    rs = RegionSummary(0.25, 0.1, 0.02, 12, 10, 83.33333333333333, 0.7, 3, 0.68, 1)
    write_region_summary_csv(tmp_path / "r.csv", rs, {"condition": "erase"})
    back = read_region_summary_csv(tmp_path / "r.csv")
    assert back["n_sce"] == "12" and back["condition"] == "erase"
    assert float(back["sce_proportion_ha"]) == pytest.approx(83.3333333, rel=1e-9)
    empty = RegionSummary(0.2, 0.1, 0.5, 0, 0, None, 0.0, 0, 0.0, 0)
    write_region_summary_csv(tmp_path / "e.csv", empty)
    assert read_region_summary_csv(tmp_path / "e.csv")["sce_proportion_ha"] == ""
