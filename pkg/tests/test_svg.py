import xml.etree.ElementTree as ET

import numpy as np

from nlsadiabatic.svg import Plot, _ticks

NS = "{http://www.w3.org/2000/svg}"


def _parse(plot):
    return ET.fromstring(plot.render())


def test_polyline_breaks_at_nan():
    p = Plot(title="a < b & c")
    p.line([0, 1, 2, np.nan, 4, 5], [0, 1, 0, 1, 0, 1], style="dashed", label="x")
    root = _parse(p)
    lines = root.findall(f".//{NS}polyline")
    assert len(lines) == 2
    assert all(el.get("stroke-dasharray") == "6,4" for el in lines)
    assert any(el.text == "a < b & c" for el in root.iter(f"{NS}text"))


def test_markers_and_size(tmp_path):
    p = Plot(width=300, height=200)
    p.points([0, 1], [0, 1], marker="cross")
    p.points([0.5], [0.5], marker="square")
    p.points([0.2], [0.8])
    root = ET.parse(p.save(tmp_path / "m.svg")).getroot()
    assert root.get("width") == "300" and root.get("height") == "200"
    assert len(root.findall(f".//{NS}path")) == 2
    assert len(root.findall(f".//{NS}circle")) == 1


def test_render_is_deterministic():
    def make():
        p = Plot()
        p.line(np.linspace(0, 1, 50), np.sin(np.linspace(0, 1, 50)))
        return p.render()
    assert make() == make()


def test_degenerate_ranges():
    p = Plot()
    p.line([1, 1], [2, 2])
    _parse(p)
    _parse(Plot())


def test_ticks_cover_range():
    t = _ticks(-0.45, 0.45)
    assert t[0] >= -0.45 and t[-1] <= 0.45 and len(t) >= 3
    assert np.allclose(np.diff(t), t[1] - t[0])
