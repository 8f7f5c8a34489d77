import json

import numpy as np

from rydsta import reporting


def test_csv_header_and_format(tmp_path):
    p = tmp_path / "x.csv"
    reporting.write_csv(p, ["scenario = s", "units = rad/s, s"], {"t": [0.0, 1.5], "P": np.array([1.0, 1e-20])})
    assert p.read_text().splitlines() == [
        "# scenario = s",
        "# units = rad/s, s",
        "t,P",
        "0.000000000000e+00,1.000000000000e+00",
        "1.500000000000e+00,1.000000000000e-20",
    ]


def test_table_csv(tmp_path):
    p = tmp_path / "t.csv"
    reporting.write_table_csv(p, ["h"], ["a", "b"], ["a", "b"], np.eye(2))
    lines = p.read_text().splitlines()
    assert lines[1] == "out\\in,a,b"
    assert lines[2] == "a,1.000000000000e+00,0.000000000000e+00"


def test_json_scenario_first_and_jsonable(tmp_path):
    p = tmp_path / "r.json"
    reporting.write_json(p, {"scenario": "s"}, {"value": np.float64(0.5), "arr": np.arange(2), "flag": np.bool_(True)})
    d = json.loads(p.read_text())
    assert list(d)[0] == "scenario"
    assert d["scenario"] == {"scenario": "s"}
    assert d["value"] == 0.5 and d["arr"] == [0, 1] and d["flag"] is True


def test_png_is_deterministic(tmp_path):
    t = np.linspace(0, 1e-6, 50)
    curves = {"P_11": np.cos(t * 1e6) ** 2, "P_1m": np.sin(t * 1e6) ** 2}
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    reporting.plot_populations(a, ["scenario = s"], t, curves)
    reporting.plot_populations(b, ["scenario = s"], t, curves)
    assert a.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert a.read_bytes() == b.read_bytes()
