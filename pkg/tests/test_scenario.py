import csv
import io
import json
import math

import pytest

from cvqkd_loia import scenario as sc
from cvqkd_loia.errors import ConfigError


def base_cfg(**kw):
    cfg = {"schema_version": 1, "name": "t", "constellation": "qpsk", "V_A": 0.456, "xi_e": 0.01,
           "beta": 0.95, "V_k": [0.0, 2e-3], "distances": [0.0, 5.0, 10.0]}
    cfg.update(kw)
    return {k: v for k, v in cfg.items() if v is not None}


def test_parse_defaults():
    s = sc.parse_scenario(base_cfg())
    assert s.xi_kind == "xi_e" and s.xi_values == (0.01,)
    assert s.fluctuation == "uniform" and s.iab_variant == "discrete"
    assert s.constellation.size == 4


def test_range_grid_has_no_drift():
    s = sc.parse_scenario(base_cfg(distances=None, d_start=0, d_stop=40, d_step=0.1))
    assert len(s.distances) == 401
    assert s.distances[-1] == 40.0
    assert s.distances[123] == 12.3


@pytest.mark.parametrize("bad", [
    {"schema_version": 2},
    {"schema_version": None},
    {"colour": "red"},
    {"V_k": []},
    {"V_k": [-1e-3]},
    {"V_k": None},
    {"xi_c": 0.01},
    {"xi_e": None},
    {"xi_e": [-0.1]},
    {"beta": 1.5},
    {"beta": None},
    {"distances": [0.0, 5.0, 5.0]},
    {"distances": [10.0, 5.0]},
    {"distances": []},
    {"d_start": 0},
    {"distances": None},
    {"fluctuation": "lognormal"},
    {"iab_variant": "shannon"},
    {"V_k": [0.2]},
    {"constellation": "hexagonal"},
    {"seed": -1},
    {"dim": 1},
    {"tol": 0},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        sc.parse_scenario(base_cfg(**bad))


def test_min_vk_config_may_omit_vk():
    s = sc.parse_scenario(base_cfg(V_k=None), require_vk=False)
    assert s.V_k == (0.0,)


def test_to_config_roundtrip():
    s = sc.parse_scenario(base_cfg(xi_e=[0.007, 0.01], dim=20))
    assert sc.parse_scenario(s.to_config()) == s
    assert s.with_overrides(seed=5).seed == 5


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        sc.load_config(tmp_path / "missing.yaml")
    p = tmp_path / "bad.yaml"
    p.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        sc.load_config(p)
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        sc.load_config(p)


def test_mc_config():
    cfg = {"schema_version": 1, "constellation": "qpsk", "V_A": 0.456, "V_k": 1e-3, "N": 1000}
    out = sc.parse_mc_config(cfg)
    assert out["V_k"] == [1e-3] and out["N"] == 1000
    with pytest.raises(ConfigError):
        sc.parse_mc_config(dict(cfg, raw_model="drift"))
    with pytest.raises(ConfigError):
        sc.parse_mc_config(dict(cfg, trials=1))


@pytest.fixture(scope="module")
def sweep():
    return sc.run_sweep(sc.parse_scenario(base_cfg(xi_e=[0.01, 0.5])))


def test_sweep_is_complete(sweep):
    s = sweep.scenario
    assert len(sweep.rows) == len(s.xi_values) * len(s.distances) * len(s.V_k)
    assert all(len(r) == len(sc.SWEEP_COLUMNS) for r in sweep.rows)


def test_zero_attack_rows_agree(sweep):
    for r in sweep.rows:
        row = dict(zip(sweep.columns, r))
        if row["V_k"] == 0.0 and row["status"] == "ok":
            assert row["estimated_rate"] == row["practical_rate"]
            assert row["T_e"] == row["T_c"] and row["xi_c"] == row["xi_e"]


def test_attack_rows_ordered(sweep):
    for r in sweep.rows:
        row = dict(zip(sweep.columns, r))
        if row["V_k"] > 0:
            assert row["practical_rate"] < row["estimated_rate"]
            assert row["xi_c"] > row["xi_e"]


def test_csv_format(sweep):
    text = sweep.to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == sc.SWEEP_COLUMNS
    assert len(rows) == len(sweep.rows) + 1
    j = sc.SWEEP_COLUMNS.index("estimated_rate")
    for parsed, orig in zip(rows[1:], sweep.rows):
        assert float(parsed[j]) == orig[j]  # 17 significant digits round-trip exactly


def test_sweep_independent_of_jobs():
    s = sc.parse_scenario(base_cfg(distances=[0.0, 3.0, 7.0, 12.0]))
    assert sc.run_sweep(s, jobs=1).to_csv() == sc.run_sweep(s, jobs=2).to_csv()


def test_xi_c_sweep_marks_infeasible():
    s = sc.parse_scenario(base_cfg(xi_e=None, xi_c=[0.0], V_k=[2e-3], distances=[0.0, 10.0]))
    res = sc.run_sweep(s)
    # a noiseless practical channel maps to a negative estimate once V_k > 0
    assert set(res.column("status")) == {"infeasible"}
    assert all(math.isnan(x) for x in res.column("estimated_rate"))


def test_xi_c_sweep_inverts_xi_e_sweep():
    s = sc.parse_scenario(base_cfg(V_k=[2e-3], distances=[10.0]))
    row = dict(zip(sc.SWEEP_COLUMNS, sc.run_sweep(s).rows[0]))
    s2 = sc.parse_scenario(base_cfg(xi_e=None, xi_c=row["xi_c"], V_k=[2e-3], distances=[10.0]))
    row2 = dict(zip(sc.SWEEP_COLUMNS, sc.run_sweep(s2).rows[0]))
    assert row2["xi_e"] == pytest.approx(0.01, abs=1e-12)
    assert row2["practical_rate"] == pytest.approx(row["practical_rate"], abs=1e-12)
    assert row2["estimated_rate"] == pytest.approx(row["estimated_rate"], abs=1e-10)


def test_min_vk_sweep_rows():
    s = sc.parse_scenario(base_cfg(V_k=None, distances=[0.0, 10.0, 30.0]), require_vk=False)
    res = sc.run_min_vk_sweep(s)
    status = res.column("status")
    assert status == ["ok", "ok", "dead"]
    m = res.column("min_vk")
    assert m[0] > m[1] > 0 and m[2] == 0.0
    assert all(res.column("practical_dead"))
    assert res.column("estimated_alive") == [True, True, False]


def test_min_vk_requires_xi_e():
    s = sc.parse_scenario(base_cfg(xi_e=None, xi_c=0.01))
    with pytest.raises(ConfigError):
        sc.run_min_vk_sweep(s)


def test_write_result(sweep, tmp_path):
    csv_path, man_path = sc.write_result(sweep, tmp_path)
    assert csv_path.name == "t_sweep.csv"
    man = json.loads(man_path.read_text())
    assert man["csv"] == "t_sweep.csv"
    assert [c["name"] for c in man["columns"]] == list(sc.SWEEP_COLUMNS)
    assert all(c["description"] for c in man["columns"])
    assert man["config"]["xi_e"] == [0.01, 0.5]
    assert man["plot"]["x"] == "d_km"
    assert csv_path.read_text() == sweep.to_csv()
