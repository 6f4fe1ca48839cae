import json

import numpy as np
import pytest

from kvnmd.cli import main, resolve_config, build_parser
from kvnmd.io import (ConfigError, config_hash, dump_config, load_state, parse_config,
                      parse_config_text, read_csv, save_state, state_to_csv, write_json)
from kvnmd.phase_space import KvnState, make_grid


def _state(rng):
    g = make_grid(1, 2, 3, 4.0, 2, 3.0)
    amp = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    return KvnState(g, amp)


def test_snapshot_roundtrip(tmp_path, rng):
    st = _state(rng)
    path = save_state(tmp_path / "s.kvns", st)
    back = load_state(path)
    assert back.grid == st.grid
    np.testing.assert_array_equal(back.amp, st.amp)
    raw = path.read_bytes()
    (tmp_path / "t.kvns").write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_state(tmp_path / "t.kvns")
    (tmp_path / "u.kvns").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_state(tmp_path / "u.kvns")


def test_state_csv(tmp_path, rng):
    st = _state(rng)
    header, rows = read_csv(state_to_csv(tmp_path / "s.csv", st))
    assert header == ["q1", "p1", "xi", "re", "im"]
    assert len(rows) == st.grid.total_dim
    assert float(rows[1][4]) == st.amp.ravel()[1].imag


def test_config_grammar(tmp_path):
    cfg = parse_config_text("# header\nnq = 16\n\ndt=0.05  # step\nnq = 32\n")
    assert cfg == {"nq": "32", "dt": "0.05"}
    with pytest.raises(ConfigError):
        parse_config_text("just words")
    with pytest.raises(ConfigError):
        parse_config_text("9x = 1")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.cfg")
    assert parse_config_text(dump_config(cfg)) == cfg
    assert config_hash({"a": 1}) == config_hash({"a": "1"}) != config_hash({"a": 2})


def test_json_handles_numpy(tmp_path):
    p = write_json(tmp_path / "x.json", {"a": np.arange(3), "b": np.float64(1.5), "c": 2j})
    assert json.loads(p.read_text()) == {"a": [0, 1, 2], "b": 1.5, "c": [0.0, 2.0]}


def test_config_precedence(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("nq = 16\ndt = 0.05\n")
    args = build_parser().parse_args(["vacf", "--config", str(cfgfile), "--nq", "8"])
    cfg = resolve_config("vacf", args)
    assert cfg["nq"] == 8 and cfg["dt"] == 0.05 and cfg["np"] == 32


def test_resources_qsp_prints_total(tmp_path, capsys):
    rc = main(["resources", "--qsp", "--np", "10", "--nxi", "4", "--eps", "1e-6", "--dt", "0.01",
               "--out", str(tmp_path)])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "62161"
    assert json.loads((tmp_path / "qsp_cost.json").read_text())["cx_count"] == 62161
    meta = json.loads((tmp_path / "resources_meta.json").read_text())
    assert {"config", "config_hash", "seed", "versions", "timestamp"} <= set(meta)


def test_resources_tables(tmp_path):
    assert main(["resources", "--table", "--nmax", "8", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "nve_cx.csv")
    assert header == ["n_total", "model", "cx_count"]
    assert ["4", "nve", "35"] in rows and len(rows) == 6
    header, rows = read_csv(tmp_path / "h3_cx.csv")
    assert {r[1] for r in rows} == {"pauli", "qsd", "qsp_best"}


def test_exit_codes(tmp_path, capsys):
    assert main(["nosuch"]) == 1
    assert main(["vacf", "--nq", "12", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    assert main(["vacf", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert main(["vacf", "--nq", "64", "--np", "64", "--budget", "1000000", "--out", str(tmp_path)]) == 2
    assert main(["stability", "--axis", "N_p", "--values", "64", "--budget", "1000",
                 "--out", str(tmp_path)]) == 2
    assert main(["mlae", "--out", str(tmp_path)]) == 1


def test_vacf_schema_and_env_output(tmp_path, monkeypatch):
    monkeypatch.setenv("KVNMD_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["vacf", "--nq", "8", "--np", "8", "--steps", "20"]) == 0
    header, rows = read_csv(tmp_path / "env" / "cvv_nq8.csv")
    assert header == ["t", "c"] and len(rows) == 21
    assert float(rows[0][1]) == 1.0


def test_gk_summary_has_extrapolation(tmp_path):
    assert main(["gk", "--nq", "8", "--np", "8", "--manc", "5,6,7", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "gk_summary.json").read_text())
    assert "D_inf" in summary and np.isfinite(summary["D_inf"])
    header, rows = read_csv(tmp_path / "dbart_vs_manc.csv")
    assert header == ["m_anc", "tau", "P0", "D_bart"] and len(rows) == 3


def test_qpe_and_validate(tmp_path, capsys):
    assert main(["qpe", "--manc", "3", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["abs_diff"] < 1e-10
    assert main(["validate", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert all(v < 1e-10 for v in rep.values())


def test_mlae_outputs_are_reproducible(tmp_path):
    args = ["mlae", "--theta", "0.07", "--L", "4", "--seeds", "20", "--seed", "3",
            "--naive-max-queries", "500"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "rmse_vs_queries.csv").read_bytes()
    assert a == (tmp_path / "b" / "rmse_vs_queries.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a" / "rmse_vs_queries.csv")
    assert header == ["schedule_id", "N_queries", "rmse", "slope"]
    side = json.loads((tmp_path / "a" / "rmse_vs_queries.json").read_text())
    assert "mlae_slope" in side and len(side["per_seed_final"]) == 20


def test_stability_csv(tmp_path):
    rc = main(["stability", "--values", "4,6", "--dt-set", "0.1", "--tsim", "1", "--nq", "8",
               "--np", "16", "--nxi", "16", "--workers", "2", "--out", str(tmp_path)])
    assert rc == 0
    header, rows = read_csv(tmp_path / "drift_scan.csv")
    assert header == ["param", "dt", "delta_T"] and len(rows) == 2
