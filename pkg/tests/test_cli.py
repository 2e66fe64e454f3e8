import json
from pathlib import Path

import pytest

from tokengossip.cli import main
from tokengossip.graph import load_graph


def run_cli(args, monkeypatch, tmp_path):
    monkeypatch.setenv("TOKENGOSSIP_OUT", str(tmp_path))
    monkeypatch.chdir(tmp_path)
    return main(args)


def test_gen_torus(tmp_path, monkeypatch, capsys):
    rc = run_cli(["gen", "--kind", "torus", "--side", "8", "--dim", "2",
                  "--out", str(tmp_path / "t.graph")], monkeypatch, tmp_path)
    assert rc == 0
    g = load_graph(tmp_path / "t.graph")
    assert g.n == 64 and g.m == 128
    out = capsys.readouterr().out
    assert "n=64" in out and "m=128" in out


def test_gen_deterministic(tmp_path, monkeypatch):
    for name in ("a.graph", "b.graph"):
        rc = run_cli(["gen", "--kind", "rgg", "--n", "100", "--seed", "7",
                      "--out", str(tmp_path / name)], monkeypatch, tmp_path)
        assert rc == 0
    assert (tmp_path / "a.graph").read_bytes() == (tmp_path / "b.graph").read_bytes()


def test_gen_exit_codes(tmp_path, monkeypatch):
    # unreachable radius: connectivity failure is exit 3
    rc = run_cli(["gen", "--kind", "rgg", "--n", "64", "--seed", "1",
                  "--radius", "0.01", "--out", str(tmp_path / "x.graph")],
                 monkeypatch, tmp_path)
    assert rc == 3
    rc = run_cli(["gen", "--kind", "torus", "--side", "2", "--dim", "2",
                  "--out", str(tmp_path / "y.graph")], monkeypatch, tmp_path)
    assert rc == 2
    with pytest.raises(SystemExit) as exc:
        run_cli(["gen", "--kind", "dodecahedron", "--out", "z"], monkeypatch, tmp_path)
    assert exc.value.code == 2


def test_run_summary_line(tmp_path, monkeypatch, capsys):
    rc = run_cli(["gen", "--kind", "ring", "--n", "8",
                  "--out", str(tmp_path / "r.graph")], monkeypatch, tmp_path)
    assert rc == 0
    capsys.readouterr()
    rc = run_cli(["run", "--proto", "crw", "--graph", str(tmp_path / "r.graph"),
                  "--fusion", "sum", "--trials", "20", "--seed", "1"],
                 monkeypatch, tmp_path)
    assert rc == 0
    fields = capsys.readouterr().out.strip().split()
    assert len(fields) == 3
    [float(f) for f in fields]  # tau_mean eta_mean eta_per_node


def test_run_invalid_proto_exits_2(tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        run_cli(["run", "--proto", "teleport", "--kind", "ring", "--n", "4"],
                monkeypatch, tmp_path)
    assert exc.value.code == 2


def test_run_two_phase_consensus(tmp_path, monkeypatch, capsys):
    rc = run_cli(["run", "--proto", "two_phase", "--kind", "grid2d", "--side", "4",
                  "--gamma", "log_n", "--trials", "5", "--seed", "3"],
                 monkeypatch, tmp_path)
    assert rc == 0  # exactness is verified before exit 0


def test_run_gossip(tmp_path, monkeypatch, capsys):
    rc = run_cli(["run", "--proto", "gossip", "--kind", "ring", "--n", "16",
                  "--eps", "0.2", "--trials", "2", "--seed", "2"],
                 monkeypatch, tmp_path)
    assert rc == 0
    fields = capsys.readouterr().out.strip().split()
    assert len(fields) == 3


def test_run_writes_traces_and_manifest(tmp_path, monkeypatch):
    out = "rundir"
    rc = run_cli(["run", "--proto", "crw", "--kind", "torus", "--side", "3",
                  "--trials", "3", "--seed", "5", "--out", out],
                 monkeypatch, tmp_path)
    assert rc == 0
    d = tmp_path / out
    assert (d / "trial_0000.csv").exists()
    assert (d / "trial_0000_nodes.csv").exists()
    assert (d / "trial_0002.json").exists()
    manifest = json.loads((d / "run_manifest.json").read_text())
    assert manifest["tool_version"]
    assert manifest["master_seed"] == 5
    assert manifest["config_hash"]


def test_analyze_resistance_ring4(tmp_path, monkeypatch, capsys):
    rc = run_cli(["gen", "--kind", "ring", "--n", "4",
                  "--out", str(tmp_path / "r4.graph")], monkeypatch, tmp_path)
    capsys.readouterr()
    rc = run_cli(["analyze", "--what", "resistance", "--graph", str(tmp_path / "r4.graph")],
                 monkeypatch, tmp_path)
    assert rc == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["rho_star"] == pytest.approx(1.0)
    assert rep["sigma_bound"] == pytest.approx(8.0)


def test_analyze_hitting_clique3(tmp_path, monkeypatch, capsys):
    run_cli(["gen", "--kind", "clique", "--n", "3",
             "--out", str(tmp_path / "k3.graph")], monkeypatch, tmp_path)
    capsys.readouterr()
    rc = run_cli(["analyze", "--what", "hitting", "--graph", str(tmp_path / "k3.graph")],
                 monkeypatch, tmp_path)
    assert rc == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["sigma"] == pytest.approx(2.0)


def test_analyze_gaussian_torus(tmp_path, monkeypatch, capsys):
    run_cli(["gen", "--kind", "torus", "--side", "5", "--dim", "2",
             "--out", str(tmp_path / "t5.graph")], monkeypatch, tmp_path)
    capsys.readouterr()
    rc = run_cli(["analyze", "--what", "gaussian", "--tmax", "12",
                  "--graph", str(tmp_path / "t5.graph")], monkeypatch, tmp_path)
    assert rc == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["feasible"] is True and rep["violations"] == []


def test_analyze_solver_failure_exit_5(tmp_path, monkeypatch):
    run_cli(["gen", "--kind", "ring", "--n", "120",
             "--out", str(tmp_path / "big.graph")], monkeypatch, tmp_path)
    rc = run_cli(["analyze", "--what", "meeting", "--graph", str(tmp_path / "big.graph")],
                 monkeypatch, tmp_path)
    assert rc == 5


SMALL_SUITE = {
    "master_seed": 77,
    "rows": [
        {
            "label": "clique/CRW/time",
            "protocol": "crw",
            "metric": "tau",
            "predictor": "n",
            "sweep": [
                {"kind": "clique", "n": 8},
                {"kind": "clique", "n": 16},
                {"kind": "clique", "n": 24},
                {"kind": "clique", "n": 32},
            ],
            "trials": 40,
            "slope_band": [0.7, 1.3],
            "r2_min": 0.9,
        }
    ],
}


def test_scale_passes_and_reruns_identically(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps(SMALL_SUITE))
    rc1 = run_cli(["scale", "--config", str(cfg), "--out", "s1"], monkeypatch, tmp_path)
    rc2 = run_cli(["scale", "--config", str(cfg), "--out", "s2"], monkeypatch, tmp_path)
    assert rc1 == 0 and rc2 == 0
    for name in ("summary.csv", "fits.json", "table_report.txt"):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()


def test_scale_empty_config_exit_2(tmp_path, monkeypatch):
    cfg = tmp_path / "empty.json"
    cfg.write_text(json.dumps({"rows": []}))
    rc = run_cli(["scale", "--config", str(cfg)], monkeypatch, tmp_path)
    assert rc == 2


def test_scale_failing_band_nonzero_exit(tmp_path, monkeypatch, capsys):
    bad = json.loads(json.dumps(SMALL_SUITE))
    bad["rows"][0]["slope_band"] = [1.9, 2.0]  # cannot hold for a linear law
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(bad))
    rc = run_cli(["scale", "--config", str(cfg), "--out", "sb"], monkeypatch, tmp_path)
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


def test_bundled_table1_config_is_wellformed():
    import tokengossip

    bundled = Path(tokengossip.__file__).parent / "data" / "table1.json"
    config = json.loads(bundled.read_text())
    assert config["rows"]
    for row in config["rows"]:
        assert {"label", "protocol", "metric", "predictor", "sweep"} <= set(row)
        assert len(row["sweep"]) >= 4


def test_manifest_hash_matches_embedded_config(tmp_path, monkeypatch):
    from tokengossip import experiments as ex

    rc = run_cli(["run", "--proto", "crw", "--kind", "ring", "--n", "6",
                  "--trials", "2", "--seed", "8", "--out", "mh"],
                 monkeypatch, tmp_path)
    assert rc == 0
    manifest = json.loads((tmp_path / "mh" / "run_manifest.json").read_text())
    assert manifest["config_hash"] == ex.config_hash(manifest["config"])


def test_bundled_config_resolution(tmp_path):
    from tokengossip.cli import resolve_config_path

    p = resolve_config_path("table1")
    assert p.name == "table1.json" and p.exists()
    assert resolve_config_path("table1.json") == p
    explicit = tmp_path / "mine.json"
    explicit.write_text("{}")
    assert resolve_config_path(str(explicit)) == explicit
    with pytest.raises(FileNotFoundError):
        resolve_config_path("no_such_suite")
