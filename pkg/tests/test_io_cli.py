import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lisa import cli, io
from lisa.engine import ModelSpec, Simulation, run
from lisa.io import ConfigError


@settings(max_examples=200)
@given(v=st.floats(allow_nan=False))
def test_float_format_round_trips(v):
    assert float(io.fmt(v)) == v


def test_simulate_writes_replayable_trace(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["simulate", "--model", "clu", "--steps", "10", "--seed", "7", "--out", str(out)]) == 0
    rows = (out / "steps_r0.csv").read_text().splitlines()
    assert len(rows) == 11
    tr = io.read_trace(out, 0)
    ref = run(ModelSpec.clu(), 10, seed=7, recorders=tr.recorders)
    # every column of the steps file; psi is not part of the file format
    for k, w in tr.records.columns().items():
        v = ref.records.columns()[k]
        assert (v is None and w is None) or np.array_equal(v, w, equal_nan=True)
    assert tr.records.x is not None and tr.records.chi is not None
    assert np.array_equal(tr.final.points, ref.final.points)
    assert np.array_equal(tr.final.parents, ref.final.parents)


def _dir_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_is_byte_identical(tmp_path):
    args = ["simulate", "--model", "cln", "--a", "0.5", "--steps", "300", "--replicas", "3", "--seed", "11"]
    cli.main(args + ["--out", str(tmp_path / "a")])
    cli.main(args + ["--out", str(tmp_path / "b")])
    assert _dir_bytes(tmp_path / "a") == _dir_bytes(tmp_path / "b")


def test_simulate_independent_of_thread_count(tmp_path):
    cfg = io.ExperimentConfig(ModelSpec.rnu(), steps=400, replicas=6, seed=3)
    cli.simulate_to_dir(cfg, tmp_path / "t1", threads=1)
    cli.simulate_to_dir(cfg, tmp_path / "t4", threads=4)
    assert _dir_bytes(tmp_path / "t1") == _dir_bytes(tmp_path / "t4")


def test_horizon_run_records_birth_times(tmp_path):
    cli.main(["simulate", "--model", "clu", "--horizon", "2", "--out", str(tmp_path)])
    head = (tmp_path / "final_r0.csv").read_text().splitlines()[0]
    assert head == "id,parent,x,birth"
    meta = io.read_jsonl(tmp_path / "summary.jsonl")[0]
    assert meta["time"] <= 2.0


def test_two_dimensional_round_trip(tmp_path):
    cli.main(["simulate", "--model", "cld", "--law", "isonormal:a=0.5,dim=2", "--steps", "50",
              "--out", str(tmp_path)])
    pts, par = io.read_config_csv(tmp_path / "final_r0.csv")
    sim = Simulation(ModelSpec.from_dict(io.read_jsonl(tmp_path / "summary.jsonl")[0]["model"]), 0)
    sim.advance(50)
    assert np.array_equal(pts, sim.config.points)


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "exp.cfg"
    f.write_text("# example\nmodel = cln\na = 0.5\nsteps = 20\nseed = 4\n")
    cfg = io.build_config(io.read_config_file(f), str(f))
    assert cfg.model == ModelSpec.cln(0.5) and cfg.steps == 20 and cfg.seed == 4
    out = tmp_path / "o"
    cli.main(["simulate", "--config", str(f), "--steps", "5", "--out", str(out)])
    assert len((out / "steps_r0.csv").read_text().splitlines()) == 6


@pytest.mark.parametrize("text,msg", [
    ("model=clu\nsteps=5\nfoo=1\n", ":3: unknown key"),
    ("model=clu\nsteps=five\n", ":2: bad value"),
    ("model=clu\nsteps=5\nsteps=6\n", ":3: duplicate key"),
    ("model=clu\nsteps\n", ":2: expected key=value"),
    ("model=cln\na=-1\nsteps=5\n", ":2: invalid model"),
])
def test_config_errors_name_the_line(tmp_path, text, msg):
    f = tmp_path / "bad.cfg"
    f.write_text(text)
    with pytest.raises(ConfigError, match=msg):
        io.build_config(io.read_config_file(f), str(f))


def test_config_needs_exactly_one_of_steps_or_horizon():
    with pytest.raises(ConfigError):
        io.ExperimentConfig(ModelSpec.clu())
    with pytest.raises(ConfigError):
        io.ExperimentConfig(ModelSpec.clu(), steps=3, horizon=1.0)
    with pytest.raises(ConfigError):
        io.ExperimentConfig(ModelSpec.clu(), steps=3, replicas=0)


def test_cli_reports_config_error(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("model=clu\nbogus=1\n")
    assert cli.main(["simulate", "--config", str(f)]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err


def test_verify_pass_and_report(tmp_path, capsys):
    assert cli.main(["verify", "sigma-uniform", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "sigma-uniform.json").read_text())
    assert rep["passed"] and rep["statistics"]["abs_error"] < 1e-6


def test_verify_beta_middle_interval_smoke(tmp_path):
    assert cli.main(["verify", "beta-middle-interval", "--budget", "smoke", "--out", str(tmp_path)]) == 0


def test_verify_tampered_formula_fails(tmp_path, monkeypatch):
    monkeypatch.setenv("LISA_TAMPER", "lp-formula")
    assert cli.main(["verify", "lp-formula", "--budget", "smoke", "--out", str(tmp_path)]) != 0
    rep = json.loads((tmp_path / "lp-formula.json").read_text())
    assert rep["statistics"]["matches"]["normalized"] < rep["statistics"]["cases"]


def test_scan_empty_grid(tmp_path):
    out = tmp_path / "scan.csv"
    cli.main(["scan", "--grid", "", "--out", str(out)])
    assert out.read_text() == "a,C,C_hat,C_plus_C_hat,mean_H,median_diameter\n"


def test_scan_power_columns(tmp_path):
    out = tmp_path / "scan.csv"
    cli.main(["scan", "--family", "power", "--grid", "1.5,3", "--steps", "200", "--replicas", "2",
              "--draws", "500", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0].startswith("alpha,p,C,C_hat") and len(lines) == 3
    # C = 0.7 * 0.25 / 1.25 + 0.3 * alpha / (alpha - 1)
    assert float(lines[2].split(",")[2]) == pytest.approx(0.14 + 0.45)


def test_scan_region_grid(tmp_path):
    out = tmp_path / "region.csv"
    cli.main(["scan", "--family", "power", "--grid", "2,4", "--p-grid", "0.05,0.2,0.4",
              "--replicas", "0", "--draws", "20000", "--out", str(out)])
    rows = [list(map(float, r.split(","))) for r in out.read_text().splitlines()[1:]]
    assert len(rows) == 6
    # E H <= C / (1 - C_hat), so the moment-sum region sits inside the E H < 1 region
    for _, _, C, C_hat, s, mean_h, _ in rows:
        if s < 0.95:
            assert mean_h < 1


def test_plot_writes_svg(tmp_path):
    cli.main(["simulate", "--model", "cld", "--law", "isonormal:a=0.5,dim=2", "--steps", "400",
              "--out", str(tmp_path)])
    svg = tmp_path / "fig.svg"
    assert cli.main(["plot", str(tmp_path / "final_r0.csv"), "--out", str(svg)]) == 0
    text = svg.read_text()
    assert text.startswith("<svg") and text.count("<circle") == 402
