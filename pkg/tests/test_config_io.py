import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from gaussflow import cli
from gaussflow.config import config_from_dict, parse_config
from gaussflow.errors import ConfigError, DegeneracyError, OutputError, ShapeError
from gaussflow.flow import TRACE_COLUMNS, FlowState
from gaussflow.geometry import compute_geometry
from gaussflow.grid import RadialField, build_grid
from gaussflow.io import (
    TRACE_HEADER,
    CsvTraceSink,
    emit_report,
    emit_snapshot,
    load_snapshot,
    read_trace,
)
from gaussflow.quermass import quermass_all
from gaussflow.shapes import make_shape, offcenter_radius

MINIMAL = {"n": 2, "m": 256, "shape": {"kind": "cosine", "params": {"r0": 1, "eps": 0.2, "mode": 1}}}


def test_minimal_config_defaults():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.ctrl.cfl_safety == 0.2
    assert cfg.ctrl.osc_tol == 1e-7
    assert cfg.ctrl.t_max == 100.0
    assert cfg.outputs.snapshot_every == 0
    assert cfg.shape.params.mode == 1
    ctrl = cfg.ctrl.step_control()
    assert (ctrl.cfl_safety, ctrl.t_max) == (0.2, 100.0)


@pytest.mark.parametrize(
    "patch, needle",
    [
        ({"shape": {"kind": "cosine", "params": {"r0": 1, "eps": 1.0}}}, "eps"),
        ({"n": 1}, "n"),
        ({"n": 6}, "n"),
        ({"m": 8}, "m"),
        ({"extra": 3}, "extra"),
        ({"ctrl": {"cfl_safety": 0}}, "cfl_safety"),
        ({"ctrl": {"dt_min": 1.0, "dt_max": 0.1}}, "dt_min"),
        ({"shape": {"kind": "blob", "params": {}}}, "shape"),
        ({"shape": {"kind": "offcenter", "params": {"r": 1, "d": 1.5}}}, "d must be < r"),
        ({"shape": {"kind": "sphere", "params": {"r": 1, "x": 2}}}, "x"),
        ({"outputs": {"snapshot_every": -1}}, "snapshot_every"),
    ],
)
def test_config_rejections_name_the_key(patch, needle):
    with pytest.raises(ConfigError) as info:
        config_from_dict(MINIMAL | patch)
    assert needle in str(info.value)


def test_malformed_json():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("{n: 2")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_table_validation():
    base = {"kind": "custom-table", "params": {"psi": [0, 1, 2, math.pi], "rho": [1, 1, 1, 1]}}
    config_from_dict(MINIMAL | {"shape": base})
    for params in (
        {"psi": [0, 2, 1, math.pi], "rho": [1, 1, 1, 1]},
        {"psi": [0, 1, 2, 3], "rho": [1, 1, 1, 1]},
        {"psi": [0, 1, 2, math.pi], "rho": [1, 1, -1, 1]},
        {"psi": [0, 1, math.pi], "rho": [1, 1, 1]},
        {"psi": [0, 1, 2, math.pi], "rho": [1, 1, 1]},
    ):
        with pytest.raises(ConfigError):
            config_from_dict(MINIMAL | {"shape": {"kind": "custom-table", "params": params}})


def test_sphere_shape():
    fld = make_shape({"kind": "sphere", "params": {"r": 1.0}}, build_grid(2, 64))
    assert np.all(fld.rho == 1.0)


def test_offcenter_reduces_to_sphere():
    fld = make_shape({"kind": "offcenter", "params": {"r": 1.0, "d": 0.0}}, build_grid(2, 64))
    assert np.allclose(fld.rho, 1.0, rtol=0, atol=1e-15)


def test_offcenter_poles():
    assert offcenter_radius(0.0, 1.0, 0.3) == pytest.approx(1.3, abs=1e-14)
    assert offcenter_radius(math.pi, 1.0, 0.3) == pytest.approx(0.7, abs=1e-14)


@given(st.floats(0.1, 3.0), st.floats(0.0, 0.95), st.floats(0.0, math.pi))
def test_offcenter_solves_law_of_cosines(r, frac, psi):
    d = frac * r
    a, b = math.cosh(d), math.sinh(d) * math.cos(psi)
    ref = brentq(lambda x: a * math.cosh(x) - b * math.sinh(x) - math.cosh(r), 0.0, r + d + 1.0, xtol=1e-15, rtol=1e-15)
    assert float(offcenter_radius(psi, r, d)) == pytest.approx(ref, abs=1e-12)


def test_offcenter_sphere_is_umbilic():
    geom = compute_geometry(make_shape({"kind": "offcenter", "params": {"r": 1.0, "d": 0.3}}, build_grid(2, 512)))
    assert np.max(np.abs(geom.kappa_m - 1 / math.tanh(1.0))) < 1e-5
    assert np.max(np.abs(geom.kappa_o - 1 / math.tanh(1.0))) < 1e-5


def test_custom_table_of_sphere():
    psi = np.linspace(0, math.pi, 9)
    fld = make_shape({"kind": "custom-table", "params": {"psi": psi.tolist(), "rho": [0.8] * 9}}, build_grid(3, 64))
    assert np.allclose(fld.rho, 0.8, rtol=1e-14, atol=0)


def test_shape_rejects_nonconvex_with_node():
    psi = np.linspace(0, math.pi, 40)
    rho = 1.0 - 0.6 * np.exp(-(psi / 0.25) ** 2)
    with pytest.raises(ShapeError) as info:
        make_shape({"kind": "custom-table", "params": {"psi": psi.tolist(), "rho": rho.tolist()}}, build_grid(2, 128))
    assert info.value.hypothesis == "convexity"
    assert isinstance(info.value.node, int)
    assert "node" in str(info.value)


def test_shape_rejects_nonpositive_with_node():
    psi = np.linspace(0, math.pi, 8)
    rho = [1.0, 1.0, 0.01, 0.01, 0.01, 0.01, 1.0, 1.0]
    with pytest.raises(ShapeError) as info:
        make_shape({"kind": "custom-table", "params": {"psi": psi.tolist(), "rho": rho}}, build_grid(2, 64))
    assert info.value.hypothesis in ("positivity", "convexity")
    assert info.value.node is not None


def test_trace_header_byte_exact(tmp_path):
    path = tmp_path / "t.csv"
    with CsvTraceSink(path) as sink:
        sink.emit_trace_row(np.arange(15.0) + 0.1)
    first = path.read_bytes().split(b"\n")[0]
    assert first == (
        b"t,dt,rho_min,rho_max,osc,vol,area,A_nm2,af_gap,Q,K_max,kappa_min,"
        b"grad_gamma_sq_max,mink_res_0,mink_res_nm1"
    )
    assert TRACE_HEADER.split(",") == list(TRACE_COLUMNS)
    back = read_trace(path)
    assert np.array_equal(back[0], np.arange(15.0) + 0.1)


def test_trace_row_full_precision(tmp_path):
    path = tmp_path / "t.csv"
    row = np.array([math.pi / 3 * 10.0 ** k for k in range(-7, 8)])
    with CsvTraceSink(path) as sink:
        sink.write_row(row)
        with pytest.raises(ValueError):
            sink.write_row(row[:3])
    assert np.array_equal(read_trace(path)[0], row)


def test_snapshot_round_trip(tmp_path):
    g = build_grid(3, 97)
    rng = np.random.default_rng(3)
    fld = RadialField(g, 1 + 0.1 * rng.random(97), time=0.123456789)
    emit_snapshot(FlowState(fld, 5), tmp_path / "s.json")
    back = load_snapshot(tmp_path / "s.json")
    assert np.array_equal(back.rho, fld.rho)
    assert back.time == fld.time and back.grid.n == 3 and back.grid.m == 97
    data = json.loads((tmp_path / "s.json").read_text())
    assert sorted(data) == ["m", "n", "psi", "rho", "t"]


def test_snapshot_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"t": 0, "n": 2}')
    with pytest.raises(OutputError):
        load_snapshot(bad)
    bad.write_text("{oops")
    with pytest.raises(OutputError):
        load_snapshot(bad)
    with pytest.raises(OutputError):
        load_snapshot(tmp_path / "missing.json")


def test_output_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError) as info:
        CsvTraceSink(blocker / "sub" / "t.csv")
    assert "file" in str(info.value)


def test_ball_report(tmp_path):
    rep = quermass_all(compute_geometry(make_shape({"kind": "sphere", "params": {"r": 1.0}}, build_grid(2, 256))))
    emit_report(rep, tmp_path / "r.json", {"label": "ball"})
    data = json.loads((tmp_path / "r.json").read_text())
    assert abs(data["af_gap"]) <= 1e-6 * data["A"]["0"]
    assert data["label"] == "ball"
    assert set(data) >= {"n", "A", "mink_res", "af_gap", "r_equiv"}


def test_cli_ball(tmp_path, capsys):
    assert cli.main(["ball", "--n", "2", "--r-min", "1", "--r-max", "2", "--num", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "r,xi_-1,xi_0,xi_1"
    r, vol, area, _ = (float(x) for x in lines[1].split(","))
    assert (r, vol) == (1.0, pytest.approx(5.11093270570828897693, rel=1e-12))
    assert area == pytest.approx(17.3553873817714370877, rel=1e-13)
    assert cli.main(["ball", "--n", "3", "--num", "4", "--out", str(tmp_path / "b.csv")]) == 0
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 5
    assert cli.main(["ball", "--n", "9"]) == 1


def test_cli_usage_errors(capsys):
    assert cli.main(["run", "--n", "2", "--m", "64"]) == 1
    assert cli.main(["run", "--n", "2", "--m", "8", "--shape", "sphere", "--r", "1"]) == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1
    assert "error" in capsys.readouterr().err


def test_cli_run_sphere(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--n", "2", "--m", "64", "--shape", "sphere", "--r", "1.2", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] and report["steps"] == 0
    assert report["rho_inf"] == pytest.approx(1.2, rel=1e-14)
    assert read_trace(out / "trace.csv").shape == (1, 15)
    assert load_snapshot(out / "final.json").grid.m == 64


def test_cli_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 2, "m": 64, "shape": {"kind": "cosine", "params": {"r0": 1, "eps": 0.1, "mode": 2}},
                               "ctrl": {"t_max": 5.0}, "outputs": {"snapshot_every": 40}}))
    out = tmp_path / "o"
    code = cli.main(["run", "--config", str(cfg), "--tmax", "0.05", "--out", str(out)])
    assert code in (0, 2, 5)
    report = json.loads((out / "report.json").read_text())
    assert report["t_final"] == pytest.approx(0.05, abs=1e-15)
    assert report["config"]["ctrl"]["t_max"] == 0.05
    assert report["config"]["shape"]["params"]["mode"] == 2
    snaps = sorted((out / "snapshots").glob("snap_*.json"))
    assert snaps[0].name == "snap_000000000.json" and len(snaps) >= 2


def test_cli_not_converged_exit(tmp_path):
    args = ["run", "--n", "2", "--m", "64", "--shape", "cosine", "--eps", "0.05", "--mode", "2", "--tmax", "0.01"]
    assert cli.main(args + ["--out", str(tmp_path)]) == 5


def test_cli_coarse_grid_flags_exit(tmp_path, capsys):
    # at m=32 the discrete monotonicity of A_{n-2} breaks at the 1e-8 slack
    args = ["run", "--n", "2", "--m", "32", "--shape", "cosine", "--eps", "0.05", "--mode", "2"]
    assert cli.main(args + ["--trace-every", "1000", "--out", str(tmp_path)]) == 2
    assert "flag A_nm2_increase" in capsys.readouterr().out


def test_cli_cfl_collapse(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(MINIMAL | {"ctrl": {"dt_min": 1e-2, "dt_max": 1e-2}}))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_cli_degeneracy_exit(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise DegeneracyError("forced")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run", "--n", "2", "--m", "64", "--shape", "sphere", "--r", "1", "--out", str(tmp_path)]) == 3


def test_cli_bad_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 1


def test_cli_identities_small(tmp_path, capsys):
    out = tmp_path / "id.json"
    assert cli.main(["identities", "--n", "2", "--m", "64", "--m", "128", "--m", "256", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["ok"] and data["studies"][0]["n"] == 2
    assert cli.main(["identities", "--n", "2", "--m", "64"]) == 1


def test_cli_verify_af_small(tmp_path):
    out = tmp_path / "af.json"
    assert cli.main(["verify-af", "--n", "2", "--m", "1024", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["ok"] and len(data["records"]) == 11
    assert cli.main(["verify-af", "--n", "7"]) == 1


def test_run_outputs_are_deterministic(tmp_path):
    args = ["run", "--n", "2", "--m", "64", "--shape", "cosine", "--eps", "0.2", "--tmax", "0.3", "--snapshot-every", "100"]
    for name in ("a", "b"):
        cli.main(args + ["--out", str(tmp_path / name)])
    for rel in ("trace.csv", "final.json", "report.json", "snapshots/snap_000000100.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
