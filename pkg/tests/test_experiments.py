import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from wavegrad import cli
from wavegrad import experiments as ex
from wavegrad.lagrangian import chain, from_layered
from wavegrad.net import new_layered

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv(ex.SEED_ENV, raising=False)


def test_seed_from_env(monkeypatch):
    assert ex.config_seed({"seed": 3}) == 3
    monkeypatch.setenv(ex.SEED_ENV, "11")
    assert ex.config_seed({"seed": 3}) == 11
    monkeypatch.setenv(ex.SEED_ENV, "eleven")
    with pytest.raises(ex.ConfigError):
        ex.config_seed({})


def test_load_config_errors(tmp_path):
    with pytest.raises(ex.ConfigError):
        ex.load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ex.ConfigError):
        ex.load_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ex.ConfigError):
        ex.load_config(tmp_path / "list.json")


def test_constant_wave_experiment(tmp_path):
    cfg = {"seed": 2, "net": {"widths": [3, 4, 4, 2]}, "ticks": 20,
           "outputs": {"csv": "t.csv", "frames": "f.json", "report": "r.json"},
           "_base": str(tmp_path)}
    rep, trace = ex.run_wave_experiment(cfg)
    assert rep.passed and rep.depth == 3 and rep.sync_layer == 2
    assert rep.mismatch == [2, 0, 2]
    assert max(rep.max_error) < 1e-12
    assert len(trace) == 20
    for name in ("t.csv", "f.json", "r.json"):
        assert (tmp_path / name).is_file()


def test_fast_regime_has_larger_error_than_slow():
    slow, _ = ex.run_wave_experiment(ex.load_config(CONFIGS / "fig2_slow.json") | {"outputs": {}})
    fast, _ = ex.run_wave_experiment(ex.load_config(CONFIGS / "fig3_fast.json") | {"outputs": {}})
    for l, m in enumerate(slow.mismatch):
        if m:
            assert fast.mean_error[l] >= 10 * slow.mean_error[l]


def test_sweep_rows_and_unresolvable(tmp_path):
    cfg = {"seed": 0, "net": {"widths": [4] * 6}, "periods": [None, 100, 10, 1.0],
           "ticks": 120, "_base": str(tmp_path)}
    rep = ex.run_frequency_sweep(cfg)
    assert [r["period"] for r in rep.rows] == [None, 100, 10, 1.0]
    assert rep.rows[0]["layer_mean"] < 1e-12
    assert rep.rows[3] == {"period": 1.0, "resolvable": False}
    assert any("unresolvable" in n for n in rep.notes)
    assert rep.passed
    with pytest.raises(ex.ConfigError):
        ex.run_frequency_sweep({"periods": []})


def test_lagrangian_config_run():
    cfg = ex.load_config(CONFIGS / "lagrangian_chain3.json") | {"outputs": {}, "steps": 300}
    report = ex.run_lagrangian(cfg)
    assert report["passed"] and report["max_drift"] < 1e-10
    assert len(report["final_W"]) == 2


def test_bp_limit_check_variants():
    assert ex.run_bp_limit_check(ex.load_config(CONFIGS / "bp_limit_chain10.json"))["passed"]
    rep = ex.run_bp_limit_check({"net": {"widths": [3, 4, 2]}, "seed": 5})
    assert rep["max_rel_error"] < 1e-12


def test_as_layered_roundtrip():
    net = new_layered([2, 3, 2], init=4)
    back = ex.as_layered(from_layered(net))
    assert back.widths == net.widths
    for a, b in zip(net.weights, back.weights):
        np.testing.assert_array_equal(a, b)
    assert ex.as_layered(chain([0.1, 0.2])).widths == (1, 1, 1)


def test_build_errors(tmp_path):
    with pytest.raises(ex.ConfigError):
        ex.build_cnet({}, 0)
    with pytest.raises(ex.ConfigError):
        ex.build_cnet({"cnet": {"ring": 3}}, 0)
    with pytest.raises(ex.ConfigError):
        ex.build_net({"net": {"file": "nope.json"}, "_base": str(tmp_path)}, 0)
    with pytest.raises(ex.ConfigError):
        ex.run_wave_experiment({"ticks": -3})


def test_render_frame_cells():
    frame = {"t": 3, "filled_fwd": [True, True, False], "filled_bwd": [False, True, True],
             "x_frame": [3, 2, None], "delta_frame": [None, 3, 3]}
    lines = ex.render_frame(frame, 2).splitlines()
    assert lines[0] == "t=3"
    assert [ln.split()[:2] for ln in lines[1:]] == [["2", "B"], ["1", "X"], ["0", "F"]]
    grid = ex.render_grid({"depth": 2, "frames": [frame, frame]})
    assert grid.splitlines() == ["  2 BB", "  1 XX", "  0 FF"]


def test_render_rejects_malformed():
    with pytest.raises(ex.TraceParseError):
        ex.render_frames({"depth": 2, "frames": [{"t": 0, "filled_fwd": [True], "filled_bwd": [False]}]})
    with pytest.raises(ex.TraceParseError):
        ex.render_frames({"frames": []})


# command line


def test_cli_wave_run_and_render(tmp_path, capsys):
    cfg = _write(tmp_path, {"seed": 1, "net": {"widths": [2, 3, 3, 1]}, "ticks": 12,
                            "outputs": {"frames": "f.json"}})
    assert cli.main(["wave-run", "--config", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True
    assert cli.main(["render", "--trace", str(tmp_path / "f.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("t=0") and out.count("t=") == 12
    assert cli.main(["render", "--grid", "--trace", str(tmp_path / "f.json")]) == 0
    # layer l fills forward at t = l and backward at t = 2L - l
    assert capsys.readouterr().out.splitlines() == [
        "  3 ...XXXXXXXXX",
        "  2 ..FFXXXXXXXX",
        "  1 .FFFFXXXXXXX",
        "  0 FFFFFFFFFFFF",
    ]


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["wave-run", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "junk.json").write_text("{}}")
    assert cli.main(["render", "--trace", str(tmp_path / "junk.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-command"])
    assert exc.value.code == 2
    strict = _write(tmp_path, {"cnet": {"chain": [0.5]}, "max_drift": 0.0, "steps": 5,
                               "signal": {"kind": "constant", "u": [0.1], "y": [0.2]}}, "strict.json")
    # a zero drift budget can never be met
    assert cli.main(["lagrangian-run", "--config", str(strict)]) == 1
    moving = _write(tmp_path, {"cnet": {"chain": [0.5]}, "t0": 0.0,
                               "signal": {"kind": "sinusoid", "u": [0.1], "y": [0.2],
                                          "amplitude": 0.3, "period": 5}}, "moving.json")
    assert cli.main(["lagrangian-run", "--config", str(moving)]) == 2
    diverge = _write(tmp_path, {"cnet": {"chain": [0.8, -0.6]}, "t0": math.pi / 2, "dt": 0.5,
                                "steps": 200,
                                "signal": {"kind": "sinusoid", "u": [0.3], "y": [0.5],
                                           "amplitude": 0.4, "period": 2 * math.pi}}, "div.json")
    assert cli.main(["lagrangian-run", "--config", str(diverge)]) == 1
    capsys.readouterr()


def test_cli_failing_criterion_exits_one(tmp_path, capsys):
    cfg = _write(tmp_path, {"cnet": {"random_chain": 4}, "tol": 0.0})
    assert cli.main(["bp-limit-check", "--config", str(cfg)]) == 1
    assert json.loads(capsys.readouterr().out)["passed"] is False


def test_cli_shipped_configs(tmp_path, capsys):
    for name in ("fig1_constant.json", "sweep.json", "bp_limit_chain10.json"):
        shutil.copy(CONFIGS / name, tmp_path / name)
    (tmp_path / "out").mkdir()
    assert cli.main(["wave-run", "--config", str(tmp_path / "fig1_constant.json")]) == 0
    assert cli.main(["sweep", "--config", str(tmp_path / "sweep.json")]) == 0
    assert cli.main(["bp-limit-check", "--config", str(tmp_path / "bp_limit_chain10.json")]) == 0
    assert (tmp_path / "out" / "fig1_trace.csv").is_file()
    capsys.readouterr()
