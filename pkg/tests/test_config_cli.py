import json
import os

import numpy as np
import pytest

from layercal import config as C
from layercal.cli import main
from layercal.model import ConfigError

HERE = os.path.dirname(__file__)
PIPE = os.path.join(HERE, "..", "configs", "pipe1d.json")


def raw_pipe():
    with open(PIPE) as fh:
        return json.load(fh)


def test_minimal_config_defaults():
    rc = C.parse(raw_pipe())
    assert rc.sim.integrator == "leapfrog" and rc.sim.layers == "pml"
    assert rc.sim.time.cfl == 0.9
    assert rc.optimizer.memory == 10 and rc.optimizer.restarts == 0
    assert rc.t_c is None
    assert rc.sim.source.t0 == pytest.approx(100 * rc.sim.time.dt)
    assert np.all(rc.profile.values == 0)


def test_emit_round_trip():
    doc = C.emit(C.parse(raw_pipe()))
    again = C.emit(C.parse(json.loads(C.dumps(doc))))
    assert C.dumps(doc) == C.dumps(again)


@pytest.mark.parametrize("patch, where", [
    (lambda r: r["grid"].update(colour=1), "grid"),
    (lambda r: r["grid"].update(sublayer_count=0), "grid.sublayer_count"),
    (lambda r: r["source"].update(kind="laser"), "source.kind"),
    (lambda r: r["material"].update(v_l=3.0), "material.v_l"),
])
def test_errors_name_the_key(patch, where):
    raw = raw_pipe()
    patch(raw)
    with pytest.raises(ConfigError) as info:
        C.parse(raw)
    assert str(info.value).startswith(where)


def test_override_checks_keys():
    raw = raw_pipe()
    C.apply_override(raw, "optimizer.max_iter=7")
    assert C.parse(raw).optimizer.max_iter == 7
    with pytest.raises(ConfigError):
        C.apply_override(raw, "optimizer.bogus=1")


def test_cli_gradcheck(tmp_path):
    code = main(["gradcheck", "--config", PIPE, "--out", str(tmp_path),
                 "--set", "attenuation.bins=3", "--set", "attenuation.values=[1000, 2000, 3000]"])
    assert code == 0
    doc = json.loads((tmp_path / "gradient.json").read_text())
    assert len(doc["entries"]) == 3 and doc["max_rel_err"] < 1e-5


def test_cli_simulate_zero_source(tmp_path):
    code = main(["simulate", "--config", PIPE, "--out", str(tmp_path), "--set", 'source={"kind": "none"}',
                 "--set", "time.steps=20"])
    assert code == 0
    lines = (tmp_path / "energy.csv").read_text().splitlines()
    assert len(lines) == 22
    assert all(float(line.split(",")[-1]) == 0.0 for line in lines[1:])


def test_cli_calibrate_then_report(tmp_path):
    args = ["--config", PIPE, "--out", str(tmp_path), "--set", "attenuation.bins=2"]
    assert main(["calibrate", *args]) == 0
    assert main(["report", *args]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert abs(rep["difference_db"]) <= 1e-12
    head = (tmp_path / "history.csv").read_text().splitlines()[0]
    assert head == "iter,J,delta_db,proj_grad_inf,c_0,c_1"
    assert (tmp_path / "timing.json").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["simulate", "--config", PIPE, "--out", str(tmp_path), "--set", "grid.sublayer_count=0"]) == 2
    assert "grid.sublayer_count" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_cli_divergence_exit_code(tmp_path):
    code = main(["simulate", "--config", PIPE, "--out", str(tmp_path), "--set", "time.dt=1e-3",
                 "--set", "time.steps=10"])
    assert code == 2  # explicit dt above the stability limit is a config error


def test_sublayers_must_divide_width():
    raw = raw_pipe()
    raw["grid"]["sublayer_count"] = 3
    raw["layers"] = {"kind": "cml"}
    raw["attenuation"] = {"kind": "cml"}
    with pytest.raises(ConfigError) as info:
        C.parse(raw)
    assert "grid.sublayer_count" in str(info.value)


def test_cli_gradcheck_acceptance_case(tmp_path):
    code = main(["gradcheck", "--config", PIPE, "--out", str(tmp_path), "--set", "grid.cells=[100]",
                 "--set", "time.steps=200", "--set", "attenuation.bins=3",
                 "--set", "attenuation.values=[1000, 2000, 3000]"])
    assert code == 0
    assert json.loads((tmp_path / "gradient.json").read_text())["max_rel_err"] < 1e-5
