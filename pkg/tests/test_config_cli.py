import json

import numpy as np
import pytest

from hamswitch.cli import dispatch, dumps_json, format_float
from hamswitch.config import (ConfigError, bundled, bundled_names, dump_config, load_config,
                              loads_config)

MINIMAL = """
[model]
b = 1.0

[[model.regime]]

[model.rates]
base = [[0.0]]
"""


def test_bundled_configs_load():
    names = bundled_names()
    assert {"reference", "linear", "unit_chain", "feller_linear", "chain_only"} <= set(names)
    for n in names:
        cfg = bundled(n)
        assert cfg.model.n_regimes >= 1


def test_minimal_config_defaults():
    cfg = loads_config(MINIMAL)
    assert cfg.model.d == 1 and cfg.model.coefficients.a == 0.0
    assert cfg.simulation.h == 1e-3 and cfg.simulation.mode == "state_dependent"
    assert cfg.k0 == 0
    np.testing.assert_array_equal(cfg.initial.head, [0.0, 0.0])


def test_negative_h_names_field():
    with pytest.raises(ConfigError) as exc:
        loads_config(MINIMAL + "\n[simulation]\nh = -0.001\n")
    msg = str(exc.value)
    assert "simulation.h" in msg and "line 11" in msg


def test_negative_rate_rejected():
    text = MINIMAL.replace("base = [[0.0]]", "base = [[0.0, -1.0], [1.0, 0.0]]").replace(
        "[[model.regime]]", "[[model.regime]]\n[[model.regime]]")
    with pytest.raises(ConfigError) as exc:
        loads_config(text)
    assert "model.rates.base" in str(exc.value)


def test_unknown_keys_and_multiple_errors():
    text = MINIMAL + "\n[simulation]\npathz = 3\nT = 0\n"
    with pytest.raises(ConfigError) as exc:
        loads_config(text)
    errs = exc.value.errors
    assert any("simulation.pathz: unknown key" in e for e in errs)
    assert any("simulation.T" in e for e in errs)


def test_inconsistent_dimensions():
    text = MINIMAL + "\n[initial]\nvalue = [1.0, 2.0, 3.0]\n"
    with pytest.raises(ConfigError):
        loads_config(text)


def test_parse_error_reported():
    with pytest.raises(ConfigError):
        loads_config("[model\nb = 1")


@pytest.mark.parametrize("name", ["reference", "feller_linear", "unit_chain"])
def test_round_trip(name):
    cfg = bundled(name)
    text = dump_config(cfg)
    again = loads_config(text)
    assert dump_config(again) == text
    assert again.model == cfg.model
    assert again.simulation == cfg.simulation


def test_load_config_file(tmp_path):
    p = tmp_path / "m.toml"
    p.write_text(dump_config(bundled("linear")))
    assert load_config(p).model == bundled("linear").model
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_format_float_17_digits():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(1.0) == "1"
    assert float(format_float(np.pi)) == np.pi
    assert dumps_json({"b": [0.1, 2], "a": True}) == '{\n  "a": true,\n  "b": [0.10000000000000001, 2]\n}'
    assert json.loads(dumps_json({"x": {"y": [1.5, None]}})) == {"x": {"y": [1.5, None]}}


def test_cli_simulate_outputs_byte_stable(tmp_path, capsys):
    cfg = tmp_path / "m.toml"
    cfg.write_text(dump_config(bundled("reference").replace_simulation(T=0.1, h=0.01)))
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = dispatch(["simulate", "--config", str(cfg), "--paths", "300", "--seed", "7",
                         "--out", str(out)])
        assert code == 0
        outs.append(out)
    for name in ("estimates.csv", "summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    header = (outs[0] / "estimates.csv").read_text().splitlines()[0]
    assert header == "quantity,mean,stderr,ci_low,ci_high,min,max,n"
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["paths"] == 300 and summary["seed"] == 7


def test_cli_simulate_trace(tmp_path):
    out = tmp_path / "t"
    code = dispatch(["simulate", "--config", "bundled:chain_only", "--paths", "50", "--out",
                     str(out), "--trace", "2"])
    assert code == 0
    lines = (out / "trace_0001.csv").read_text().splitlines()
    assert lines[0] == "t,X0,Y0,regime" and len(lines) == 102


def test_cli_threads_do_not_change_output(tmp_path):
    base = ["simulate", "--config", "bundled:unit_chain", "--paths", "5000", "--seed", "3"]
    dispatch(base + ["--out", str(tmp_path / "one"), "--threads", "1"])
    dispatch(base + ["--out", str(tmp_path / "four"), "--threads", "4"])
    assert (tmp_path / "one" / "estimates.csv").read_bytes() == \
        (tmp_path / "four" / "estimates.csv").read_bytes()


def test_cli_usage_errors(capsys):
    assert dispatch(["simulate"]) == 2
    assert dispatch(["frobnicate"]) == 2
    assert dispatch([]) == 2
    assert dispatch(["simulate", "--config", "bundled:nope"]) == 2
    assert dispatch(["validate", "--suite", "nope"]) == 2


def test_cli_bad_config_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(MINIMAL + "\n[simulation]\nh = -1.0\n")
    assert dispatch(["simulate", "--config", str(p)]) == 2
    assert "simulation.h" in capsys.readouterr().err


def test_cli_zvonkin(tmp_path, capsys):
    code = dispatch(["zvonkin", "--lambdas", "1", "20", "--ny", "400", "--out", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "lambda_scan.csv").read_text().splitlines()
    assert rows[0] == "lambda,residual,gradient_bound,sup_abs_f,b2_sup" and len(rows) == 3


def test_cli_report_exit_codes(tmp_path):
    assert dispatch(["report", "--config", "bundled:reference", "--out", str(tmp_path)]) == 0
    info = json.loads((tmp_path / "assumptions.json").read_text())
    assert info["passed"] is True and info["H"] == 0.5
    bad = tmp_path / "lowH.toml"
    cfg = bundled("reference")
    text = dump_config(cfg).replace("[model.rates]", "[model.rates]\nbound = 0.1")
    bad.write_text(text)
    assert dispatch(["report", "--config", str(bad)]) == 1


def test_cli_validate_single_suite(tmp_path, capsys):
    code = dispatch(["validate", "--suite", "zvonkin", "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "validation.json").read_text())
    assert rep["passed"] is True
    assert "[pass] zvonkin" in capsys.readouterr().out


def test_cli_validate_failure_exit_1(tmp_path, capsys):
    # declared H below the true exit rate: the jump-count bound must fail
    text = dump_config(bundled("reference")).replace("[model.rates]", "[model.rates]\nbound = 0.05")
    p = tmp_path / "lowH.toml"
    p.write_text(text)
    code = dispatch(["validate", "--suite", "jumps", "--config", str(p), "--scale", "0.05"])
    assert code == 1
    assert "[FAIL] jumps" in capsys.readouterr().out
