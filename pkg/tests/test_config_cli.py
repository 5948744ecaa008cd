import json
import os
import subprocess
import sys

import pytest

from varwave.cli import dispatch, main
from varwave.config import ConfigError, parse_config, parse_config_text

MINIMAL = """\
coefficients:
  alpha: "1"
  beta: "0"
  gamma: "sqrt(1.5 + 0.5*sin(u))"
  bounds: {alpha1: 1, alpha2: 1, beta2: 0, gamma1: 1, gamma2: 1.4142135623730951}
data:
  u0: "0.5*exp(-16*x^2)"
  u1: "0"
  L: 1.5
grid: {delta: 0.03125, T: 0.5}
"""

PAIR = MINIMAL + """\
data_b:
  u0: "0.4*exp(-16*(x-0.1)^2)"
  u1: "0.2*exp(-16*x^2)"
  L: 1.5
options: {taus: [0.0, 0.25], n_theta: 4}
"""


def test_minimal_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.options["n_theta"] == 8 and cfg.options["eps_sing"] == 1e-3
    assert cfg.box == 1.5 and cfg.output == "out"
    assert cfg.weights.kappa[1] == pytest.approx(0.1)
    assert len(cfg.tau_grid()) == 11 and cfg.tau_grid()[-1] == 0.5
    assert len(cfg.hash) == 16


def test_missing_gamma_names_key():
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace('  gamma: "sqrt(1.5 + 0.5*sin(u))"\n', ""))
    assert any("coefficients.gamma" in e and "missing key" in e for e in exc.value.errors)


def test_zero_delta_rejected_with_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace("delta: 0.03125", "delta: 0"))
    (err,) = exc.value.errors
    assert err.startswith("line 10:") and "grid.delta" in err and "positive" in err


@pytest.mark.parametrize("patch,needle", [
    (("alpha1: 1,", "alpha1: 2,"), "bounds"),
    (("L: 1.5", "L: abc"), "data.L"),
    (('u0: "0.5*exp(-16*x^2)"', 'u0: "0.5*exp(-16*x^2"'), "data"),
    (("T: 0.5}", "T: 0.5}\noptions: {nope: 1}"), "options.nope"),
    (("T: 0.5}", "T: 0.5}\noptions: {n_theta: 5}"), "even"),
    (("T: 0.5}", "T: 0.5}\nweights: {kappa: [1, 1, 1, 1, 1, 1, 2]}"), "weights"),
])
def test_validation_errors(patch, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace(*patch))
    assert any(needle in e for e in exc.value.errors), exc.value.errors


def test_yaml_syntax_error():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("grid: {delta: [1, 2\n")
    assert exc.value.errors[0].startswith("line ")


def test_builtin_and_unknown_builtin():
    text = MINIMAL.replace('  alpha: "1"\n  beta: "0"\n  gamma: "sqrt(1.5 + 0.5*sin(u))"\n',
                           "  builtin: constant\n  params: {alpha: 1, beta: 0, gamma: 1}\n")
    assert parse_config_text(text).coefficients.is_constant()
    with pytest.raises(ConfigError):
        parse_config_text(text.replace("builtin: constant", "builtin: nope"))


def _cfg(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text + f"output: {tmp_path / 'out'}\n")
    return str(p)


def test_validate_linear_wave_reports_degeneracy(tmp_path):
    root = os.path.dirname(os.path.dirname(__file__))
    out = tmp_path / "v"
    code = main(["validate", "--config", os.path.join(root, "configs", "linear_wave.yaml"), "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "validate.json").read_text())
    assert doc["exit_code"] == 0 and len(doc["config_hash"]) == 16 and "numpy" in doc["versions"]
    assert doc["generic_degenerate"] is True and doc["notes"]


def test_solve_then_energy(tmp_path):
    path = _cfg(tmp_path, MINIMAL)
    assert main(["solve", "--config", path]) == 0
    assert main(["energy", "--config", path, "--tau", "0,0.2,0.4"]) == 0
    out = tmp_path / "out"
    lines = (out / "energy.csv").read_text().splitlines()
    assert lines[0].split(",")[-1] == "drift" and len(lines) == 4
    assert abs(float(lines[-1].split(",")[-1])) <= 1e-2
    assert (out / "energy.gp").exists()


def test_metric_json(tmp_path):
    path = _cfg(tmp_path, PAIR)
    assert main(["metric", "--config", path]) == 0
    doc = json.loads((tmp_path / "out" / "metric.json").read_text())
    assert doc["lipschitz_ratio"] > 0 and len(doc["lengths"]) == 2
    assert len(doc["breakdowns"]) == 2 and len(doc["breakdowns"][0]["terms"]) == 7


def test_exit_codes(tmp_path):
    path = _cfg(tmp_path, MINIMAL)
    assert main(["slice", "--config", path, "--tau", "50"]) == 1
    doc = json.loads((tmp_path / "out" / "slice.json").read_text())
    assert doc["exit_code"] == 1 and "error" in doc
    assert main(["metric", "--config", path]) == 1  # needs data_b
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL.replace("delta: 0.03125", "delta: -1"))
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path / "bad")]) == 1
    assert json.loads((tmp_path / "bad" / "solve.json").read_text())["errors"]
    assert main(["frobnicate", "--config", path]) == 1
    # blow-up of p, q is a numerical failure
    steep = MINIMAL.replace("L: 1.5", "L: 1.5\n").replace('"0.5*exp(-16*x^2)"', '"3*tanh(x/0.001)"')
    steep = steep.replace("T: 0.5", "T: 3")
    p2 = tmp_path / "steep.yaml"
    p2.write_text(steep + f"options: {{iters: 1}}\noutput: {tmp_path / 'steep'}\n")
    assert main(["solve", "--config", str(p2)]) == 2
    doc = json.loads((tmp_path / "steep" / "solve.json").read_text())
    assert doc["exit_code"] == 2 and "NonpositivePQ" in doc["error"]


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    path = _cfg(tmp_path, PAIR)
    for out in (a, b):
        for cmd in ("solve", "energy", "slice", "metric"):
            assert main([cmd, "--config", path, "--out", str(out)]) == 0
    for name in ("energy.csv", "energy.json", "slice.json", "metric.json", "solve.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_module_entry_point(tmp_path):
    path = _cfg(tmp_path, MINIMAL)
    r = subprocess.run([sys.executable, "-m", "varwave", "validate", "--config", path], capture_output=True)
    assert r.returncode == 0
