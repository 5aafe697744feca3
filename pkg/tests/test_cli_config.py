import json
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from cfskit import cli
from cfskit.config import ConfigError, RunConfig, echo, parse_text


@settings(max_examples=50, deadline=None)
@given(metric=st.sampled_from(["minkowski", "desitter", "flrw"]),
       mass=st.floats(1e-3, 1e3, allow_nan=False),
       eps=st.lists(st.floats(1e-8, 1.0), min_size=1, max_size=4, unique=True),
       N=st.integers(0, 4), pairs=st.integers(1, 5000), seed=st.integers(0, 2 ** 31),
       tol=st.floats(1e-15, 1e-3), sign=st.sampled_from([1, -1]),
       fmt=st.sampled_from(["csv", "json"]))
def test_echo_roundtrip(metric, mass, eps, N, pairs, seed, tol, sign, fmt):
    cfg = RunConfig(metric=metric, mass=mass, eps=tuple(sorted(eps)), N=N, pairs=pairs, seed=seed,
                    quad_tol=tol, regfield_sign=sign, format=fmt,
                    params={"H": 0.5} if metric == "desitter" else {}).validate()
    assert parse_text(echo(cfg)) == cfg


@pytest.mark.parametrize("text,field", [
    ("metric.name = kerr", "metric"),
    ("mass = -1", "mass"),
    ("eps = 0.1,0.01", "eps"),
    ("eps = 0,0.1", "eps"),
    ("truncation.N = two", "truncation.N"),
    ("regfield.sign = 0", "regfield.sign"),
    ("output.format = xml", "format"),
    ("colour = blue", "colour"),
])
def test_invalid_config_names_field(text, field):
    with pytest.raises(ConfigError, match=field.split(".")[0]):
        parse_text(text)


def run(argv, capsys):
    code = cli.run_command(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_geom_csv(capsys):
    code, out, _ = run(["geom", "--metric", "desitter", "--pairs", "3"], capsys)
    assert code == 0
    assert out.startswith("# computes:")
    cfg = parse_text("\n".join(l for l in out.splitlines() if l.startswith("# ") and " = " in l
                               and not l.startswith("# summary")))
    assert cfg.metric == "desitter" and cfg.pairs == 3


def test_json_output(capsys, tmp_path):
    path = tmp_path / "o.json"
    code, _, _ = run(["symbols", "--format", "json", "--out", str(path), "--pairs", "4"], capsys)
    assert code == 0
    data = json.loads(path.read_text())
    assert data["command"] == "symbols" and len(data["rows"]) > 0


@pytest.mark.parametrize("argv", [
    ["geom", "--metric", "nonsense"],
    ["geom", "--eps", "0.1,abc"],
    ["geom", "--eps", "0.2,0.1"],
    ["geom", "--param", "H"],
    ["geom", "--metric", "desitter", "--param", "Q=3"],
    ["frobnicate"],
    ["verify", "--suite", "nosuch"],
    ["geom", "--config", "/nonexistent/file"],
])
def test_exit_invalid(capsys, argv):
    code, _, err = run(argv, capsys)
    assert code == 2


def test_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("CFS_THREADS", "zero")
    assert run(["geom"], capsys)[0] == 2
    monkeypatch.setenv("CFS_THREADS", "2")
    assert run(["geom", "--pairs", "2"], capsys)[0] == 0


def test_verify_pass_and_tolerance_failure(capsys, monkeypatch):
    code, out, _ = run(["verify", "--metric", "minkowski", "--suite", "flat"], capsys)
    assert code == 0 and "PASS" in out
    monkeypatch.setattr(cli, "_verify_suites", lambda cfg, chart: {"bad": lambda: (1.0, 1e-3)})
    code, out, _ = run(["verify", "--suite", "bad"], capsys)
    assert code == 3 and "FAIL" in out


def test_config_file_and_override(capsys, tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("metric.name = desitter\nmetric.param.H = 0.5\npairs.count = 2\n")
    code, out, _ = run(["geom", "--config", str(f), "--seed", "9"], capsys)
    assert code == 0
    assert "# metric.param.H = 0.5" in out and "# pairs.seed = 9" in out


def test_console_script_module():
    r = subprocess.run([sys.executable, "-m", "cfskit", "geom", "--pairs", "1"], capture_output=True,
                       text=True, timeout=120)
    assert r.returncode == 0 and "# computes:" in r.stdout


@pytest.mark.parametrize("cmd", ["geom", "sigma", "vanvleck", "symbols", "regfield", "sdw",
                                 "projector", "eigen", "perturb", "einstein"])
def test_subcommand_smoke(capsys, cmd):
    code, out, _ = run([cmd, "--metric", "desitter", "--pairs", "2"], capsys)
    assert code == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert len(rows) >= 2 and all("nan" not in r for r in rows[1:])


def test_quad_settings_reach_computations(monkeypatch, tmp_path):
    import cfskit.action as action
    import cfskit.regfield as regfield

    seen = {}
    real_rf = regfield.regfield_batch

    def spy_rf(*a, cfg=None, **k):
        seen["nodes"] = cfg.nodes
        return real_rf(*a, cfg=cfg, **k)

    def spy_ti(chart, x, eps, mass, cfg=None):
        seen["tol"] = cfg.epsrel_outer
        seen["sign"] = cfg.sign
        raise KeyboardInterrupt

    monkeypatch.setattr(regfield, "regfield_batch", spy_rf)
    monkeypatch.setattr(action, "tangent_integrals", spy_ti)
    f = tmp_path / "run.cfg"
    f.write_text("metric.name = desitter\npairs.count = 2\nquad.nodes = 7\nquad.tol = 1e-6\n"
                 "regfield.sign = -1\n")
    assert cli.run_command(["regfield", "--config", str(f), "--out", str(tmp_path / "a")]) == 0
    assert seen["nodes"] == 7
    with pytest.raises(KeyboardInterrupt):
        cli.run_command(["integrals", "--config", str(f), "--out", str(tmp_path / "b")])
    assert seen["tol"] == 1e-6 and seen["sign"] == -1
