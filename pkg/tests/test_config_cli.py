import json

import pytest
from hypothesis import given, settings, strategies as st

from narrow_escape import cli, config

BALL = "[shape]\nkind = \"unit-ball\"\n"
WINDOW = "[window]\ncenter = [0.0, 0.0, 1.0]\neps = 0.2\n"


@pytest.fixture
def files(tmp_path):
    shape = tmp_path / "ball.toml"
    shape.write_text(BALL)
    window = tmp_path / "w.toml"
    window.write_text(WINDOW)
    return tmp_path, str(shape), str(window)


def _run(capsys, argv):
    code = cli.run(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_unknown_key_reports_location(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[shape]\nkind = \"unit-ball\"\nradius_typo = 2\n")
    with pytest.raises(config.ConfigError) as exc:
        config.load_file(str(p))
    assert (exc.value.line, exc.value.column) == (3, 1)


@settings(max_examples=30)
@given(key=st.from_regex(r"[a-z][a-z_]{0,11}", fullmatch=True))
def test_unknown_method_keys_rejected(key, tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "m.toml"
    p.write_text(f"[method]\n{key} = 1\n")
    if key in config._SECTIONS["method"]:
        return
    with pytest.raises(config.ConfigError):
        config.load_file(str(p))


def test_type_checks(tmp_path):
    p = tmp_path / "t.toml"
    p.write_text("[method]\npaths = true\n")
    with pytest.raises(config.ConfigError):
        config.load_file(str(p))
    p.write_text("seed = \"x\"\n")
    with pytest.raises(config.ConfigError):
        config.load_file(str(p))


def test_toml_syntax_error_location(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text("[shape]\nkind = \n")
    with pytest.raises(config.ConfigError) as exc:
        config.load_file(str(p))
    assert exc.value.line == 2


def test_resolve_defaults_and_env(monkeypatch):
    monkeypatch.setenv(config.JOBS_ENV, "3")
    cfg = config.resolve({})
    assert cfg.jobs == 3 and cfg.shape["kind"] == "unit-ball"
    assert cfg.build_shape().kind == "unit-ball"
    with pytest.raises(config.ConfigError):
        cfg.build_window(cfg.build_shape())
    monkeypatch.setenv(config.JOBS_ENV, "many")
    with pytest.raises(config.ConfigError):
        config.resolve({})


def test_sweep_parsing():
    vals = config.parse_sweep("0.05:0.2:3")
    assert vals == pytest.approx([0.05, 0.1, 0.2])
    for bad in ("0.2:0.05:3", "a:b:c", "0.1:0.2"):
        with pytest.raises(config.ConfigError):
            config.parse_sweep(bad)


def test_bare_section_file(files):
    _, shape, window = files
    d = config.section_file(window, "window")
    assert d["window"]["eps"] == 0.2


def test_exit_code_config_error(capsys, tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[shape]\nkind = \"unit-ball\"\nbogus = 1\n")
    code, out, err = _run(capsys, ["geometry", "inspect", "--config", str(p)])
    assert code == 2
    msg = json.loads(err)
    assert msg["error"] == "config" and msg["line"] == 3 and msg["column"] == 1


def test_exit_code_numerical_failure(capsys, files):
    tmp, shape, _ = files
    w = tmp / "huge.toml"
    w.write_text("[window]\ncenter = [0.0, 0.0, 1.0]\neps = 1.5\n")
    code, out, err = _run(capsys, ["mfpt", "asymptotic", "--shape", shape, "--window", str(w)])
    assert code == 3
    assert json.loads(err)["module"] == "geometry"


def test_exit_code_failed_check(capsys, monkeypatch):
    rows = [{"identity": "x", "computed": 1.0, "expected": 0.0, "abs_error": 1.0,
             "tolerance": 0.1, "passed": False}]
    monkeypatch.setattr(cli, "xray_identities", lambda a, res: rows)
    code, out, _ = _run(capsys, ["xray", "verify"])
    assert code == 4
    doc = json.loads(out)
    assert doc["result"]["refined"] and not doc["result"]["all_passed"]


def test_geometry_inspect(capsys, files):
    _, shape, window = files
    code, out, _ = _run(capsys, ["geometry", "inspect", "--shape", shape, "--window", window,
                                 "--at", "0,0,1"])
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == cli.SCHEMA_VERSION
    assert doc["units"]["time"].startswith("L^2")
    assert doc["result"]["curvature"]["H"] == pytest.approx(1.0)
    assert doc["config"]["window"]["eps"] == 0.2


def test_asymptotic_sweep_csv(capsys, files):
    tmp, shape, window = files
    csv_path = tmp / "sweep.csv"
    code, out, _ = _run(capsys, ["mfpt", "asymptotic", "--shape", shape, "--window", window,
                                 "--sweep-eps", "0.05:0.2:4", "--csv", str(csv_path)])
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 5
    doc = json.loads(out)
    res = doc["result"]
    assert res["breakdown"]["error_order"] == "O(eps log eps)"


def test_simulate_round_trip_bit_identical(capsys, files):
    tmp, shape, window = files
    first = tmp / "a.json"
    second = tmp / "b.json"
    code, _, _ = _run(capsys, ["mfpt", "simulate", "--shape", shape, "--window", window,
                               "--paths", "200", "--dt", "4e-4", "--seed", "9",
                               "--out", str(first)])
    assert code == 0
    code, _, _ = _run(capsys, ["mfpt", "simulate", "--config", str(first), "--out", str(second)])
    assert code == 0
    assert first.read_bytes() == second.read_bytes()


def test_compare_table(capsys, files):
    _, shape, window = files
    code, out, _ = _run(capsys, ["mfpt", "compare", "--shape", shape, "--window", window,
                                 "--eps-list", "0.2", "--paths", "400", "--dt", "4e-4"])
    assert code == 0
    row = json.loads(out)["result"]["table"][0]
    assert set(row) >= {"epsilon", "asymptotic", "simulated", "rel_diff"}


def test_greens_solve_ball(capsys, files):
    _, shape, _ = files
    code, out, _ = _run(capsys, ["greens", "solve", "--shape", shape, "--at", "0,0,1",
                                 "--mesh", "16"])
    res = json.loads(out)["result"]
    assert code == 0
    assert res["R_star"] == pytest.approx(res["oracle"], rel=0.02)
    assert len(res["convergence_table"]) == 3
