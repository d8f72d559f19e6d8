import json

import pytest

from flowplate.cli import ExperimentConfig, parse_config, run
from flowplate.errors import ConfigurationError

SMALL = "generator.n = 5\nsimulate.t_final = 0.1\nsimulate.dt = 0.02\n"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_defaults_and_overrides():
    cfg = parse_config("# comment\nambient.family = swirl\nidentities.resolutions = 9, 17\nrun.deterministic = yes\n")
    assert cfg.ambient_family == "swirl"
    assert cfg.identities_resolutions == [9, 17]
    assert cfg.run_deterministic is True
    assert cfg.generator_n == ExperimentConfig().generator_n


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigurationError, match=r"cfg:2: unknown key 'fluid.mu'"):
        parse_config("fluid.nu = 1\nfluid.mu = 2\n", "cfg")


def test_round_trip_of_dotted_keys():
    text = "\n".join(f"{k} = {', '.join(map(str, v)) if isinstance(v, list) else v}"
                     for k, v in ExperimentConfig().to_dotted().items())
    assert parse_config(text).to_dotted() == parse_config("").to_dotted()


def test_negative_viscosity_exits_with_config_error(tmp_path, capsys):
    out = tmp_path / "out"
    code = run(["simulate", "--config", write(tmp_path, "fluid.nu = -1\n"), "--out", str(out)])
    assert code == 1
    assert "nu" in capsys.readouterr().err
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == 1


def test_missing_config_file(tmp_path):
    assert run(["simulate", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path / "o")]) == 1


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = write(tmp_path, SMALL)
    for tag in ("a", "b"):
        assert run(["simulate", "--config", cfg, "--out", str(tmp_path / tag), "--deterministic", "--seed", "3"]) == 0
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 3 and man["deterministic"] and man["checks"]["coupling_fidelity"]
    assert "numpy" in man["versions"]


def test_failed_check_exits_two_with_manifest(tmp_path, capsys):
    # an unshifted generator with a divergent flow is not a contraction
    cfg = write(tmp_path, SMALL + "generator.eps = 0\ngrowth.times = 0.5, 1\n")
    out = tmp_path / "o"
    assert run(["growth-bound", "--config", cfg, "--out", str(out)]) == 2
    assert "FAIL" in capsys.readouterr().out
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 2 and not man["checks"]["growth_bound"]
    assert (out / "growth.csv").exists()


def test_calibrate_zero_flow(tmp_path):
    cfg = write(tmp_path, "ambient.family = zero\ngenerator.n = 5\n")
    assert run(["calibrate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["checks"]["zero_flow_eps"]


def test_check_identities_passes(tmp_path):
    cfg = write(tmp_path, "identities.resolutions = 9, 17, 33\n")
    assert run(["check-identities", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    header = (tmp_path / "o" / "identities.csv").read_text().splitlines()[0]
    assert header == "identity,resolution,residual,ratio,pass"
