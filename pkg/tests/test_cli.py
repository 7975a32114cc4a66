import json
import math
import os
import subprocess
import sys
import warnings

import pytest

from pamlab import cli, io


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_chi_run_and_artifacts(tmp_path):
    out = tmp_path / "chi"
    assert cli.main(["chi", "--out", str(out)]) == cli.EXIT_OK
    header, rows = io.read_csv(out / "chi.csv")
    row = dict(zip(header, rows[0]))
    assert float(row["value"]) == pytest.approx(1.5723649429247001, rel=0.02)
    arr, meta = io.read_array(out / "minimizer.f64")
    assert arr.ndim == 1 and meta["h"] == 0.05
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "chi"
    for name, digest in man["artifacts"].items():
        assert io.file_digest(out / name) == digest
    assert "plots" in json.loads((out / "plot.json").read_text())


def test_same_seed_same_bytes(tmp_path):
    cfg = write_cfg(tmp_path, {"t_grid": [0.5, 1.0], "N": 3000})
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["fk", "--config", cfg, "--seed", "9", "--out", str(a)]) == 0
    assert cli.main(["fk", "--config", cfg, "--seed", "9", "--threads", "3", "--out", str(b)]) == 0
    assert (a / "fk.csv").read_bytes() == (b / "fk.csv").read_bytes()
    c = tmp_path / "c"
    assert cli.main(["fk", "--config", cfg, "--seed", "10", "--out", str(c)]) == 0
    assert (a / "fk.csv").read_bytes() != (c / "fk.csv").read_bytes()


def test_ldp_constant_one_has_zero_limit(tmp_path):
    out = tmp_path / "ldp"
    assert cli.main(["ldp", "--out", str(out)]) == 0
    header, rows = io.read_csv(out / "ldp.csv")
    lim = [float(dict(zip(header, r))["limit"]) for r in rows]
    assert lim == [0.0] * len(rows)
    assert all(math.isfinite(float(dict(zip(header, r))["finite"])) for r in rows)


@pytest.mark.parametrize("cmd,cfg", [
    ("scale", {"t_grid": [1e3, 1e4]}),
    ("eigen", {"box_radius": 4, "t_grid": [1e3]}),
    ("evolve", {"box_radius": 3, "t_grid": [1.0]}),
    ("confine", {"t_grid": [20.0], "N": 30}),
    ("moments", {"t_grid": [1e3], "N": 50, "im_N": 20}),
])
def test_other_subcommands(tmp_path, cmd, cfg):
    out = tmp_path / cmd
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # tiny N triggers the low-ESS warning
        assert cli.main([cmd, "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_hash"] == io.config_hash(man["config"])
    assert set(man["artifacts"]) == {p.name for p in out.iterdir()} - {"manifest.json"}


def test_unknown_key_is_a_usage_error(tmp_path, capsys):
    out = tmp_path / "x"
    assert cli.main(["scale", "--config", write_cfg(tmp_path, {"bogus": 1}), "--out", str(out)]) == cli.EXIT_USAGE
    assert "bogus" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("cfg", [{"d": "two"}, {"box_radius": 2.5}, {"t_grid": 3}, {"records": 1}, {"d": 0}])
def test_bad_values_are_usage_errors(tmp_path, cfg):
    sub = "confine" if "records" in cfg else "eigen"
    assert cli.main([sub, "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE


def test_unreadable_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("[1, 2")
    assert cli.main(["scale", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE


def test_bad_flags_exit_2():
    with pytest.raises(SystemExit) as e:
        cli.main(["scale", "--seed", "-1"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["nope"])
    assert e.value.code == 2


def test_failed_run_leaves_nothing(tmp_path, capsys):
    out = tmp_path / "scale"
    code = cli.main(["scale", "--config", write_cfg(tmp_path, {"t_grid": [1e3, 0.5]}), "--out", str(out)])
    assert code == cli.EXIT_RUN
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()] == ["cfg.json"]


@pytest.mark.parametrize("cmd", list(cli.RUNNERS))
def test_check_flag(cmd, capsys):
    assert cli.main([cmd, "--check"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(l.startswith("PASS ") for l in lines)


def test_check_failure_exit_code(monkeypatch, capsys):
    from pamlab import checks

    monkeypatch.setitem(checks.CHECKS, "scale", lambda: [checks.CheckResult("broken", False, "x")])
    assert cli.main(["scale", "--check"]) == cli.EXIT_CHECK
    assert capsys.readouterr().out.startswith("FAIL scale: broken")


def test_env_output_dir(tmp_path):
    env = dict(os.environ, PAMLAB_OUT=str(tmp_path / "env"))
    subprocess.run([sys.executable, "-m", "pamlab.cli", "scale"], env=env, check=True, capture_output=True,
                   cwd=tmp_path)
    assert (tmp_path / "env" / "scale.csv").exists()
