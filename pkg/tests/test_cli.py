import json

import numpy as np
import pytest

from onlineltl.cli import build_parser, main, parse_config
from onlineltl.experiment import ConfigError, ExperimentConfig, parse_grid, read_config_file, run_seed

from test_environments import _ratings_csv

TINY = ["--d", "3", "--n-train", "4", "--n-test", "5", "--t-train", "6", "--t-val", "3", "--t-test", "3",
        "--runs", "2", "--lambda-grid", "0.1:10:3", "--gamma-grid", "0.1:10:2"]


def _parse(argv):
    args = build_parser().parse_args(argv)
    return parse_config(args.command, args)


def test_parse_grid():
    assert parse_grid("1e-3:1e3:30") == (1e-3, 1e3, 30)
    assert parse_grid("1:10:3:log") == (1, 10, 3)
    for bad in ("1:2", "0:1:3", "a:b:c", "2:1:3"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# comment\nruns = 3\nseed = 4\n")
    config = _parse(["synth-reg", "--config", str(cfg), "--runs", "5"])
    assert config.runs == 5 and config.seed == 4 and config.d == 30


def test_empty_file_and_flags(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("")
    config = _parse(["synth-cls", "--config", str(cfg)] + TINY)
    assert config.environment == "synth-cls" and config.t_train == 6


def test_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("lamda = 1\n")
    with pytest.raises(ConfigError, match="lamda"):
        read_config_file(cfg)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError, match="runs"):
        _parse(["synth-reg", "--runs", "0"])
    with pytest.raises(ConfigError, match="methods"):
        _parse(["synth-reg", "--methods", "LTL-FOO"])
    with pytest.raises(ConfigError, match="metric"):
        _parse(["synth-reg", "--metric", "zero_one"])
    with pytest.raises(ConfigError, match="d"):
        _parse(["synth-reg", "--d", "2.5"])


def test_mean_methods_need_synthetic(tmp_path):
    data = _ratings_csv(tmp_path / "r.csv")
    with pytest.raises(ConfigError, match="MEAN"):
        _parse(["ratings", "--data", str(data), "--methods", "MEAN-SGD"])


def test_ratings_defaults():
    d = ExperimentConfig.defaults_for("ratings")
    assert (d.t_train, d.t_val, d.t_test, d.runs, d.n_train) == (100, 40, 40, 30, 8)


def test_run_seeds_differ():
    assert len({run_seed(0, r) for r in range(10)}) == 10
    assert run_seed(1, 0) != run_seed(0, 0)


def test_single_itl_run_gives_flat_curve(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["synth-reg", *TINY, "--runs", "1", "--methods", "ITL-SGD", "--out", str(out)]) == 0
    rows = (out / "ITL-SGD.csv").read_text().splitlines()[1:]
    values = {r.split(",")[2] for r in rows}
    assert len(rows) == 6 and len(values) == 1
    assert "ITL-SGD" in capsys.readouterr().out


def test_manifest_rerun_is_byte_identical(tmp_path):
    out = tmp_path / "a"
    argv = ["synth-cls", *TINY, "--methods", "ITL-SGD,MEAN-ERM,LTL-SGD-SGD,LTL-ERM-ERM", "--out", str(out)]
    assert main(argv) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"config", "run_seeds", "files", "versions"}
    again = tmp_path / "b"
    assert main(["synth-cls", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    for name in manifest["files"].values():
        assert (out / name).read_bytes() == (again / name).read_bytes()
    # config.txt reproduces as well
    third = tmp_path / "c"
    assert main(["synth-cls", "--config", str(out / "config.txt"), "--out", str(third)]) == 0
    for name in manifest["files"].values():
        assert (out / name).read_bytes() == (third / name).read_bytes()


def test_threads_do_not_change_results(tmp_path):
    base = ["synth-reg", *TINY, "--methods", "LTL-SGD-SGD"]
    main(base + ["--out", str(tmp_path / "one")])
    main(base + ["--threads", "2", "--out", str(tmp_path / "two")])
    assert (tmp_path / "one/LTL-SGD-SGD.csv").read_bytes() == (tmp_path / "two/LTL-SGD-SGD.csv").read_bytes()


def test_ratings_experiment(tmp_path):
    data = _ratings_csv(tmp_path / "r.csv", tasks=12)
    out = tmp_path / "out"
    rc = main(["ratings", "--data", str(data), "--task", "classification", "--t-train", "6", "--t-val", "3",
               "--t-test", "3", "--runs", "2", "--lambda-grid", "0.1:10:3", "--gamma-grid", "0.1:10:3",
               "--out", str(out)])
    assert rc == 0
    text = (out / "LTL-SGD-SGD.csv").read_text().splitlines()
    assert text[0] == "method,t,mean_error,std_error,lambda,gamma"
    assert all(np.isfinite(float(r.split(",")[2])) for r in text[1:])


def test_too_few_tasks(tmp_path):
    data = _ratings_csv(tmp_path / "r.csv", tasks=5)
    with pytest.raises(SystemExit) as exc:
        main(["ratings", "--data", str(data), "--runs", "1", "--out", str(tmp_path / "o")])
    assert exc.value.code == 2


def test_bad_config_exits_with_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth-reg", "--config", str(tmp_path / "missing.txt")])
    assert exc.value.code == 2


def test_certify_command(capsys):
    assert main(["certify", "--instances", "5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6 and all(line.startswith("PASS") for line in lines)
