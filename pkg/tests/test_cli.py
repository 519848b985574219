import json

import pytest

from atebench.cli import main


def run_cli(*argv):
    return main(list(argv))


def base_args(root, **extra):
    args = {
        "--d": "3",
        "--n": "120",
        "--num-seeds": "1",
        "--master-seed": "5",
        "--posterior-size": "4",
        "--methods": "bootstrap-pc",
        "--output-root": str(root),
    }
    args.update(extra)
    return [x for kv in args.items() for x in kv]


def test_run_prints_report_table(tmp_path, capsys):
    code = run_cli("run", *base_args(tmp_path / "run"))
    out = capsys.readouterr().out
    assert code == 0
    assert "report:" in out
    assert "bootstrap-pc" in out
    assert (tmp_path / "run" / "report" / "run_report.csv").exists()


def test_staged_commands_and_report(tmp_path, capsys):
    args = base_args(tmp_path / "staged")
    for command in ("generate", "discover", "ate-sweep", "evaluate"):
        assert run_cli(command, *args) == 0
        assert "seeds completed: 1/1" in capsys.readouterr().out
    assert run_cli("report", *args) == 0
    assert "bootstrap-pc" in capsys.readouterr().out


def test_premature_report_is_a_clean_error(tmp_path, capsys):
    args = base_args(tmp_path / "early")
    assert run_cli("generate", *args) == 0
    capsys.readouterr()
    assert run_cli("report", *args) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_output_root_is_exit_two(capsys):
    code = run_cli("run", "--d", "3")
    err = capsys.readouterr().err
    assert code == 2
    assert "output_root" in err


def test_env_var_supplies_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ATEBENCH_OUTPUT_ROOT", str(tmp_path / "env_root"))
    args = [x for x in base_args(tmp_path) if not x.startswith(str(tmp_path))]
    args = args[: args.index("--output-root")] + args[args.index("--output-root") + 2 :]
    assert run_cli("generate", *args) == 0
    assert (tmp_path / "env_root" / "seeds" / "seed_000" / "data.csv").exists()


def test_flag_overrides_beat_config_file(tmp_path, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("d = 3\nn = 50\nposterior_size = 4\nmaster_seed = 5\n")
    root = tmp_path / "cfgrun"
    code = run_cli(
        "generate", "--config", str(cfg_file), "--n", "80", "--output-root", str(root)
    )
    assert code == 0
    stamped = (root / "run_config.txt").read_text()
    assert "n=80" in stamped.splitlines()


def test_bad_flag_value_is_exit_two(tmp_path, capsys):
    code = run_cli("run", "--d", "banana", "--output-root", str(tmp_path / "x"))
    err = capsys.readouterr().err
    assert code == 2
    assert "d" in err


def test_unknown_method_is_exit_two(tmp_path, capsys):
    code = run_cli("run", *base_args(tmp_path / "m", **{"--methods": "gibbs"}))
    assert code == 2
    assert "gibbs" in capsys.readouterr().err


def test_failed_seed_sets_exit_code_one(tmp_path, capsys):
    # GES refuses n < d + 2, so the only seed fails but the stage command
    # itself completes with diagnostics
    code = run_cli(
        "discover",
        *base_args(tmp_path / "f", **{"--n": "4", "--methods": "bootstrap-ges"}),
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "seed 0 failed" in captured.err
    doc = json.loads((tmp_path / "f" / "run_manifest.json").read_text())
    assert doc["seeds"]["0"]["status"] == "failed"
