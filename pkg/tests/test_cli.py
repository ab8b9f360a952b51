"""CLI tests: exit codes, error reporting and output files."""

from qnspsa_lab.cli import main


def test_check_passes(capsys):
    assert main(["check"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_run_qfim_check(tmp_path, capsys):
    config = tmp_path / "config.toml"
    config.write_text('experiment = "qfim_check"\nn_circuits = 5\n')
    out = tmp_path / "results"
    assert main(["run", str(config), "--output", str(out)]) == 0
    assert (out / "trace.csv").is_file()
    assert (out / "summary.json").is_file()


def test_seed_override(tmp_path):
    config = tmp_path / "config.toml"
    config.write_text('experiment = "qfim_check"\nn_circuits = 2\nseed = 1\n')
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(config), "--output", str(a)])
    main(["run", str(config), "--seed", "99", "--output", str(b)])
    assert (a / "trace.csv").read_bytes() != (b / "trace.csv").read_bytes()


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2
    assert "not found" in capsys.readouterr().err


def test_invalid_toml_is_usage_error(tmp_path, capsys):
    config = tmp_path / "bad.toml"
    config.write_text("experiment = [unclosed")
    assert main(["run", str(config)]) == 2
    assert "invalid TOML" in capsys.readouterr().err


def test_unknown_experiment_lists_valid_names(tmp_path, capsys):
    config = tmp_path / "config.toml"
    config.write_text('experiment = "warp_drive"\n')
    assert main(["run", str(config)]) == 2
    err = capsys.readouterr().err
    assert "warp_drive" in err and "two_design" in err and "maxcut" in err


def test_bad_jobs_value(tmp_path):
    config = tmp_path / "config.toml"
    config.write_text('experiment = "qfim_check"\n')
    assert main(["run", str(config), "--jobs", "0"]) == 2


def test_no_subcommand_is_usage_error():
    assert main([]) == 2
