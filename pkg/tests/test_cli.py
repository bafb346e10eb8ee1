import pytest

from prefect_submodular import cli
from prefect_submodular.checks import CheckResult
from prefect_submodular.cli import (
    EXIT_DATA_ERROR,
    EXIT_FAILED_CHECKS,
    EXIT_MALFORMED_VALUE,
    EXIT_MISSING_SUBCOMMAND,
    EXIT_OK,
    EXIT_SOLVER_ERROR,
    EXIT_UNKNOWN_FLAG,
    exit_code,
    main,
    parse_args,
)
from prefect_submodular.config import RESOLVED_CONFIG_FILENAME
from prefect_submodular.exceptions import (
    MalformedValueException,
    MissingSubcommandException,
    ProblemTooLargeException,
    SubmodularDataException,
    UnknownFlagException,
)


def test_parse_flags():
    invocation = parse_args(["train-supervised", "--noise", "0.2", "--grid", "8x6"])
    assert invocation.command == "train-supervised"
    assert invocation.config.noise == 0.2
    assert invocation.config.grid == (8, 6)
    assert invocation.overrides == {"noise": "0.2", "grid": "8x6"}


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("noise = 0.3\nn-train = 4\n")
    invocation = parse_args(["bounds", "--config", str(path), "--noise", "0.05"])
    assert invocation.config.noise == 0.05
    assert invocation.config.n_train == 4
    assert invocation.config_path == str(path)


def test_boolean_switches():
    assert parse_args(["train-unsupervised", "--known-pi"]).config.known_pi
    assert not parse_args(["train-unsupervised", "--no-known-pi"]).config.known_pi
    assert not parse_args(["bounds", "--known-pi", "false"]).config.known_pi
    invocation = parse_args(["train-supervised", "--cv", "--out", "o"])
    assert invocation.config.cv
    assert invocation.config.out == "o"


def test_unknown_flag_raises():
    with pytest.raises(UnknownFlagException, match="unrecognized arguments"):
        parse_args(["bounds", "--temperature", "3"])


def test_abbreviated_flag_is_unknown():
    with pytest.raises(UnknownFlagException):
        parse_args(["bounds", "--nois", "0.1"])


def test_malformed_value_raises():
    with pytest.raises(MalformedValueException, match="Malformed value"):
        parse_args(["bounds", "--noise", "x"])


def test_missing_subcommand_raises():
    with pytest.raises(MissingSubcommandException, match="Missing subcommand"):
        parse_args(["--noise", "0.1"])


def test_unknown_subcommand_raises():
    with pytest.raises(MissingSubcommandException):
        parse_args(["fly"])


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["--noise", "x"], EXIT_MALFORMED_VALUE),
        (["bounds", "--noise", "x"], EXIT_MALFORMED_VALUE),
        (["bounds", "--wat", "1"], EXIT_UNKNOWN_FLAG),
        ([], EXIT_MISSING_SUBCOMMAND),
        (["bounds", "--noise"], EXIT_MALFORMED_VALUE),
        (["bounds", "--seed", "-1"], EXIT_MALFORMED_VALUE),
        (["bounds", "--known-pi", "maybe"], EXIT_MALFORMED_VALUE),
    ],
)
def test_usage_errors_exit_codes(argv, expected):
    assert main(argv) == expected


@pytest.mark.parametrize(
    "exc, expected",
    [
        (UnknownFlagException("x"), EXIT_UNKNOWN_FLAG),
        (MissingSubcommandException("x"), EXIT_MISSING_SUBCOMMAND),
        (MalformedValueException("x"), EXIT_MALFORMED_VALUE),
        (SubmodularDataException("x"), EXIT_DATA_ERROR),
        (ProblemTooLargeException("x"), EXIT_SOLVER_ERROR),
    ],
)
def test_exit_code(exc, expected):
    assert exit_code(exc) == expected


def test_missing_data_exits_with_data_error(tmp_path):
    argv = [
        "train-supervised",
        "--images",
        str(tmp_path / "empty"),
        "--out",
        str(tmp_path / "out"),
    ]
    (tmp_path / "empty").mkdir()
    assert main(argv) == EXIT_DATA_ERROR


def test_bounds_command(tmp_path, capsys):
    out = tmp_path / "out"
    argv = ["bounds", "--points", "2", "--repeats", "1", "--samples", "5"]
    assert main(argv + ["--out", str(out)]) == EXIT_OK
    assert (out / "bounds.csv").exists()
    assert (out / RESOLVED_CONFIG_FILENAME).exists()
    assert f"Outputs written to {out}" in capsys.readouterr().out


def test_selftest_reports_failures(monkeypatch, tmp_path, capsys):
    results = [CheckResult("a", 3, 0), CheckResult("b", 1, 2)]
    monkeypatch.setattr(cli, "run_selftest", lambda seed: results)
    assert main(["selftest", "--out", str(tmp_path)]) == EXIT_FAILED_CHECKS
    printed = capsys.readouterr().out
    assert "b: 1 passed, 2 failed" in printed
    assert "selftest: 4 passed, 2 failed" in printed


def test_selftest_passes(monkeypatch, tmp_path):
    monkeypatch.setattr(cli, "run_selftest", lambda seed: [CheckResult("a", 2, 0)])
    assert main(["selftest", "--out", str(tmp_path)]) == EXIT_OK
