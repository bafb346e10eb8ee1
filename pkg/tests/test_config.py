import pytest

from prefect_submodular.config import (
    ExperimentConfig,
    parse_bool,
    parse_grid,
)
from prefect_submodular.exceptions import (
    MalformedValueException,
    SubmodularConfigurationException,
    UnknownFlagException,
)


def test_defaults():
    config = ExperimentConfig()
    assert config.grid == (20, 20)
    assert config.noise == 0.1
    assert config.samples == 100
    assert config.iters == 20000
    assert config.checkpoint is None


def test_parse_grid():
    assert parse_grid("20x30") == (20, 30)
    assert parse_grid(" 4X5 ") == (4, 5)
    with pytest.raises(ValueError):
        parse_grid("20")


def test_parse_bool():
    assert parse_bool("True") and parse_bool("1")
    assert not parse_bool("false") and not parse_bool("off")
    with pytest.raises(ValueError, match="not a boolean"):
        parse_bool("maybe")


def test_from_mapping_accepts_dashes_and_underscores():
    config = ExperimentConfig.from_mapping({"n-train": "5", "reg_alpha": "0.5"})
    assert config.n_train == 5
    assert config.reg_alpha == 0.5


def test_from_mapping_overrides_base():
    base = ExperimentConfig(seed=3, noise=0.2)
    config = ExperimentConfig.from_mapping({"noise": "0.3"}, base)
    assert config.seed == 3 and config.noise == 0.3


def test_unknown_key_raises():
    with pytest.raises(UnknownFlagException, match="Unknown configuration key"):
        ExperimentConfig.from_mapping({"temperature": "1"})


@pytest.mark.parametrize(
    "entries, msg_match",
    [
        ({"noise": "x"}, "Malformed value 'x'"),
        ({"grid": "big"}, "Malformed value 'big'"),
        ({"noise": "0.7"}, "must lie in \\[0, 0.5\\]"),
        ({"seed": "-1"}, "`seed` must be >= 0"),
        ({"iters": "0"}, "`iters` must be >= 1"),
        ({"grid": "0x4"}, "Degenerate `grid`"),
        ({"step": "-1"}, "`step` must be > 0"),
        ({"backend": "simplex"}, "Unknown `backend`"),
        ({"log-every": "-1"}, "`log-every` must be >= 0"),
    ],
)
def test_invalid_values_raise(entries, msg_match):
    with pytest.raises(MalformedValueException, match=msg_match):
        ExperimentConfig.from_mapping(entries)


def test_optional_values():
    config = ExperimentConfig.from_mapping({"images": "none", "checkpoint": "m.txt"})
    assert config.images is None
    assert config.checkpoint == "m.txt"


def test_file_round_trip(tmp_path):
    config = ExperimentConfig(
        seed=7, grid=(8, 6), noise=0.15, known_pi=False, reg_t=1e-5, out="runs/a"
    )
    path = config.write(tmp_path)
    assert ExperimentConfig.from_file(path) == config


def test_file_with_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# denoising\nn-train = 5  # small\n\ngrid = 10x10\n")
    config = ExperimentConfig.from_file(path)
    assert config.n_train == 5
    assert config.grid == (10, 10)


def test_missing_file_raises(tmp_path):
    with pytest.raises(SubmodularConfigurationException, match="Cannot read"):
        ExperimentConfig.from_file(tmp_path / "absent.cfg")


def test_as_mapping_uses_flag_names():
    entries = ExperimentConfig().as_mapping()
    assert entries["n-train"] == "30"
    assert entries["grid"] == "20x20"
    assert entries["known-pi"] == "true"
    assert entries["images"] == "none"
