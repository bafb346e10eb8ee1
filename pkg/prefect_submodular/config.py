"""
Run configuration shared by the command line and the flows.
"""
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

from prefect_submodular.exceptions import (
    MalformedValueException,
    SubmodularConfigurationException,
    UnknownFlagException,
)
from prefect_submodular.sfm import BACKENDS
from prefect_submodular.utils import read_key_value, write_key_value

RESOLVED_CONFIG_FILENAME = "resolved_config.txt"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(value: str) -> bool:
    """`true`/`false`, `yes`/`no`, `on`/`off` or `1`/`0`, any case."""
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_grid(value: str) -> Tuple[int, int]:
    """`HxW` to (H, W)."""
    height, width = value.strip().lower().split("x")
    return int(height), int(width)


def format_grid(grid: Tuple[int, int]) -> str:
    """(H, W) to `HxW`."""
    return f"{grid[0]}x{grid[1]}"


def _parse_optional(value: str) -> Optional[str]:
    """Empty or `none` means unset."""
    value = value.strip()
    return None if value in ("", "none") else value


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Every tunable of a run.

    Args:
        - seed (int): Root seed; every random stream is derived from it.
        - grid (tuple): Image size (height, width).
        - noise (float): Flip probability pi, in [0, 0.5].
        - samples (int): Logistic samples M for bounds and mean-marginals.
        - iters (int): Stochastic subgradient iterations H.
        - step (float): Step constant C of the C / sqrt(h) schedule.
        - reg_alpha (float): l2 weight on alpha.
        - reg_t (float): l2 weight on t.
        - n_train (int): Training images.
        - n_test (int): Test images.
        - known_pi (bool): Whether unsupervised training knows the noise level.
        - images (str, optional): Directory of PBM images replacing generated shapes.
        - out (str): Output directory.
        - points (int): Points per cluster in the bound comparison.
        - scale (float): Graph weight scale c in exp(-c |x - y|).
        - repeats (int): Random instances in the bound comparison.
        - checkpoint (str, optional): Model file read by `denoise`.
        - backend (str): Minimization backend.
        - cv (bool): Cross-validate the regularization of supervised training.
        - log_every (int): Training log period.
    """

    seed: int = 0
    grid: Tuple[int, int] = (20, 20)
    noise: float = 0.1
    samples: int = 100
    iters: int = 20000
    step: float = 1.0
    reg_alpha: float = 1e-3
    reg_t: float = 1e-3
    n_train: int = 30
    n_test: int = 30
    known_pi: bool = True
    images: Optional[str] = None
    out: str = "out"
    points: int = 5
    scale: float = 1.0
    repeats: int = 10
    checkpoint: Optional[str] = None
    backend: str = "auto"
    cv: bool = False
    log_every: int = 1000

    PARSERS = {
        "seed": int,
        "grid": parse_grid,
        "noise": float,
        "samples": int,
        "iters": int,
        "step": float,
        "reg_alpha": float,
        "reg_t": float,
        "n_train": int,
        "n_test": int,
        "known_pi": parse_bool,
        "images": _parse_optional,
        "out": str,
        "points": int,
        "scale": float,
        "repeats": int,
        "checkpoint": _parse_optional,
        "backend": str,
        "cv": parse_bool,
        "log_every": int,
    }

    def __post_init__(self):
        """Validate ranges."""
        if self.seed < 0:
            raise MalformedValueException(f"`seed` must be >= 0, got {self.seed}.")
        if not 0.0 <= self.noise <= 0.5:
            msg = f"`noise` must lie in [0, 0.5], got {self.noise}."
            raise MalformedValueException(msg)
        for name in ("samples", "iters", "n_train", "n_test", "points", "repeats"):
            if getattr(self, name) < 1:
                raise MalformedValueException(f"`{name}` must be >= 1.")
        if min(self.grid) < 1:
            msg = f"Degenerate `grid` {format_grid(self.grid)}."
            raise MalformedValueException(msg)
        if self.step <= 0 or self.reg_alpha < 0 or self.reg_t < 0:
            msg = "`step` must be > 0, `reg-alpha` and `reg-t` >= 0."
            raise MalformedValueException(msg)
        if self.log_every < 0:
            raise MalformedValueException("`log-every` must be >= 0.")
        if self.backend not in BACKENDS:
            msg = f"Unknown `backend` {self.backend!r}, expected one of {BACKENDS}."
            raise MalformedValueException(msg)

    @classmethod
    def from_mapping(
        cls, entries: Mapping[str, str], base: Optional["ExperimentConfig"] = None
    ) -> "ExperimentConfig":
        """
        Apply string-valued `entries` keyed by flag name (`n-train` or `n_train`)
        on top of `base`.

        Raises:
            - `UnknownFlagException` if a key is not a configuration field.
            - `MalformedValueException` if a value cannot be parsed.
        """
        values = {}
        for key, raw in entries.items():
            name = key.strip().lstrip("-").replace("-", "_")
            if name not in cls.PARSERS:
                raise UnknownFlagException(f"Unknown configuration key `{key}`.")
            try:
                values[name] = cls.PARSERS[name](raw)
            except ValueError as exc:
                msg = f"Malformed value {raw!r} for `{key}`."
                raise MalformedValueException(msg) from exc
        return dataclasses.replace(base or cls(), **values)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """
        Read a `key = value` configuration file.

        Raises:
            - `SubmodularConfigurationException` if the file cannot be read.
        """
        try:
            entries = read_key_value(path)
        except OSError as exc:
            raise SubmodularConfigurationException(f"Cannot read `{path}`.") from exc
        return cls.from_mapping(entries)

    def as_mapping(self) -> Dict[str, str]:
        """All fields keyed by flag name, parseable by `from_mapping`."""
        entries = {}
        for item in dataclasses.fields(self):
            value = getattr(self, item.name)
            if item.name == "grid":
                text = format_grid(value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            elif value is None:
                text = "none"
            else:
                text = str(value)
            entries[item.name.replace("_", "-")] = text
        return entries

    def write(self, directory: Union[str, Path]) -> Path:
        """Echo the resolved configuration into `directory`."""
        path = Path(directory) / RESOLVED_CONFIG_FILENAME
        write_key_value(path, self.as_mapping())
        return path
