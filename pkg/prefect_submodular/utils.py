"""
Seeding helpers and plain-text file formats (edge lists, PBM images, key-value
files and CSV reports).
"""
import csv
import math
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np
from scipy.special import logit

from prefect_submodular.exceptions import SubmodularDataException
from prefect_submodular.submodular import CutFunction

PathLike = Union[str, Path]


def derive_seed(seed: int, *keys: int) -> int:
    """
    Deterministic child seed for `(seed, *keys)`.

    Children of the same parent are statistically independent, and the value does
    not depend on how many other children were drawn before.
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """
    Generator for the `index`-th sample of a stream seeded with `seed`.
    """
    return np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    )


def logistic_sample(rng: np.random.Generator, size) -> np.ndarray:
    """
    Standard logistic variables by inverse CDF, z = log(v / (1 - v)).
    """
    v = rng.random(size)
    return logit(np.maximum(v, np.nextafter(0.0, 1.0)))


def format_float(value: float) -> str:
    """Six significant digits, the precision of every report."""
    return f"{value:.6g}"


def read_graph(path: PathLike) -> CutFunction:
    """
    Read a graph edge list: a header line `D E`, then E lines `i j w`.

    Raises:
        - `SubmodularDataException` if the file is malformed or a weight is NaN
            or negative.
    """
    lines = [
        line.split()
        for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    try:
        num_nodes, num_edges = (int(v) for v in lines[0])
        edges = [(int(i), int(j), float(w)) for i, j, w in lines[1:]]
    except (IndexError, ValueError) as exc:
        raise SubmodularDataException(f"Malformed graph file {path}: {exc}") from exc
    if len(edges) != num_edges:
        msg = f"Graph file {path} announces {num_edges} edges, found {len(edges)}."
        raise SubmodularDataException(msg)
    for i, j, w in edges:
        if math.isnan(w) or w < 0:
            raise SubmodularDataException(f"Edge ({i}, {j}) has invalid weight {w}.")
        if i == j:
            raise SubmodularDataException(f"Self-loop on node {i}.")
    return CutFunction.from_edges(num_nodes, edges)


def write_graph(path: PathLike, cut: CutFunction):
    """Write `cut` as an edge list readable by `read_graph`."""
    lines = [f"{cut.num_nodes} {len(cut.edges)}"]
    lines += [f"{i} {j} {w!r}" for i, j, w in cut.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pbm(path: PathLike) -> np.ndarray:
    """
    Read an ASCII (P1) PBM image as an (H, W) array of 0/1, 1 being black.

    Raises:
        - `SubmodularDataException` if the file is not a valid P1 image.
    """
    content = []
    for line in Path(path).read_text().splitlines():
        content.append(line.split("#", 1)[0])
    tokens = " ".join(content).split()
    if not tokens or tokens[0] != "P1":
        raise SubmodularDataException(f"{path} is not an ASCII PBM (P1) image.")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except (IndexError, ValueError) as exc:
        raise SubmodularDataException(f"Malformed PBM header in {path}.") from exc
    bits = [int(ch) for ch in "".join(tokens[3:]) if ch in "01"]
    if len(bits) != width * height:
        msg = f"{path} holds {len(bits)} pixels, expected {width * height}."
        raise SubmodularDataException(msg)
    return np.array(bits, dtype=np.int8).reshape(height, width)


def write_pbm(path: PathLike, image: np.ndarray):
    """Write an (H, W) binary image as ASCII PBM."""
    image = np.asarray(image, dtype=np.int8)
    height, width = image.shape
    rows = ["".join(str(int(b)) for b in row) for row in image]
    body = "\n".join(row[k : k + 70] for row in rows for k in range(0, width, 70))
    Path(path).write_text(f"P1\n{width} {height}\n{body}\n")


def read_key_value(path: PathLike) -> Dict[str, str]:
    """
    Parse `key = value` lines; `#` starts a comment.

    Raises:
        - `SubmodularDataException` if a line has no `=`.
    """
    entries = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SubmodularDataException(f"{path}:{number}: expected `key = value`.")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def write_key_value(path: PathLike, entries: Mapping[str, str]):
    """Write `key = value` lines in the given order."""
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in entries.items()))


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]):
    """
    Write a CSV report; floats are printed with six significant digits.
    """
    formatted: List[List[str]] = []
    for row in rows:
        formatted.append(
            [format_float(v) if isinstance(v, float) else str(v) for v in row]
        )
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(formatted)
