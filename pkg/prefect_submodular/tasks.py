"""
Prefect tasks and flows running the bound comparison and the denoising
experiments end to end.
"""
import dataclasses
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from prefect import flow, get_run_logger, task

from prefect_submodular.config import ExperimentConfig
from prefect_submodular.exceptions import (
    DimensionMismatchException,
    SubmodularConfigurationException,
)
from prefect_submodular.experiments import (
    SUMMARY_HEADER,
    BoundRow,
    DenoiseReport,
    DenoisingModel,
    add_noise,
    bound_comparison,
    cross_validate,
    evaluate,
    fit_conditional,
    fit_latent,
    gen_shapes,
    grid_cut_functions,
    load_images,
    make_clean_images,
    mixture_graphs,
    summarize_bounds,
)
from prefect_submodular.learning import (
    NoisyPair,
    TrainState,
    load_checkpoint,
    save_checkpoint,
)
from prefect_submodular.utils import derive_seed, write_csv, write_graph, write_pbm

BOUNDS_FILENAME = "bounds.csv"
BOUNDS_SUMMARY_FILENAME = "bounds_summary.csv"
REPORT_FILENAME = "report.csv"
CHECKPOINT_FILENAME = "model.txt"

TRAIN_NOISE_STREAM = 2
TEST_NOISE_STREAM = 3


def _prepare_output(config: ExperimentConfig) -> Path:
    """Create `config.out` and echo the resolved configuration into it."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    config.write(out)
    return out


@task
def compare_bounds_task(config: ExperimentConfig) -> List[BoundRow]:
    """
    Task run method computing every bound on the conditioned two-cluster graphs.

    Args:
        - config (ExperimentConfig): Uses `points`, `scale`, `repeats`,
            `samples`, `seed` and `backend`.

    Returns:
        One row per instance and conditioning level.
    """
    logger = get_run_logger()
    logger.info(
        f"Comparing bounds on {config.repeats} graphs with {config.points} points "
        f"per cluster, c = {config.scale}."
    )
    return bound_comparison(config)


@task
def write_bounds(rows: Sequence[BoundRow], out: Path) -> Tuple[Path, Path]:
    """Write the per-instance rows and their per-k summary."""
    detail, summary = out / BOUNDS_FILENAME, out / BOUNDS_SUMMARY_FILENAME
    write_csv(detail, BoundRow.HEADER, [row.as_row() for row in rows])
    write_csv(summary, SUMMARY_HEADER, summarize_bounds(rows))
    return detail, summary


@task
def write_graphs(config: ExperimentConfig, out: Path) -> Path:
    """
    Write the unconditioned graph of every instance as `graphs/<index>.txt`.
    """
    directory = out / "graphs"
    directory.mkdir(parents=True, exist_ok=True)
    for r, cut in enumerate(mixture_graphs(config)):
        write_graph(directory / f"{r:04d}.txt", cut)
    return directory


@task
def generate_images(config: ExperimentConfig) -> Tuple[List, List]:
    """
    Task run method returning clean training and test images.

    Raises:
        - `SubmodularDataException` if `images` holds too few images.
        - `DimensionMismatchException` if an image does not match `grid`.
    """
    logger = get_run_logger()
    source = config.images or "generated shapes"
    logger.info(
        f"Loading {config.n_train} training and {config.n_test} test images "
        f"from {source}."
    )
    return make_clean_images(config)


@task
def corrupt_images(
    images: Sequence[np.ndarray], noise: float, seed: int, stream: int
) -> List[NoisyPair]:
    """Flip-noise every image; image i uses the seed `(seed, stream, i)`."""
    return add_noise(images, noise, seed, stream)


@task
def train_supervised_model(
    config: ExperimentConfig, pairs: Sequence[NoisyPair]
) -> Tuple[DenoisingModel, TrainState]:
    """
    Task run method for conditional maximum likelihood on (clean, noisy) pairs,
    with optional cross-validation of the regularization.
    """
    logger = get_run_logger()
    base_functions = grid_cut_functions(*config.grid)
    if config.cv:
        weight = cross_validate(config, pairs, base_functions)
        logger.info(f"Cross-validation selected regularization {weight:g}.")
        config = dataclasses.replace(config, reg_alpha=weight, reg_t=weight)
    model, state = fit_conditional(config, pairs, base_functions)
    logger.info(
        f"Supervised model: alpha = {model.alpha.tolist()}, u = {model.u:.4f}."
    )
    return model, state


@task
def train_unsupervised_model(
    config: ExperimentConfig, noisy: Sequence[np.ndarray], known_pi: bool
) -> Tuple[DenoisingModel, TrainState]:
    """
    Task run method for latent maximum likelihood on noisy images only.
    """
    logger = get_run_logger()
    base_functions = grid_cut_functions(*config.grid)
    model, state = fit_latent(config, noisy, base_functions, known_pi)
    logger.info(
        f"Unsupervised model: alpha = {model.alpha.tolist()}, u = {model.u:.4f} "
        f"({'known' if known_pi else 'learned'} noise)."
    )
    return model, state


@task
def evaluate_model(
    model: DenoisingModel, pairs: Sequence[NoisyPair], config: ExperimentConfig
) -> Tuple[DenoiseReport, List[Dict[str, np.ndarray]]]:
    """
    Task run method decoding the test images with MAP and mean-marginals.
    """
    logger = get_run_logger()
    report, decoded = evaluate(model, pairs, config)
    for row in report.rows():
        logger.info(f"{row[1]}: mean error {row[2]:.4f} (std {row[3]:.4f}).")
    return report, decoded


@task
def write_report(report: DenoiseReport, out: Path) -> Path:
    """Write the per-decoder error summary as `report.csv`."""
    path = out / REPORT_FILENAME
    write_csv(path, DenoiseReport.HEADER, report.rows())
    return path


@task
def write_decoded_images(
    decoded: Sequence[Dict[str, np.ndarray]], grid: Tuple[int, int], out: Path
) -> Path:
    """Write every decoded image as `denoised/<index>_<decoder>.pbm`."""
    directory = out / "denoised"
    directory.mkdir(parents=True, exist_ok=True)
    for i, outputs in enumerate(decoded):
        for decoder, image in outputs.items():
            write_pbm(directory / f"{i:04d}_{decoder}.pbm", np.reshape(image, grid))
    return directory


@flow(name="bounds", validate_parameters=False)
def run_bounds(config: ExperimentConfig) -> List[BoundRow]:
    """
    Compare exact, L-field, logistic and superdifferential bounds and write
    `bounds.csv`, `bounds_summary.csv` and the instance graphs under `config.out`.
    """
    out = _prepare_output(config)
    write_graphs(config, out)
    rows = compare_bounds_task(config)
    write_bounds(rows, out)
    return rows


@flow(name="train-supervised", validate_parameters=False)
def run_supervised(config: ExperimentConfig) -> DenoiseReport:
    """
    Full supervised pipeline: data, noise, conditional training, decoding.

    Writes the checkpoint `model.txt` and the report `report.csv`.
    """
    out = _prepare_output(config)
    train, test = generate_images(config)
    train_pairs = corrupt_images(train, config.noise, config.seed, TRAIN_NOISE_STREAM)
    test_pairs = corrupt_images(test, config.noise, config.seed, TEST_NOISE_STREAM)
    model, state = train_supervised_model(config, train_pairs)
    save_checkpoint(out / CHECKPOINT_FILENAME, state, config.grid)
    report, _ = evaluate_model(model, test_pairs, config)
    write_report(report, out)
    return report


@flow(name="train-unsupervised", validate_parameters=False)
def run_unsupervised(
    config: ExperimentConfig, known_pi: Optional[bool] = None
) -> DenoiseReport:
    """
    Full unsupervised pipeline: training only sees noisy images; the clean test
    images are used for scoring alone.
    """
    known_pi = config.known_pi if known_pi is None else known_pi
    out = _prepare_output(config)
    train, test = generate_images(config)
    train_pairs = corrupt_images(train, config.noise, config.seed, TRAIN_NOISE_STREAM)
    test_pairs = corrupt_images(test, config.noise, config.seed, TEST_NOISE_STREAM)
    model, state = train_unsupervised_model(
        config, [pair.z for pair in train_pairs], known_pi
    )
    save_checkpoint(out / CHECKPOINT_FILENAME, state, config.grid)
    report, _ = evaluate_model(model, test_pairs, config)
    write_report(report, out)
    return report


@flow(name="denoise", validate_parameters=False)
def run_denoise(config: ExperimentConfig) -> DenoiseReport:
    """
    Denoise clean reference images corrupted at `config.noise` with a saved model.

    The references are every PBM of `config.images`, or `n_test` generated
    shapes. Writes the decoded images and `report.csv`.

    Raises:
        - `SubmodularConfigurationException` if `checkpoint` is missing.
        - `DimensionMismatchException` if the images do not match the model grid.
    """
    logger = get_run_logger()
    if config.checkpoint is None:
        raise SubmodularConfigurationException("Missing `checkpoint`.")
    state, grid = load_checkpoint(config.checkpoint)
    logger.info(f"Loaded a {grid[0]}x{grid[1]} model from {config.checkpoint}.")
    config = dataclasses.replace(config, grid=grid)
    out = _prepare_output(config)
    base_functions = grid_cut_functions(*grid)
    num_nodes = grid[0] * grid[1]
    if state.alpha.shape[0] != len(base_functions) or state.t.shape[0] != num_nodes:
        raise DimensionMismatchException("Checkpoint parameters do not match its grid.")
    model = DenoisingModel(base_functions, state.alpha, state.t, state.u)
    if config.images is not None:
        clean = load_images(Path(config.images), *grid)
    else:
        clean = gen_shapes(config.n_test, *grid, derive_seed(config.seed, 1))
    pairs = corrupt_images(clean, config.noise, config.seed, TEST_NOISE_STREAM)
    report, decoded = evaluate_model(model, pairs, config)
    write_decoded_images(decoded, grid, out)
    write_report(report, out)
    return report
