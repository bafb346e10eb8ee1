"""
Data generation, the flip-noise channel, decoders and metrics for the two
experiment families: comparing log-partition bounds on conditioned
two-cluster graphs, and denoising binary images.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from prefect.logging import get_logger
from scipy.spatial.distance import pdist

from prefect_submodular.bounds import (
    MAX_EXACT_DIM,
    exact_log_partition,
    lfield_bound,
    logistic_bound,
    logistic_marginals,
    superdiff_lower_bound,
)
from prefect_submodular.config import ExperimentConfig
from prefect_submodular.exceptions import (
    DimensionMismatchException,
    PreconditionViolationException,
    SubmodularDataException,
)
from prefect_submodular.learning import (
    LATENT_REGULARIZATION,
    NoisyPair,
    TrainState,
    estimate_noise_logit,
    finalize,
    modular_shift,
    noise_logit,
    train_conditional,
    train_latent,
)
from prefect_submodular.sfm import minimize
from prefect_submodular.submodular import (
    CutFunction,
    SetFunction,
    SubmodularMixture,
    restrict_and_contract,
)
from prefect_submodular.utils import derive_seed, read_pbm, sample_rng

CLUSTER_CENTERS = ((3.0, 3.0), (-3.0, -3.0))
DECODERS = ("noisy", "map", "mean_marginals")
CV_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
UNKNOWN_NOISE_INIT = 0.25

logger = get_logger("submodular.experiments")


def gen_mixture_points(n: int, seed: int) -> np.ndarray:
    """
    2n points in the plane: rows 0..n-1 around (3, 3), rows n..2n-1 around (-3, -3).
    """
    if n < 1:
        raise PreconditionViolationException("Need at least one point per cluster.")
    rng = np.random.default_rng(seed)
    return np.vstack(
        [rng.normal(loc=center, scale=1.0, size=(n, 2)) for center in CLUSTER_CENTERS]
    )


def gen_mixture_graph(n: int, scale: float, seed: int) -> CutFunction:
    """
    Complete graph on the 2n mixture points with weights exp(-scale * |x - y|).

    Raises:
        - `PreconditionViolationException` if `n` < 1.
    """
    points = gen_mixture_points(n, seed)
    i, j = np.triu_indices(points.shape[0], k=1)
    weights = np.exp(-scale * pdist(points))
    return CutFunction.from_edges(
        points.shape[0], list(zip(i.tolist(), j.tolist(), weights.tolist()))
    )


def cluster_conditioning(n: int, k: int) -> Dict[int, int]:
    """The first k points of cluster 1 go to 0, the first k of cluster 2 to 1."""
    if not 0 <= k <= n:
        raise PreconditionViolationException(f"`k` must lie in [0, {n}], got {k}.")
    fixed = {i: 0 for i in range(k)}
    fixed.update({n + i: 1 for i in range(k)})
    return fixed


@dataclass(frozen=True)
class BoundRow:
    """
    The four log-partition estimates for one conditioned instance.
    """

    instance_id: int
    k_conditioned: int
    exact: float
    lfield: float
    logistic_mean: float
    logistic_se: float
    superdiff_lower: float

    HEADER = (
        "instance_id",
        "k_conditioned",
        "exact",
        "lfield",
        "logistic_mean",
        "logistic_se",
        "superdiff_lower",
    )

    def as_row(self) -> Tuple:
        """Values in `HEADER` order."""
        return (
            self.instance_id,
            self.k_conditioned,
            self.exact,
            self.lfield,
            self.logistic_mean,
            self.logistic_se,
            self.superdiff_lower,
        )


def compare_bounds(
    f: SetFunction,
    num_samples: int,
    seed: int,
    instance_id: int = 0,
    k_conditioned: int = 0,
    backend: str = "auto",
) -> BoundRow:
    """
    Evaluate every bound on `f`; `exact` is NaN beyond the enumeration limit.
    """
    exact = (
        exact_log_partition(f).value if f.num_nodes <= MAX_EXACT_DIM else float("nan")
    )
    logistic = logistic_bound(
        f, num_samples=num_samples, rng_seed=seed, backend=backend
    )
    return BoundRow(
        instance_id=instance_id,
        k_conditioned=k_conditioned,
        exact=float(exact),
        lfield=lfield_bound(f, backend=backend).value,
        logistic_mean=logistic.value,
        logistic_se=logistic.std_error,
        superdiff_lower=superdiff_lower_bound(f, backend=backend).value,
    )


def mixture_graphs(config: ExperimentConfig) -> List[CutFunction]:
    """The `repeats` two-cluster graphs; instance r uses the seed `(seed, r)`."""
    return [
        gen_mixture_graph(config.points, config.scale, derive_seed(config.seed, r))
        for r in range(config.repeats)
    ]


def bound_comparison(config: ExperimentConfig) -> List[BoundRow]:
    """
    Bounds on `repeats` random two-cluster graphs, conditioned on k = 1..n
    points per cluster.

    Logistic samples of instance r at conditioning level k use `(seed, r, k)`.
    """
    n = config.points
    rows = []
    for r, cut in enumerate(mixture_graphs(config)):
        for k in range(1, n + 1):
            conditioned = restrict_and_contract(cut, cluster_conditioning(n, k))
            rows.append(
                compare_bounds(
                    conditioned,
                    config.samples,
                    derive_seed(config.seed, r, k),
                    instance_id=r,
                    k_conditioned=k,
                    backend=config.backend,
                )
            )
        logger.info(f"Bound comparison: instance {r + 1}/{config.repeats} done.")
    return rows


SUMMARY_HEADER = (
    "k_conditioned",
    "exact_mean",
    "exact_std",
    "lfield_mean",
    "lfield_std",
    "logistic_mean",
    "logistic_std",
    "superdiff_lower_mean",
    "superdiff_lower_std",
)


def summarize_bounds(rows: Sequence[BoundRow]) -> List[Tuple]:
    """
    Mean and standard deviation over instances of each bound, per k.
    """
    summary = []
    for k in sorted({row.k_conditioned for row in rows}):
        selected = [row for row in rows if row.k_conditioned == k]
        entry: List = [k]
        for name in ("exact", "lfield", "logistic_mean", "superdiff_lower"):
            values = np.array([getattr(row, name) for row in selected])
            entry += [float(values.mean()), float(values.std())]
        summary.append(tuple(entry))
    return summary


def _check_grid(height: int, width: int):
    """Both sides of the grid must be >= 1."""
    if height < 1 or width < 1:
        raise PreconditionViolationException(
            f"Degenerate grid {height}x{width}: both sides must be >= 1."
        )


def rectangle_image(
    height: int, width: int, top: int, left: int, bottom: int, right: int
) -> np.ndarray:
    """Flattened image of the filled rectangle rows top..bottom, cols left..right."""
    _check_grid(height, width)
    image = np.zeros((height, width), dtype=np.int8)
    image[top : bottom + 1, left : right + 1] = 1
    return image.reshape(-1)


def _random_shape(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """A rectangle or an ellipse around the center, with equal odds."""
    cy, cx = height // 2, width // 2
    if rng.random() < 0.5:
        top, bottom = rng.integers(0, cy + 1), rng.integers(cy, height)
        left, right = rng.integers(0, cx + 1), rng.integers(cx, width)
        return rectangle_image(height, width, top, left, bottom, right)
    # semi-axes at least twice the jitter keep the center pixel inside
    oy = rng.uniform(-height / 8, height / 8)
    ox = rng.uniform(-width / 8, width / 8)
    ay = rng.uniform(height / 4, 0.45 * height)
    ax = rng.uniform(width / 4, 0.45 * width)
    rows, cols = np.mgrid[0:height, 0:width]
    inside = ((rows - cy - oy) / ay) ** 2 + ((cols - cx - ox) / ax) ** 2 <= 1.0
    return inside.astype(np.int8).reshape(-1)


def gen_shapes(num_images: int, height: int, width: int, seed: int) -> List[np.ndarray]:
    """
    Random filled rectangles and ellipses covering the center pixel of an
    H x W grid, flattened row-major. Image i only depends on `(seed, i)`.

    Raises:
        - `PreconditionViolationException` if the grid is degenerate.
    """
    _check_grid(height, width)
    return [
        _random_shape(sample_rng(seed, i), height, width) for i in range(num_images)
    ]


def flip_noise(x: np.ndarray, pi: float, seed: int) -> np.ndarray:
    """
    Flip every bit of `x` independently with probability `pi`.
    """
    if not 0.0 <= pi <= 1.0:
        raise PreconditionViolationException(f"`pi` must lie in [0, 1], got {pi}.")
    x = np.asarray(x, dtype=np.int8)
    flips = np.random.default_rng(seed).random(x.shape) < pi
    return np.where(flips, 1 - x, x).astype(np.int8)


def grid_cut_functions(height: int, width: int) -> Tuple[CutFunction, CutFunction]:
    """
    Unit-weight cuts between horizontal and between vertical neighbors; pixel
    (r, c) is variable r * width + c.
    """
    _check_grid(height, width)
    index = np.arange(height * width).reshape(height, width)
    horizontal = zip(index[:, :-1].ravel(), index[:, 1:].ravel())
    vertical = zip(index[:-1, :].ravel(), index[1:, :].ravel())
    num_nodes = height * width

    def unit_cut(pairs) -> CutFunction:
        """Cut with unit weight on every neighbor pair."""
        edges = [(int(i), int(j), 1.0) for i, j in pairs]
        return CutFunction.from_edges(num_nodes, edges)

    return unit_cut(horizontal), unit_cut(vertical)


@dataclass(frozen=True, eq=False)
class DenoisingModel:
    """
    Prior exp(-sum_k alpha_k f_k(x) + t^T x) and flip channel with logit u.
    """

    base_functions: Tuple[SetFunction, ...]
    alpha: np.ndarray
    t: np.ndarray
    u: float

    def prior(self) -> SubmodularMixture:
        """The learned f without the observation term."""
        return SubmodularMixture(tuple(self.base_functions), self.alpha, self.t)

    def posterior(self, z: np.ndarray) -> SubmodularMixture:
        """The conditional model f(x) + m(z)^T x given the noisy image z."""
        return self.prior().shifted(-modular_shift(self.u, z))


def denoise_map(
    model: DenoisingModel, z: np.ndarray, backend: str = "auto"
) -> np.ndarray:
    """
    Maximum a posteriori image by a single graph cut.
    """
    return minimize(model.posterior(z), backend=backend).argmin


def denoise_mean_marginals(
    model: DenoisingModel,
    z: np.ndarray,
    num_samples: int = 100,
    seed: int = 0,
    backend: str = "auto",
) -> np.ndarray:
    """
    Logistic marginals of the posterior thresholded at 0.5; ties keep z_d.
    """
    mu = logistic_marginals(
        model.posterior(z), num_samples=num_samples, rng_seed=seed, backend=backend
    ).mu
    z = np.asarray(z, dtype=np.int8)
    return np.where(mu > 0.5, 1, np.where(mu < 0.5, 0, z)).astype(np.int8)


def hamming_error(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of positions where `a` and `b` differ."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchException(f"Shapes {a.shape} and {b.shape} differ.")
    return float(np.mean(a != b))


@dataclass
class DenoiseReport:
    """
    Per-image normalized Hamming errors of each decoder at one noise level.
    """

    noise: float
    errors: Dict[str, List[float]] = field(default_factory=dict)

    HEADER = ("noise", "decoder", "mean_error", "std_error", "num_images")

    def mean(self, decoder: str) -> float:
        """Mean error of `decoder` over the images."""
        return float(np.mean(self.errors[decoder]))

    def std(self, decoder: str) -> float:
        """Population standard deviation of the per-image errors."""
        return float(np.std(self.errors[decoder]))

    def dominance(self, decoder: str) -> float:
        """Fraction of images on which `decoder` beats the noisy input."""
        noisy = np.asarray(self.errors["noisy"])
        return float(np.mean(np.asarray(self.errors[decoder]) < noisy))

    def rows(self) -> List[Tuple]:
        """One CSV row per decoder, in `DECODERS` order."""
        return [
            (
                float(self.noise),
                decoder,
                self.mean(decoder),
                self.std(decoder),
                len(self.errors[decoder]),
            )
            for decoder in DECODERS
            if decoder in self.errors
        ]


def load_images(directory: Path, height: int, width: int) -> List[np.ndarray]:
    """
    All `*.pbm` images of `directory` in name order, flattened.

    Raises:
        - `SubmodularDataException` if there is no image.
        - `DimensionMismatchException` if an image is not `height` x `width`.
    """
    paths = sorted(Path(directory).glob("*.pbm"))
    if not paths:
        raise SubmodularDataException(f"No `.pbm` image in {directory}.")
    images = []
    for path in paths:
        image = read_pbm(path)
        if image.shape != (height, width):
            found = f"{image.shape[0]}x{image.shape[1]}"
            msg = f"{path.name} is {found}, expected {height}x{width}."
            raise DimensionMismatchException(msg)
        images.append(image.reshape(-1))
    return images


def make_clean_images(
    config: ExperimentConfig,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Training and test images: the first `n_train` then the next `n_test` images
    of `config.images`, or freshly generated shapes.
    """
    height, width = config.grid
    if config.images is not None:
        images = load_images(Path(config.images), height, width)
        if len(images) < config.n_train + config.n_test:
            msg = (
                f"{config.images} holds {len(images)} images, "
                f"{config.n_train + config.n_test} needed."
            )
            raise SubmodularDataException(msg)
        stop = config.n_train + config.n_test
        return images[: config.n_train], images[config.n_train : stop]
    return (
        gen_shapes(config.n_train, height, width, derive_seed(config.seed, 0)),
        gen_shapes(config.n_test, height, width, derive_seed(config.seed, 1)),
    )


def add_noise(
    images: Sequence[np.ndarray], pi: float, seed: int, stream: int
) -> List[NoisyPair]:
    """Corrupt image i with the noise seed `(seed, stream, i)`."""
    return [
        NoisyPair(z=flip_noise(x, pi, derive_seed(seed, stream, i)), x=np.asarray(x))
        for i, x in enumerate(images)
    ]


def fit_conditional(
    config: ExperimentConfig,
    pairs: Sequence[NoisyPair],
    base_functions: Sequence[SetFunction],
    reg_alpha: Optional[float] = None,
    reg_t: Optional[float] = None,
) -> Tuple[DenoisingModel, TrainState]:
    """
    Supervised training: closed-form u from the flip rate, then conditional ML.
    """
    u = estimate_noise_logit(pairs)
    state = TrainState.initial(
        len(base_functions),
        base_functions[0].num_nodes,
        seed=derive_seed(config.seed, 4),
        step=config.step,
        reg_alpha=config.reg_alpha if reg_alpha is None else reg_alpha,
        reg_t=config.reg_t if reg_t is None else reg_t,
        u=u,
    )
    logger.info(f"Estimated noise logit u = {u:.4f} from {len(pairs)} pairs.")
    state = train_conditional(
        pairs,
        base_functions,
        state,
        config.iters,
        backend=config.backend,
        log_every=config.log_every,
    )
    alpha, t, u = finalize(state)
    return DenoisingModel(tuple(base_functions), alpha, t, u), state


def fit_latent(
    config: ExperimentConfig,
    noisy: Sequence[np.ndarray],
    base_functions: Sequence[SetFunction],
    known_pi: bool,
) -> Tuple[DenoisingModel, TrainState]:
    """
    Unsupervised training on noisy images only; u is fixed at logit(noise) when
    the noise level is known, else learned from logit(0.25).
    """
    u = noise_logit(config.noise if known_pi else UNKNOWN_NOISE_INIT)
    state = TrainState.initial(
        len(base_functions),
        base_functions[0].num_nodes,
        seed=derive_seed(config.seed, 5),
        step=config.step,
        reg_alpha=LATENT_REGULARIZATION,
        reg_t=LATENT_REGULARIZATION,
        u=u,
    )
    state = train_latent(
        noisy,
        base_functions,
        state,
        config.iters,
        learn_u=not known_pi,
        warm_start=config.iters // 10,
        backend=config.backend,
        log_every=config.log_every,
    )
    alpha, t, u = finalize(state)
    return DenoisingModel(tuple(base_functions), alpha, t, u), state


def evaluate(
    model: DenoisingModel,
    pairs: Sequence[NoisyPair],
    config: ExperimentConfig,
) -> Tuple[DenoiseReport, List[Dict[str, np.ndarray]]]:
    """
    Decode every test pair both ways and collect errors against the clean image.

    Mean-marginal decoding of image i uses the logistic seed `(seed, 6, i)`.
    Also returns the decoded images.
    """
    report = DenoiseReport(noise=config.noise, errors={d: [] for d in DECODERS})
    decoded = []
    for i, pair in enumerate(pairs):
        outputs = {
            "noisy": pair.z,
            "map": denoise_map(model, pair.z, backend=config.backend),
            "mean_marginals": denoise_mean_marginals(
                model,
                pair.z,
                num_samples=config.samples,
                seed=derive_seed(config.seed, 6, i),
                backend=config.backend,
            ),
        }
        for decoder, image in outputs.items():
            report.errors[decoder].append(hamming_error(image, pair.x))
        decoded.append(outputs)
    return report, decoded


def cross_validate(
    config: ExperimentConfig,
    pairs: Sequence[NoisyPair],
    base_functions: Sequence[SetFunction],
    grid: Sequence[float] = CV_GRID,
) -> float:
    """
    Serial hold-out search of a shared regularization weight for alpha and t.

    The last third of `pairs` (at least one) is held out; the weight with the
    lowest held-out MAP error wins, ties going to the stronger regularization.
    """
    if len(pairs) < 2:
        raise SubmodularDataException("Cross-validation needs at least 2 pairs.")
    held_out = max(1, len(pairs) // 3)
    train, valid = pairs[:-held_out], pairs[-held_out:]
    best, best_error = None, np.inf
    for weight in sorted(grid, reverse=True):
        model, _ = fit_conditional(config, train, base_functions, weight, weight)
        decoded = [denoise_map(model, p.z, config.backend) for p in valid]
        error = float(np.mean([hamming_error(y, p.x) for y, p in zip(decoded, valid)]))
        logger.info(f"Regularization {weight:g}: held-out MAP error {error:.4f}.")
        if error < best_error:
            best, best_error = weight, error
    return best
