"""
Maximum-likelihood learning of f(x) = sum_k alpha_k f_k(x) - t^T x with the
logistic bound in place of A(f), by projected stochastic subgradient over our
own logistic samples. Covers plain, conditional (flip-noise channel) and latent
(noisy observations only) likelihoods, plus the L-field degeneracy diagnostic.
"""
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from prefect.logging import get_logger
from scipy.special import expit, logit

from prefect_submodular.bounds import perturb_and_map
from prefect_submodular.exceptions import (
    DimensionMismatchException,
    MalformedValueException,
    NotTrainedException,
    PreconditionViolationException,
    SubmodularDataException,
)
from prefect_submodular.sfm import minimize
from prefect_submodular.submodular import (
    SetFunction,
    SubmodularMixture,
    as_binary_vector,
    lovasz_extension,
)
from prefect_submodular.utils import (
    logistic_sample,
    read_key_value,
    sample_rng,
    write_key_value,
)

LOGIT_CLAMP = 30.0
LATENT_REGULARIZATION = 1e-2

logger = get_logger("submodular.learning")


def clamp_logit(value):
    """Clamp logits to +-30."""
    return np.clip(value, -LOGIT_CLAMP, LOGIT_CLAMP)


def noise_logit(pi: float) -> float:
    """u = log(pi / (1 - pi)), clamped."""
    return float(clamp_logit(logit(pi)))


def modular_shift(u: float, z: np.ndarray) -> np.ndarray:
    """
    m(z) = u (2 z - 1): the conditional model is exp(-f(x) - m(z)^T x).
    """
    return u * (2.0 * np.asarray(z, dtype=float) - 1.0)


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """
    Empirical means of the base functions and of x over a dataset.
    """

    mean_fk: np.ndarray
    mean_x: np.ndarray
    num_samples: int


@dataclass(frozen=True, eq=False)
class NoisyPair:
    """
    A noisy observation `z` and, when supervised, its clean image `x`.
    """

    z: np.ndarray
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        """Clean and noisy images must have one shape."""
        if self.x is not None and np.shape(self.x) != np.shape(self.z):
            raise DimensionMismatchException("Clean and noisy images differ in size.")


@dataclass(frozen=True, eq=False)
class TrainState:
    """
    Iterate, running averages and settings of the stochastic subgradient method.

    Sample h draws its randomness from the child stream `(seed, h)`, so a state
    fully determines the rest of a run.
    """

    alpha: np.ndarray
    t: np.ndarray
    u: float
    h: int
    alpha_avg: np.ndarray
    t_avg: np.ndarray
    u_avg: float
    seed: int = 0
    step: float = 1.0
    reg_alpha: float = 1e-3
    reg_t: float = 1e-3

    @classmethod
    def initial(
        cls,
        num_functions: int,
        num_nodes: int,
        seed: int = 0,
        step: float = 1.0,
        reg_alpha: float = 1e-3,
        reg_t: float = 1e-3,
        u: float = 0.0,
    ) -> "TrainState":
        """alpha = 0, t = 0, h = 0."""
        return cls(
            alpha=np.zeros(num_functions),
            t=np.zeros(num_nodes),
            u=float(u),
            h=0,
            alpha_avg=np.zeros(num_functions),
            t_avg=np.zeros(num_nodes),
            u_avg=float(u),
            seed=seed,
            step=step,
            reg_alpha=reg_alpha,
            reg_t=reg_t,
        )

    def mixture(self, base_functions: Sequence[SetFunction]) -> SubmodularMixture:
        """The model at the current iterate."""
        return SubmodularMixture(tuple(base_functions), self.alpha, self.t)


def compute_stats(
    data: Sequence[np.ndarray], base_functions: Sequence[SetFunction]
) -> SufficientStats:
    """
    Empirical means <f_k(x)> and <x>.

    Raises:
        - `SubmodularDataException` if `data` is empty.
        - `DimensionMismatchException` if an image has the wrong size.
    """
    if len(data) == 0:
        raise SubmodularDataException("Cannot compute statistics of an empty dataset.")
    num_nodes = base_functions[0].num_nodes if base_functions else len(data[0])
    X = np.stack([as_binary_vector(x, num_nodes) for x in data])
    K = len(base_functions)
    mixture = SubmodularMixture(tuple(base_functions), np.zeros(K), np.zeros(num_nodes))
    return SufficientStats(
        mean_fk=mixture.base_values(X).mean(axis=0),
        mean_x=X.mean(axis=0),
        num_samples=X.shape[0],
    )


def ml_subgradient(
    stats: SufficientStats, fk_y: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stochastic subgradient of <f_k> alpha - t^T <x> + A_logistic(f) at one sample.

    Returns:
        - The alpha part, <f_k> - f_k(y*).
        - The t part, y* - <x>.
    """
    return stats.mean_fk - fk_y, y - stats.mean_x


def conditional_subgradient(
    fk_x: np.ndarray, x: np.ndarray, fk_y: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Same as `ml_subgradient` with the statistics of a single clean image x_n.
    """
    return fk_x - fk_y, y - x


def latent_subgradient(
    u: float,
    z: np.ndarray,
    fk_conditional: np.ndarray,
    y_conditional: np.ndarray,
    fk_free: np.ndarray,
    y_free: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Stochastic subgradient of A(f) - A(f + m(z)) - u 1^T z + D log(1 + e^u).

    `y_conditional` maximizes the perturbed conditional model, `y_free` the
    perturbed prior, each with its own logistic sample.
    """
    z = np.asarray(z, dtype=float)
    g_alpha = fk_conditional - fk_free
    g_t = y_free - y_conditional
    g_u = float((2 * z - 1) @ y_conditional - z.sum() + z.shape[0] * expit(u))
    return g_alpha, g_t, g_u


def apply_subgradient(
    state: TrainState,
    g_alpha: np.ndarray,
    g_t: np.ndarray,
    g_u: float = 0.0,
    learn_u: bool = False,
    reg_alpha: Optional[float] = None,
    reg_t: Optional[float] = None,
) -> TrainState:
    """
    One projected step of size C / sqrt(h + 1) with l2 regularization, then
    the running averages.
    """
    reg_alpha = state.reg_alpha if reg_alpha is None else reg_alpha
    reg_t = state.reg_t if reg_t is None else reg_t
    h = state.h + 1
    eta = state.step / np.sqrt(h)
    alpha = np.maximum(0.0, state.alpha - eta * (g_alpha + reg_alpha * state.alpha))
    t = state.t - eta * (g_t + reg_t * state.t)
    u = float(clamp_logit(state.u - eta * g_u)) if learn_u else state.u
    return dataclasses.replace(
        state,
        alpha=alpha,
        t=t,
        u=u,
        h=h,
        alpha_avg=state.alpha_avg + (alpha - state.alpha_avg) / h,
        t_avg=state.t_avg + (t - state.t_avg) / h,
        u_avg=state.u_avg + (u - state.u_avg) / h,
    )


def sgd_ml_step(
    state: TrainState,
    stats: SufficientStats,
    base_functions: Sequence[SetFunction],
    backend: str = "auto",
) -> TrainState:
    """
    One stochastic subgradient iteration of logistic-bound maximum likelihood.

    Draws one logistic z, solves a single submodular minimization for y*, and
    updates t and the projected alpha.
    """
    mixture = state.mixture(base_functions)
    z = logistic_sample(sample_rng(state.seed, state.h), mixture.num_nodes)
    y = minimize(mixture, z, backend=backend).argmin
    fk_y = mixture.base_values(y[None, :])[0]
    g_alpha, g_t = ml_subgradient(stats, fk_y, y)
    return apply_subgradient(state, g_alpha, g_t)


def conditional_sgd_step(
    state: TrainState,
    pairs: Sequence[NoisyPair],
    base_functions: Sequence[SetFunction],
    backend: str = "auto",
) -> TrainState:
    """
    One iteration of conditional maximum likelihood -log p(x_n | z_n).

    Samples a pair and a logistic vector; the conditional model of pair n is f
    shifted by the modular term m(z_n) = u (2 z_n - 1), with u held fixed.

    Raises:
        - `PreconditionViolationException` if the sampled pair has no clean image.
    """
    mixture = state.mixture(base_functions)
    rng = sample_rng(state.seed, state.h)
    pair = pairs[int(rng.integers(len(pairs)))]
    z = logistic_sample(rng, mixture.num_nodes)
    if pair.x is None:
        raise PreconditionViolationException("Conditional learning needs clean images.")
    x = np.asarray(pair.x)
    y = minimize(mixture, z - modular_shift(state.u, pair.z), backend=backend).argmin
    values = mixture.base_values(np.stack([x, y]))
    g_alpha, g_t = conditional_subgradient(values[0], x, values[1], y)
    return apply_subgradient(state, g_alpha, g_t)


def latent_sgd_step(
    state: TrainState,
    noisy: Sequence[np.ndarray],
    base_functions: Sequence[SetFunction],
    learn_u: bool = False,
    backend: str = "auto",
) -> TrainState:
    """
    One iteration of latent maximum likelihood -log p(z_n) with clean images unseen.

    Two independent logistic vectors: one for the conditional term A(f + m(z_n)),
    one for the prior term A(f). The objective is a difference of convex bounds, so
    only stationarity is expected. Regularization is fixed at 1e-2.
    """
    mixture = state.mixture(base_functions)
    D = mixture.num_nodes
    rng = sample_rng(state.seed, state.h)
    z_n = np.asarray(noisy[int(rng.integers(len(noisy)))])
    z_conditional = logistic_sample(rng, D)
    z_free = logistic_sample(rng, D)
    shift = modular_shift(state.u, z_n)
    y_conditional = minimize(mixture, z_conditional - shift, backend=backend).argmin
    y_free = minimize(mixture, z_free, backend=backend).argmin
    values = mixture.base_values(np.stack([y_conditional, y_free]))
    g_alpha, g_t, g_u = latent_subgradient(
        state.u, z_n, values[0], y_conditional, values[1], y_free
    )
    return apply_subgradient(
        state,
        g_alpha,
        g_t,
        g_u,
        learn_u=learn_u,
        reg_alpha=LATENT_REGULARIZATION,
        reg_t=LATENT_REGULARIZATION,
    )


def finalize(state: TrainState) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    The averaged iterates (alpha, t, u).

    Raises:
        - `NotTrainedException` if no step was taken.
    """
    if state.h == 0:
        raise NotTrainedException("Cannot finalize a state with no training steps.")
    return state.alpha_avg.copy(), state.t_avg.copy(), float(state.u_avg)


@dataclass(frozen=True, eq=False)
class LFieldDiagnostic:
    """
    Reduced L-field likelihood: sum_k jensen_gaps_k alpha_k, plus the closed-form t.
    """

    jensen_gaps: np.ndarray
    t: np.ndarray


def lfield_ml_diagnostic(
    stats: SufficientStats, base_functions: Sequence[SetFunction]
) -> LFieldDiagnostic:
    """
    Coefficients g_k = <f_k(x)> - f_k(<x>) of the reduced L-field likelihood.

    Each g_k is non-negative by Jensen's inequality, so L-field maximum likelihood
    is minimized by alpha = 0; t then solves t_d - s_d = logit(<x>_d) with s = 0.
    """
    gaps = np.array(
        [
            stats.mean_fk[k] - lovasz_extension(fk, stats.mean_x)
            for k, fk in enumerate(base_functions)
        ]
    )
    with np.errstate(divide="ignore"):
        t = clamp_logit(logit(stats.mean_x))
    return LFieldDiagnostic(jensen_gaps=gaps, t=t)


def lfield_ml_fit(
    stats: SufficientStats,
    base_functions: Sequence[SetFunction],
    reg_alpha: float = 1e-2,
    iterations: int = 2000,
    step: float = 1.0,
    alpha0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Projected gradient on sum_k g_k alpha_k + reg_alpha / 2 |alpha|^2, alpha >= 0.
    """
    gaps = lfield_ml_diagnostic(stats, base_functions).jensen_gaps
    alpha = np.ones(len(base_functions)) if alpha0 is None else np.array(alpha0, float)
    for h in range(1, iterations + 1):
        alpha = np.maximum(0.0, alpha - step / np.sqrt(h) * (gaps + reg_alpha * alpha))
    return alpha


def estimate_noise_logit(pairs: Sequence[NoisyPair]) -> float:
    """
    Closed-form maximum likelihood u from the flip rate of supervised pairs.
    """
    flips = sum(int(np.sum(np.asarray(p.x) != np.asarray(p.z))) for p in pairs)
    total = sum(np.size(p.z) for p in pairs)
    with np.errstate(divide="ignore"):
        return float(clamp_logit(logit(flips / total)))


def expected_statistics(
    mixture: SubmodularMixture, z_batch: np.ndarray, backend: str = "auto"
) -> Tuple[np.ndarray, np.ndarray]:
    """
    <f_k(y*)> and <y*> over a batch of logistic samples.
    """
    _, maximizers = perturb_and_map(mixture, z_batch, backend=backend)
    return mixture.base_values(maximizers).mean(axis=0), maximizers.mean(axis=0)


def ml_objective(
    alpha: np.ndarray,
    t: np.ndarray,
    stats: SufficientStats,
    base_functions: Sequence[SetFunction],
    z_batch: np.ndarray,
    reg_alpha: float = 0.0,
    reg_t: float = 0.0,
    backend: str = "auto",
) -> Tuple[float, float]:
    """
    Sample estimate of the regularized logistic-bound negative log-likelihood.

    Returns:
        - The mean over `z_batch`.
        - Its standard error.
    """
    mixture = SubmodularMixture(tuple(base_functions), alpha, t)
    values, _ = perturb_and_map(mixture, z_batch, backend=backend)
    constant = (
        alpha @ stats.mean_fk
        - t @ stats.mean_x
        + 0.5 * reg_alpha * alpha @ alpha
        + 0.5 * reg_t * t @ t
    )
    samples = constant + values
    se = 0.0
    if len(samples) > 1:
        se = float(np.std(samples, ddof=1) / np.sqrt(len(samples)))
    return float(samples.mean()), se


def _log_progress(state: TrainState, log_every: int, label: str):
    """Log the iterate every `log_every` steps."""
    if log_every and state.h % log_every == 0:
        logger.info(
            f"{label} iteration {state.h}: alpha={np.round(state.alpha, 4).tolist()} "
            f"|t|={np.linalg.norm(state.t):.4f} u={state.u:.4f}"
        )


def train_supervised(
    stats: SufficientStats,
    base_functions: Sequence[SetFunction],
    state: TrainState,
    iterations: int,
    backend: str = "auto",
    log_every: int = 1000,
) -> TrainState:
    """Run `iterations` steps of `sgd_ml_step`."""
    for _ in range(iterations):
        state = sgd_ml_step(state, stats, base_functions, backend=backend)
        _log_progress(state, log_every, "ML")
    return state


def train_conditional(
    pairs: Sequence[NoisyPair],
    base_functions: Sequence[SetFunction],
    state: TrainState,
    iterations: int,
    backend: str = "auto",
    log_every: int = 1000,
) -> TrainState:
    """Run `iterations` steps of `conditional_sgd_step`."""
    for _ in range(iterations):
        state = conditional_sgd_step(state, pairs, base_functions, backend=backend)
        _log_progress(state, log_every, "Conditional ML")
    return state


def train_latent(
    noisy: Sequence[np.ndarray],
    base_functions: Sequence[SetFunction],
    state: TrainState,
    iterations: int,
    learn_u: bool = False,
    warm_start: int = 0,
    backend: str = "auto",
    log_every: int = 1000,
) -> TrainState:
    """
    Latent maximum likelihood, after `warm_start` plain ML steps on the noisy
    images treated as clean.

    The warm start only moves (alpha, t). The latent run continues its step
    schedule at h = `warm_start`, so the warm model enters the running averages
    with the weight of `warm_start` iterates and the first latent steps stay small.
    """
    if warm_start > 0:
        stats = compute_stats(noisy, base_functions)
        warm = train_supervised(
            stats,
            base_functions,
            dataclasses.replace(
                state, reg_alpha=LATENT_REGULARIZATION, reg_t=LATENT_REGULARIZATION
            ),
            warm_start,
            backend=backend,
            log_every=log_every,
        )
        alpha, t, _ = finalize(warm)
        state = dataclasses.replace(
            state,
            alpha=alpha,
            t=t,
            alpha_avg=alpha.copy(),
            t_avg=t.copy(),
            h=warm.h,
            seed=state.seed + 1,
        )
    for _ in range(iterations):
        state = latent_sgd_step(state, noisy, base_functions, learn_u, backend=backend)
        _log_progress(state, log_every, "Latent ML")
    return state


def save_checkpoint(
    path: Union[str, Path], state: TrainState, grid: Tuple[int, int]
):
    """
    Write the averaged model as `key = value` lines, floats with 17 significant
    digits so that they read back bit-exactly.
    """
    alpha, t, u = finalize(state)

    def join(values):
        """Comma-separated, 17 significant digits."""
        return ",".join(format(float(v), ".17g") for v in values)

    write_key_value(
        path,
        {
            "grid": f"{grid[0]}x{grid[1]}",
            "alpha": join(alpha),
            "t": join(t),
            "u": format(u, ".17g"),
            "h": str(state.h),
            "seed": str(state.seed),
            "step": format(state.step, ".17g"),
            "reg_alpha": format(state.reg_alpha, ".17g"),
            "reg_t": format(state.reg_t, ".17g"),
        },
    )


def load_checkpoint(path: Union[str, Path]) -> Tuple[TrainState, Tuple[int, int]]:
    """
    Read a checkpoint; the returned state has iterate and average equal to the
    saved model.

    Raises:
        - `SubmodularDataException` if the file cannot be read.
        - `MalformedValueException` if a key is missing or unparsable.
    """
    try:
        entries = read_key_value(path)
    except OSError as exc:
        raise SubmodularDataException(f"Cannot read checkpoint `{path}`.") from exc

    def split(values: str) -> np.ndarray:
        """Inverse of the comma-separated encoding."""
        return np.array([float(v) for v in values.split(",") if v.strip()])

    try:
        height, width = (int(v) for v in entries["grid"].lower().split("x"))
        alpha, t = split(entries["alpha"]), split(entries["t"])
        u = float(entries["u"])
        state = TrainState(
            alpha=alpha,
            t=t,
            u=u,
            h=int(entries["h"]),
            alpha_avg=alpha.copy(),
            t_avg=t.copy(),
            u_avg=u,
            seed=int(entries["seed"]),
            step=float(entries["step"]),
            reg_alpha=float(entries["reg_alpha"]),
            reg_t=float(entries["reg_t"]),
        )
    except (KeyError, ValueError) as exc:
        raise MalformedValueException(f"Malformed checkpoint {path}: {exc}") from exc
    return state, (height, width)
