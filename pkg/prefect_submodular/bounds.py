"""
Log-partition function A(f) = log sum_x exp(-f(x)) of log-supermodular models:
exact enumeration, the L-field and logistic (perturb-and-MAP) upper bounds, a
superdifferential lower bound, and approximate marginals as bound gradients.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from prefect.logging import get_logger
from scipy.special import entr, expit, logsumexp

from prefect_submodular.exceptions import (
    PreconditionViolationException,
    ProblemTooLargeException,
    SubmodularDataException,
)
from prefect_submodular.sfm import (
    MAX_BRUTEFORCE_DIM,
    minimize,
    minimize_bruteforce_batch,
)
from prefect_submodular.submodular import (
    BasePoint,
    SetFunction,
    as_binary_vector,
    greedy_base_vertex,
    iter_hypercube,
    restrict_and_contract,
)
from prefect_submodular.utils import logistic_sample, sample_rng

MAX_EXACT_DIM = 20
TOL_DC = 1e-9

logger = get_logger("submodular.bounds")


class BoundKind(str, Enum):
    """What a `BoundResult` value is."""

    EXACT = "exact"
    LFIELD = "lfield"
    LOGISTIC = "logistic"
    SUPERDIFF_LOWER = "superdiff_lower"


@dataclass(frozen=True, eq=False)
class BoundResult:
    """
    A value of, or a bound on, the log-partition function (in nats).
    """

    value: float
    kind: BoundKind
    std_error: Optional[float] = None
    witness: Optional[BasePoint] = None


@dataclass(frozen=True, eq=False)
class MarginalVector:
    """
    Approximate probabilities that each variable equals 1.
    """

    mu: np.ndarray

    def __post_init__(self):
        """Every mu_d must lie in [0, 1]."""
        mu = np.asarray(self.mu, dtype=float)
        if np.any(mu < 0) or np.any(mu > 1):
            raise SubmodularDataException("Marginals must lie in [0, 1].")
        object.__setattr__(self, "mu", mu)


def _check_enumerable(f: SetFunction):
    """Enumeration is capped at D <= 20."""
    if f.num_nodes > MAX_EXACT_DIM:
        msg = f"Exact enumeration supports D <= {MAX_EXACT_DIM}, got {f.num_nodes}."
        raise ProblemTooLargeException(msg)


def exact_log_partition(f: SetFunction) -> BoundResult:
    """
    A(f) by a stable log-sum-exp over all 2^D configurations.

    Raises:
        - `ProblemTooLargeException` if D > 20.
    """
    _check_enumerable(f)
    chunks = [logsumexp(-f.evaluate_many(X)) for X in iter_hypercube(f.num_nodes)]
    return BoundResult(value=float(logsumexp(chunks)), kind=BoundKind.EXACT)


def exact_marginals(f: SetFunction) -> MarginalVector:
    """
    P(x_d = 1) under p(x) proportional to exp(-f(x)), by enumeration.

    Raises:
        - `ProblemTooLargeException` if D > 20.
    """
    _check_enumerable(f)
    log_z = exact_log_partition(f).value
    mu = np.zeros(f.num_nodes)
    for X in iter_hypercube(f.num_nodes):
        mu += np.exp(-f.evaluate_many(X) - log_z) @ X
    return MarginalVector(mu=np.clip(mu, 0.0, 1.0))


def entropy(mu: np.ndarray) -> float:
    """Entropy of independent Bernoulli variables with means `mu`."""
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(entr(mu) + entr(1.0 - mu)))


def _decompose(g: SetFunction, indices: np.ndarray, s: np.ndarray, backend: str, tol):
    """Fill s on `indices` for the block function g."""
    n = g.num_nodes
    if n == 0:
        return
    beta = float(g.evaluate_many(np.ones((1, n), dtype=np.int8))[0]) / n
    result = minimize(g, np.full(n, beta), backend=backend)
    if result.value >= -tol:
        s[indices] = beta
        return
    inside = result.argmin.astype(bool)
    logger.debug(f"Splitting block of {n} variables at {int(inside.sum())}.")
    restricted = restrict_and_contract(g, {int(d): 0 for d in np.flatnonzero(~inside)})
    contracted = restrict_and_contract(g, {int(d): 1 for d in np.flatnonzero(inside)})
    _decompose(restricted, indices[inside], s, backend, tol)
    _decompose(contracted, indices[~inside], s, backend, tol)


def min_norm_point(
    f: SetFunction, backend: str = "auto", tol: float = TOL_DC
) -> BasePoint:
    """
    Euclidean projection of 0 onto B(f) by divide and conquer.

    On a block with uniform candidate beta = f(V)/|V|, a minimizer A* of
    f(A) - beta |A| either certifies s = beta on the block (minimum >= -tol) or
    splits the problem into the restriction to A* and the contraction by A*.
    Each level costs one exact minimization; the depth is at most D.
    """
    s = np.zeros(f.num_nodes)
    _decompose(f, np.arange(f.num_nodes), s, backend, tol)
    return BasePoint(s=s)


def _affine_minimizer(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Minimum-norm point of the affine hull of the rows of S."""
    m = S.shape[0]
    system = np.zeros((m + 1, m + 1))
    system[0, 1:] = 1.0
    system[1:, 0] = 1.0
    system[1:, 1:] = S @ S.T
    rhs = np.zeros(m + 1)
    rhs[0] = 1.0
    weights = np.linalg.lstsq(system, rhs, rcond=None)[0][1:]
    return weights, weights @ S


def wolfe_min_norm_point(
    f: SetFunction, max_iter: int = 10_000, tol: float = 1e-12
) -> BasePoint:
    """
    Wolfe's minimum-norm-point algorithm over B(f) with the greedy linear oracle.

    Independent of `min_norm_point`; only needs function evaluations.
    """
    D = f.num_nodes
    x = greedy_base_vertex(f, np.zeros(D)).s
    if D == 0:
        return BasePoint(s=x)
    S = x[None, :]
    lam = np.ones(1)
    for _ in range(max_iter):
        q = greedy_base_vertex(f, -x).s
        scale = max(1.0, float(q @ q), float(np.max(np.sum(S * S, axis=1))))
        if x @ x - x @ q <= tol * scale:
            break
        S = np.vstack([S, q])
        lam = np.append(lam, 0.0)
        while True:
            mu, y = _affine_minimizer(S)
            if np.all(mu > tol):
                x, lam = y, mu
                break
            shrinking = mu <= tol
            gap = lam[shrinking] - mu[shrinking]
            ratios = np.divide(
                lam[shrinking], gap, out=np.zeros_like(gap), where=gap > 0
            )
            theta = float(np.min(ratios))
            lam = theta * mu + (1 - theta) * lam
            keep = lam > tol
            S, lam = S[keep], lam[keep] / lam[keep].sum()
            x = lam @ S
    return BasePoint(s=x)


def lfield_bound(f: SetFunction, backend: str = "auto") -> BoundResult:
    """
    L-field upper bound sum_d log(1 + exp(-s*_d)) with s* the min-norm point of B(f).
    """
    witness = min_norm_point(f, backend=backend)
    value = float(np.sum(np.logaddexp(0.0, -witness.s)))
    return BoundResult(value=value, kind=BoundKind.LFIELD, witness=witness)


def logistic_batch(num_nodes: int, num_samples: int, seed: int) -> np.ndarray:
    """
    A fixed (M, D) batch of standard logistic vectors.

    Row m only depends on `(seed, m)`, so batches of different sizes share their
    leading rows and can be used as common random numbers.
    """
    if num_samples < 1:
        raise PreconditionViolationException("`num_samples` must be >= 1.")
    batch = np.empty((num_samples, num_nodes))
    for m in range(num_samples):
        batch[m] = logistic_sample(sample_rng(seed, m), num_nodes)
    return batch


def perturb_and_map(
    f: SetFunction, z_batch: np.ndarray, backend: str = "auto"
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve max_y z^T y - f(y) for every row z of `z_batch`.

    With the `bruteforce` backend and D <= 10 the whole batch is scored against
    one table of f.

    Returns:
        - The maximal values, shape (M,).
        - The maximizers y*(z), shape (M, D).
    """
    if backend == "bruteforce" and f.num_nodes <= MAX_BRUTEFORCE_DIM // 2:
        minima, maximizers = minimize_bruteforce_batch(f, z_batch)
        return -minima, maximizers.astype(np.int8)
    values = np.empty(z_batch.shape[0])
    maximizers = np.empty(z_batch.shape, dtype=np.int8)
    for m, z in enumerate(z_batch):
        result = minimize(f, z, backend=backend)
        values[m] = -result.value
        maximizers[m] = result.argmin
    return values, maximizers


def _standard_error(values: np.ndarray) -> float:
    """Sample std over sqrt(M), 0 for a single sample."""
    if values.shape[0] < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.shape[0]))


def logistic_bound(
    f: SetFunction,
    num_samples: int = 100,
    rng_seed: int = 0,
    z_batch: Optional[np.ndarray] = None,
    backend: str = "auto",
) -> BoundResult:
    """
    Monte-Carlo estimate of E_z[max_y z^T y - f(y)] over logistic z.

    Args:
        - f (SetFunction): The submodular function.
        - num_samples (int): Number of logistic samples M.
        - rng_seed (int): Base seed; sample m uses the child stream `(rng_seed, m)`.
        - z_batch (ndarray, optional): Common random numbers overriding the draw.
        - backend (str): Solver backend passed to `minimize`.
    """
    if z_batch is None:
        z_batch = logistic_batch(f.num_nodes, num_samples, rng_seed)
    values, _ = perturb_and_map(f, z_batch, backend=backend)
    return BoundResult(
        value=float(values.mean()),
        kind=BoundKind.LOGISTIC,
        std_error=_standard_error(values),
    )


def modular_upper_bound(
    f: SetFunction, anchor: Sequence[int], variant: str = "grow"
) -> Tuple[float, np.ndarray]:
    """
    Modular function m(x) = constant + slope^T x with m >= f, tight at `anchor`.

    `grow` prices removals from Y = support(anchor) at f(d | Y - d) and additions
    at f(d | {}); `shrink` prices removals at f(d | V - d) and additions at f(d | Y).
    """
    D = f.num_nodes
    Y = as_binary_vector(anchor, D).astype(bool)
    eye = np.eye(D, dtype=bool)
    toggled = np.logical_xor(Y[None, :], eye)
    full_minus = ~eye
    rows = np.vstack([Y[None, :], toggled, eye, full_minus, np.ones((1, D), bool)])
    values = f.evaluate_many(rows.astype(np.int8))
    f_y = values[0]
    f_toggled = values[1 : D + 1]
    f_single = values[D + 1 : 2 * D + 1]
    f_full_minus = values[2 * D + 1 : 3 * D + 1]
    f_full = values[-1]
    # f(d | Y - d) for d in Y, f(d | Y) for d not in Y
    local = np.where(Y, f_y - f_toggled, f_toggled - f_y)
    if variant == "grow":
        slope = np.where(Y, local, f_single)
    elif variant == "shrink":
        slope = np.where(Y, f_full - f_full_minus, local)
    else:
        raise PreconditionViolationException(f"Unknown supergradient `{variant}`.")
    constant = float(f_y - slope[Y].sum())
    return constant, slope


def superdiff_lower_bound(
    f: SetFunction, anchor: Optional[Sequence[int]] = None, backend: str = "auto"
) -> BoundResult:
    """
    Lower bound log sum_x exp(-m(x)) for modular upper bounds m >= f.

    Both supergradients at `anchor` (default: a minimizer of f) give valid bounds in
    closed form; the larger one is returned.
    """
    if anchor is None:
        anchor = minimize(f, backend=backend).argmin
    best = -np.inf
    for variant in ("grow", "shrink"):
        constant, slope = modular_upper_bound(f, anchor, variant)
        best = max(best, -constant + float(np.sum(np.logaddexp(0.0, -slope))))
    return BoundResult(value=float(best), kind=BoundKind.SUPERDIFF_LOWER)


def lfield_marginals(f: SetFunction, backend: str = "auto") -> MarginalVector:
    """
    Gradient of the L-field bound with respect to t: mu = sigmoid(-s*).
    """
    witness = min_norm_point(f, backend=backend)
    return MarginalVector(mu=expit(-witness.s))


def logistic_marginals(
    f: SetFunction,
    num_samples: int = 100,
    rng_seed: int = 0,
    z_batch: Optional[np.ndarray] = None,
    backend: str = "auto",
) -> MarginalVector:
    """
    Gradient of the logistic bound with respect to t: the average maximizer y*(z).
    """
    if z_batch is None:
        z_batch = logistic_batch(f.num_nodes, num_samples, rng_seed)
    _, maximizers = perturb_and_map(f, z_batch, backend=backend)
    return MarginalVector(mu=maximizers.mean(axis=0))
