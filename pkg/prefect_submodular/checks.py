"""
Invariant suites on small random instances, run by `prefect-submodular selftest`.
"""
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from prefect.logging import get_logger
from scipy.special import expit, logsumexp

from prefect_submodular.bounds import (
    entropy,
    exact_log_partition,
    exact_marginals,
    lfield_bound,
    logistic_bound,
    min_norm_point,
    perturb_and_map,
    superdiff_lower_bound,
    wolfe_min_norm_point,
)
from prefect_submodular.config import ExperimentConfig
from prefect_submodular.experiments import (
    DenoisingModel,
    add_noise,
    denoise_map,
    evaluate,
    fit_conditional,
    fit_latent,
    grid_cut_functions,
    make_clean_images,
)
from prefect_submodular.learning import (
    NoisyPair,
    TrainState,
    compute_stats,
    expected_statistics,
    finalize,
    latent_subgradient,
    lfield_ml_diagnostic,
    ml_objective,
    ml_subgradient,
    modular_shift,
    noise_logit,
    train_supervised,
)
from prefect_submodular.sfm import maxflow, minimize, minimize_bruteforce
from prefect_submodular.submodular import (
    CutFunction,
    SubmodularMixture,
    eval_set_function,
    hypercube,
    is_in_base_polytope,
    lovasz_extension,
    restrict_and_contract,
)
from prefect_submodular.utils import logistic_sample

logger = get_logger("submodular.checks")


def random_cut(
    rng: np.random.Generator, num_nodes: int, density: float = 0.5
) -> CutFunction:
    """Random graph cut with uniform(0, 1) weights on a `density` fraction of pairs."""
    edges = [
        (i, j, float(rng.random()))
        for i in range(num_nodes)
        for j in range(i + 1, num_nodes)
        if rng.random() < density
    ]
    return CutFunction(num_nodes=num_nodes, edges=tuple(edges))


def random_cut_mixture(
    rng: np.random.Generator, num_nodes: int, num_functions: int = 2
) -> SubmodularMixture:
    """K random cuts with uniform(0, 2) weights and standard normal t."""
    return SubmodularMixture(
        tuple(random_cut(rng, num_nodes) for _ in range(num_functions)),
        rng.uniform(0.0, 2.0, num_functions),
        rng.normal(size=num_nodes),
    )


@dataclass(frozen=True)
class CheckResult:
    """Pass and fail counts of one suite."""

    name: str
    passed: int
    failed: int


def _bound_ordering(rng: np.random.Generator) -> Tuple[int, int]:
    """superdiff <= exact <= logistic <= lfield, up to 4 standard errors."""
    passed = failed = 0
    for _ in range(20):
        f = random_cut_mixture(rng, int(rng.integers(1, 9)))
        exact = exact_log_partition(f).value
        seed = int(rng.integers(2**31))
        logistic = logistic_bound(f, num_samples=1000, rng_seed=seed)
        lfield = lfield_bound(f).value
        lower = superdiff_lower_bound(f).value
        band = 4 * logistic.std_error
        ok = (
            lower <= exact + 1e-9
            and exact <= logistic.value + band
            and logistic.value <= lfield + band
        )
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _tightness(rng: np.random.Generator) -> Tuple[int, int]:
    """Closed forms for f = 0 and modular f."""
    passed = failed = 0
    for D in range(1, 6):
        zero = SubmodularMixture.zero(D)
        modular = SubmodularMixture.modular(rng.normal(size=D))
        exact = exact_log_partition(modular).value
        checks = [
            abs(lfield_bound(zero).value - D * np.log(2)) < 1e-9,
            abs(exact_log_partition(zero).value - D * np.log(2)) < 1e-9,
            abs(lfield_bound(modular).value - exact) < 1e-9,
        ]
        passed, failed = passed + sum(checks), failed + len(checks) - sum(checks)
    return passed, failed


def _min_norm(rng: np.random.Generator) -> Tuple[int, int]:
    """Divide and conquer against Wolfe's algorithm."""
    passed = failed = 0
    for _ in range(10):
        f = random_cut_mixture(rng, int(rng.integers(1, 9)))
        s = min_norm_point(f).s
        reference = wolfe_min_norm_point(f).s
        ok = np.max(np.abs(s - reference)) < 1e-3 and is_in_base_polytope(f, s, 1e-7)
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _duality(rng: np.random.Generator) -> Tuple[int, int]:
    """Entropy minus Lovász extension at sigma(-s*) equals the L-field bound."""
    passed = failed = 0
    for _ in range(10):
        f = random_cut_mixture(rng, int(rng.integers(1, 9)))
        s = min_norm_point(f).s
        mu = expit(-s)
        dual = entropy(mu) - lovasz_extension(f, mu)
        ok = abs(dual - lfield_bound(f).value) < 1e-6
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _solvers(rng: np.random.Generator) -> Tuple[int, int]:
    """Max-flow minima equal brute-force minima."""
    backends = ["dinic"] + (["pymaxflow"] if maxflow is not None else [])
    passed = failed = 0
    for _ in range(30):
        f = random_cut_mixture(rng, int(rng.integers(1, 11)))
        extra = rng.normal(size=f.num_nodes)
        reference = minimize_bruteforce(f, extra).value
        for backend in backends:
            ok = abs(minimize(f, extra, backend=backend).value - reference) < 1e-8
            passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _marginal_gradients(rng: np.random.Generator) -> Tuple[int, int]:
    """Finite differences of A in t equal the exact marginals."""
    passed = failed = 0
    eps = 1e-5
    for _ in range(5):
        f = random_cut_mixture(rng, int(rng.integers(1, 7)))
        mu = exact_marginals(f).mu
        for d in range(f.num_nodes):
            step = np.zeros(f.num_nodes)
            step[d] = eps
            up = exact_log_partition(f.shifted(step)).value
            down = exact_log_partition(f.shifted(-step)).value
            ok = abs((up - down) / (2 * eps) - mu[d]) < 1e-5
            passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _jensen_gaps(rng: np.random.Generator) -> Tuple[int, int]:
    """L-field likelihood coefficients are non-negative."""
    passed = failed = 0
    for _ in range(10):
        D = int(rng.integers(2, 11))
        base = [random_cut(rng, D) for _ in range(3)]
        data = list(rng.integers(0, 2, size=(int(rng.integers(1, 20)), D)))
        gaps = lfield_ml_diagnostic(compute_stats(data, base), base).jensen_gaps
        ok = bool(np.all(gaps >= -1e-9))
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _conditioning(rng: np.random.Generator) -> Tuple[int, int]:
    """Restriction and contraction agree with fixing variables."""
    passed = failed = 0
    for _ in range(10):
        f = random_cut_mixture(rng, int(rng.integers(2, 9)))
        fixed_at = rng.permutation(f.num_nodes)[: int(rng.integers(1, f.num_nodes))]
        fixed = {int(d): int(rng.integers(0, 2)) for d in fixed_at}
        g = restrict_and_contract(f, fixed)
        free = [d for d in range(f.num_nodes) if d not in fixed]
        y = rng.integers(0, 2, size=len(free))
        x, anchor = np.zeros(f.num_nodes, dtype=np.int8), np.zeros(f.num_nodes, np.int8)
        for d, v in fixed.items():
            x[d] = anchor[d] = v
        x[free] = y
        expected = eval_set_function(f, x) - eval_set_function(f, anchor)
        ok = abs(eval_set_function(g, y) - expected) < 1e-9
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _denoising_map(rng: np.random.Generator) -> Tuple[int, int]:
    """The MAP image minimizes the posterior energy."""
    passed = failed = 0
    base = grid_cut_functions(3, 3)
    for _ in range(10):
        model = DenoisingModel(
            base, rng.uniform(0, 2, 2), rng.normal(size=9), float(rng.normal(-1, 1))
        )
        z = rng.integers(0, 2, size=9)
        posterior = model.posterior(z)
        expected = minimize_bruteforce(posterior).value
        ok = abs(eval_set_function(posterior, denoise_map(model, z)) - expected) < 1e-9
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _latent_nll(t: float, u: float, z: int) -> float:
    """-log p(z) of a single pixel with prior logit t and flip logit u."""
    pi = expit(u)
    joint = sum(np.exp(t * x) * (pi if x != z else 1.0 - pi) for x in (0, 1))
    return float(-np.log(joint) + np.log1p(np.exp(t)))


def _sgd_gradients(rng: np.random.Generator) -> Tuple[int, int]:
    """Expected subgradients against finite differences of the objectives."""
    passed = failed = 0
    eps = 1e-4
    for _ in range(3):
        D = int(rng.integers(2, 7))
        base = tuple(random_cut(rng, D, density=1.0) for _ in range(2))
        stats = compute_stats(list(rng.integers(0, 2, size=(5, D))), base)
        theta = np.concatenate([rng.uniform(0.2, 1.5, 2), rng.normal(size=D)])
        z_batch = logistic_sample(rng, (20_000, D))

        def objective(point: np.ndarray) -> float:
            value, _ = ml_objective(
                point[:2], point[2:], stats, base, z_batch, backend="bruteforce"
            )
            return value

        mixture = SubmodularMixture(base, theta[:2], theta[2:])
        mean_fk, mean_y = expected_statistics(mixture, z_batch, backend="bruteforce")
        gradient = np.concatenate(ml_subgradient(stats, mean_fk, mean_y))
        differences = np.array(
            [
                (objective(theta + eps * e) - objective(theta - eps * e)) / (2 * eps)
                for e in np.eye(theta.size)
            ]
        )
        ok = np.max(np.abs(gradient - differences)) < 1e-2
        passed, failed = passed + ok, failed + (not ok)
    for _ in range(3):
        t, u, z = float(rng.normal()), float(rng.normal(-1, 1)), int(rng.integers(2))
        prior = SubmodularMixture((), np.zeros(0), [t])
        shift = modular_shift(u, [z])
        draws = logistic_sample(rng, (2, 100_000, 1))
        _, y_conditional = perturb_and_map(prior, draws[0] - shift, "bruteforce")
        _, y_free = perturb_and_map(prior, draws[1], "bruteforce")
        _, g_t, g_u = latent_subgradient(
            u,
            [z],
            np.zeros(0),
            y_conditional.mean(axis=0),
            np.zeros(0),
            y_free.mean(axis=0),
        )
        d_t = (_latent_nll(t + eps, u, z) - _latent_nll(t - eps, u, z)) / (2 * eps)
        d_u = (_latent_nll(t, u + eps, z) - _latent_nll(t, u - eps, z)) / (2 * eps)
        ok = abs(g_t[0] - d_t) < 1e-2 and abs(g_u - d_u) < 1e-2
        passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _convexity(rng: np.random.Generator) -> Tuple[int, int]:
    """Midpoint convexity in (alpha, t), the logistic bound at a fixed batch."""
    passed = failed = 0
    for _ in range(5):
        D = int(rng.integers(2, 8))
        base = tuple(random_cut(rng, D) for _ in range(2))
        z_batch = logistic_sample(rng, (200, D))
        bounds = (
            lambda f: exact_log_partition(f).value,
            lambda f: lfield_bound(f).value,
            lambda f: logistic_bound(f, z_batch=z_batch, backend="bruteforce").value,
        )
        ends = [(rng.uniform(0, 2, 2), rng.normal(size=D)) for _ in range(2)]
        middle = ((ends[0][0] + ends[1][0]) / 2, (ends[0][1] + ends[1][1]) / 2)
        for bound in bounds:
            left, right, mid = (
                bound(SubmodularMixture(base, a, t)) for a, t in ends + [middle]
            )
            ok = mid <= (left + right) / 2 + 1e-6
            passed, failed = passed + ok, failed + (not ok)
    return passed, failed


def _moment_matching(rng: np.random.Generator) -> Tuple[int, int]:
    """After training on samples of a known 4x4 model, <y*> matches <x>."""
    base = grid_cut_functions(4, 4)
    truth = SubmodularMixture(base, rng.uniform(0.2, 0.8, 2), rng.normal(0, 0.5, 16))
    X = hypercube(16)
    log_p = -truth.evaluate_many(X)
    p = np.exp(log_p - logsumexp(log_p))
    data = list(X[rng.choice(X.shape[0], size=500, p=p / p.sum())])
    stats = compute_stats(data, base)
    state = TrainState.initial(
        2, 16, seed=int(rng.integers(2**31)), reg_alpha=0.0, reg_t=0.0
    )
    state = train_supervised(stats, base, state, 20_000, log_every=0)
    alpha, t, _ = finalize(state)
    z_batch = logistic_sample(rng, (10_000, 16))
    _, mean_y = expected_statistics(SubmodularMixture(base, alpha, t), z_batch)
    gap = float(np.max(np.abs(mean_y - stats.mean_x)))
    logger.info(f"Moment gap after training: {gap:.4f}.")
    ok = gap <= 0.05
    return int(ok), int(not ok)


def _denoising(rng: np.random.Generator) -> Tuple[int, int]:
    """Desk-scale denoising at noise 0.1 on 20x20 shapes."""
    config = ExperimentConfig(seed=int(rng.integers(2**31)), noise=0.1, log_every=0)
    train, test = make_clean_images(config)
    train_pairs = add_noise(train, config.noise, config.seed, 2)
    test_pairs = add_noise(test, config.noise, config.seed, 3)
    base = grid_cut_functions(*config.grid)
    supervised, _ = fit_conditional(config, train_pairs, base)
    latent, _ = fit_latent(config, [p.z for p in train_pairs], base, known_pi=True)
    report, _ = evaluate(supervised, test_pairs, config)
    latent_report, _ = evaluate(latent, test_pairs, config)
    noiseless = DenoisingModel(base, supervised.alpha, supervised.t, noise_logit(0.0))
    exact = [NoisyPair(z=p.x, x=p.x) for p in test_pairs]
    noiseless_report, _ = evaluate(noiseless, exact, config)
    checks = [
        report.mean("map") < config.noise,
        report.mean("mean_marginals") <= report.mean("map") + 0.005,
        latent_report.mean("map") <= 2 * report.mean("map"),
        latent_report.dominance("map") >= 0.95,
        report.dominance("map") >= 0.95,
        report.dominance("mean_marginals") >= 0.95,
        noiseless_report.mean("map") == 0.0,
        noiseless_report.mean("mean_marginals") == 0.0,
    ]
    return sum(checks), len(checks) - sum(checks)


SUITES: List[Tuple[str, Callable[[np.random.Generator], Tuple[int, int]]]] = [
    ("bound ordering", _bound_ordering),
    ("tightness", _tightness),
    ("min-norm point", _min_norm),
    ("L-field duality", _duality),
    ("solver equivalence", _solvers),
    ("marginal gradients", _marginal_gradients),
    ("Jensen gaps", _jensen_gaps),
    ("conditioning", _conditioning),
    ("MAP denoising", _denoising_map),
    ("SGD gradients", _sgd_gradients),
    ("convexity", _convexity),
    ("moment matching", _moment_matching),
    ("denoising", _denoising),
]


def run_selftest(seed: int = 0) -> List[CheckResult]:
    """
    Run every suite with its own generator seeded by `(seed, suite index)`.
    """
    results = []
    for index, (name, suite) in enumerate(SUITES):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        try:
            passed, failed = suite(rng)
        except Exception as exc:
            logger.error(f"Suite {name!r} raised {type(exc).__name__}: {exc}")
            passed, failed = 0, 1
        logger.info(f"{name}: {passed} passed, {failed} failed.")
        results.append(CheckResult(name=name, passed=int(passed), failed=int(failed)))
    return results
