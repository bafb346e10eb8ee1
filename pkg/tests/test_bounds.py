import numpy as np
import pytest
from scipy.special import expit

from prefect_submodular.bounds import (
    BoundKind,
    MarginalVector,
    entropy,
    exact_log_partition,
    exact_marginals,
    lfield_bound,
    lfield_marginals,
    logistic_batch,
    logistic_bound,
    logistic_marginals,
    min_norm_point,
    modular_upper_bound,
    perturb_and_map,
    superdiff_lower_bound,
    wolfe_min_norm_point,
)
from prefect_submodular.checks import random_cut, random_cut_mixture
from prefect_submodular.exceptions import (
    PreconditionViolationException,
    ProblemTooLargeException,
    SubmodularDataException,
)
from prefect_submodular.submodular import (
    CutFunction,
    SubmodularMixture,
    eval_set_function,
    hypercube,
    is_in_base_polytope,
    lovasz_extension,
)

UNIT_EDGE = CutFunction(num_nodes=2, edges=((0, 1, 1.0),))


def test_exact_log_partition_of_zero_function():
    result = exact_log_partition(SubmodularMixture.zero(3))
    assert result.value == pytest.approx(3 * np.log(2))
    assert result.kind == BoundKind.EXACT


def test_exact_log_partition_single_edge():
    expected = np.log(2 + 2 * np.exp(-1.0))
    assert exact_log_partition(UNIT_EDGE).value == pytest.approx(expected)


def test_exact_log_partition_is_stable_for_large_energies():
    f = SubmodularMixture.modular(np.full(4, 1000.0))
    assert exact_log_partition(f).value == pytest.approx(0.0, abs=1e-12)


def test_exact_is_capped():
    with pytest.raises(ProblemTooLargeException, match="D <= 20"):
        exact_log_partition(CutFunction(num_nodes=21))


def test_exact_marginals_of_modular_function():
    c = np.array([-1.0, 0.0, 2.0])
    mu = exact_marginals(SubmodularMixture.modular(c)).mu
    np.testing.assert_allclose(mu, expit(-c))


def test_marginal_vector_range():
    with pytest.raises(SubmodularDataException, match="in \\[0, 1\\]"):
        MarginalVector(mu=np.array([0.5, 1.5]))


def test_entropy():
    assert entropy(np.array([0.5, 0.5])) == pytest.approx(2 * np.log(2))
    assert entropy(np.array([0.0, 1.0])) == 0.0


def test_min_norm_point_of_single_edge_is_zero():
    np.testing.assert_allclose(min_norm_point(UNIT_EDGE).s, [0.0, 0.0], atol=1e-12)


def test_min_norm_point_of_modular_function():
    c = np.array([0.3, -2.0, 1.0])
    s = min_norm_point(SubmodularMixture.modular(c)).s
    np.testing.assert_allclose(s, c, atol=1e-12)


def test_min_norm_point_matches_wolfe():
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = random_cut_mixture(rng, 7)
        s = min_norm_point(f, backend="dinic").s
        np.testing.assert_allclose(s, wolfe_min_norm_point(f).s, atol=1e-3)
        assert is_in_base_polytope(f, s, tol=1e-7)


def test_min_norm_point_without_variables():
    assert min_norm_point(SubmodularMixture.zero(0)).s.shape == (0,)


def test_lfield_bound_of_zero_function():
    result = lfield_bound(SubmodularMixture.zero(4))
    assert result.value == pytest.approx(4 * np.log(2))
    assert result.kind == BoundKind.LFIELD
    assert result.witness is not None


def test_lfield_bound_is_tight_for_modular_functions():
    rng = np.random.default_rng(1)
    f = SubmodularMixture.modular(rng.normal(size=5))
    assert lfield_bound(f).value == pytest.approx(exact_log_partition(f).value)


def test_lfield_bound_single_edge():
    assert lfield_bound(UNIT_EDGE).value == pytest.approx(2 * np.log(2))


def test_lfield_duality_identity():
    rng = np.random.default_rng(2)
    for _ in range(5):
        f = random_cut_mixture(rng, 6)
        result = lfield_bound(f)
        mu = expit(-result.witness.s)
        dual = entropy(mu) - lovasz_extension(f, mu)
        assert dual == pytest.approx(result.value, abs=1e-6)


def test_logistic_batch_prefix_is_shared():
    small = logistic_batch(5, 3, seed=7)
    large = logistic_batch(5, 10, seed=7)
    np.testing.assert_array_equal(small, large[:3])


def test_logistic_batch_requires_samples():
    with pytest.raises(PreconditionViolationException, match="num_samples"):
        logistic_batch(3, 0, seed=0)


def test_perturb_and_map_without_structure():
    z = np.array([[1.0, -1.0], [-2.0, 0.5]])
    values, maximizers = perturb_and_map(SubmodularMixture.zero(2), z)
    np.testing.assert_allclose(values, [1.0, 0.5])
    np.testing.assert_array_equal(maximizers, [[1, 0], [0, 1]])


def test_logistic_bound_is_deterministic_given_seed():
    rng = np.random.default_rng(3)
    f = random_cut_mixture(rng, 5)
    first = logistic_bound(f, num_samples=20, rng_seed=11)
    second = logistic_bound(f, num_samples=20, rng_seed=11)
    assert first.value == second.value
    assert first.std_error == second.std_error


def test_logistic_bound_of_zero_function():
    # E[max(z, 0)] = log 2 for a standard logistic z
    result = logistic_bound(SubmodularMixture.zero(3), num_samples=2000, rng_seed=0)
    assert result.kind == BoundKind.LOGISTIC
    assert abs(result.value - 3 * np.log(2)) < 4 * result.std_error


def test_logistic_bound_single_sample_has_zero_std_error():
    result = logistic_bound(UNIT_EDGE, num_samples=1, rng_seed=0)
    assert result.std_error == 0.0


def test_logistic_bound_uses_given_batch():
    z = np.array([[3.0, 3.0]])
    assert logistic_bound(UNIT_EDGE, z_batch=z).value == pytest.approx(6.0)


def test_bound_ordering():
    rng = np.random.default_rng(4)
    for _ in range(5):
        f = random_cut_mixture(rng, 6)
        exact = exact_log_partition(f).value
        logistic = logistic_bound(f, num_samples=500, rng_seed=int(rng.integers(1000)))
        band = 4 * logistic.std_error
        assert superdiff_lower_bound(f).value <= exact + 1e-9
        assert exact <= logistic.value + band
        assert logistic.value <= lfield_bound(f).value + band


def test_modular_upper_bound_dominates_and_is_tight():
    rng = np.random.default_rng(5)
    f = random_cut(rng, 6)
    X = hypercube(6)
    values = f.evaluate_many(X)
    anchor = rng.integers(0, 2, size=6)
    for variant in ("grow", "shrink"):
        constant, slope = modular_upper_bound(f, anchor, variant)
        assert np.all(constant + X @ slope >= values - 1e-9)
        assert constant + anchor @ slope == pytest.approx(eval_set_function(f, anchor))


def test_modular_upper_bound_unknown_variant():
    with pytest.raises(PreconditionViolationException, match="Unknown supergradient"):
        modular_upper_bound(UNIT_EDGE, [0, 0], "sideways")


def test_superdiff_lower_bound_is_exact_for_modular_functions():
    rng = np.random.default_rng(6)
    f = SubmodularMixture.modular(rng.normal(size=4))
    result = superdiff_lower_bound(f)
    assert result.kind == BoundKind.SUPERDIFF_LOWER
    assert result.value == pytest.approx(exact_log_partition(f).value)


def test_superdiff_lower_bound_with_anchor():
    rng = np.random.default_rng(7)
    f = random_cut_mixture(rng, 5)
    exact = exact_log_partition(f).value
    for anchor in hypercube(5)[::7]:
        assert superdiff_lower_bound(f, anchor).value <= exact + 1e-9


def test_lfield_marginals_of_modular_function_are_exact():
    c = np.array([1.0, -0.5])
    mu = lfield_marginals(SubmodularMixture.modular(c)).mu
    np.testing.assert_allclose(mu, expit(-c))


def test_lfield_marginals_are_bound_gradient():
    rng = np.random.default_rng(8)
    f = random_cut_mixture(rng, 4)
    mu = lfield_marginals(f).mu
    eps = 1e-5
    for d in range(4):
        step = np.zeros(4)
        step[d] = eps
        up = lfield_bound(f.shifted(step)).value
        down = lfield_bound(f.shifted(-step)).value
        assert (up - down) / (2 * eps) == pytest.approx(mu[d], abs=1e-3)


def test_logistic_marginals_of_modular_function():
    c = np.array([1.0, -1.0, 0.0])
    mu = logistic_marginals(SubmodularMixture.modular(c), num_samples=4000).mu
    expected = expit(-c)
    se = np.sqrt(expected * (1 - expected) / 4000)
    assert np.all(np.abs(mu - expected) < 4 * se)


def test_logistic_marginals_match_given_batch():
    z = np.array([[1.0, -1.0], [1.0, 1.0]])
    mu = logistic_marginals(SubmodularMixture.zero(2), z_batch=z).mu
    np.testing.assert_allclose(mu, [1.0, 0.5])


@pytest.mark.parametrize("seed", range(4))
def test_bounds_are_midpoint_convex_in_parameters(seed):
    rng = np.random.default_rng(seed)
    base = (random_cut(rng, 5), random_cut(rng, 5))
    z_batch = logistic_batch(5, 200, seed=seed)
    ends = [(rng.uniform(0, 2, 2), rng.normal(size=5)) for _ in range(2)]
    middle = tuple((a + b) / 2 for a, b in zip(*ends))
    for bound in (
        lambda f: exact_log_partition(f).value,
        lambda f: lfield_bound(f, backend="dinic").value,
        lambda f: logistic_bound(f, z_batch=z_batch, backend="bruteforce").value,
    ):
        left, right, mid = (
            bound(SubmodularMixture(base, a, t)) for a, t in ends + [middle]
        )
        assert mid <= (left + right) / 2 + 1e-6
