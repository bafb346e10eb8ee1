import numpy as np
import pytest

from prefect_submodular.checks import random_cut, random_cut_mixture
from prefect_submodular.exceptions import (
    DimensionMismatchException,
    PreconditionViolationException,
    ProblemTooLargeException,
    SubmodularDataException,
)
from prefect_submodular.experiments import grid_cut_functions
from prefect_submodular.submodular import (
    ConditionedFunction,
    CutFunction,
    SubmodularMixture,
    TabulatedFunction,
    eval_set_function,
    greedy_base_vertex,
    hypercube,
    is_in_base_polytope,
    is_submodular_bruteforce,
    lovasz_extension,
    marginal_gain,
    restrict_and_contract,
)

UNIT_EDGE = CutFunction(num_nodes=2, edges=((0, 1, 1.0),))


def test_eval_single_edge():
    assert eval_set_function(UNIT_EDGE, [1, 0]) == 1.0
    assert eval_set_function(UNIT_EDGE, [1, 1]) == 0.0


def test_eval_zero_vector_is_zero():
    f = random_cut_mixture(np.random.default_rng(0), 6)
    assert eval_set_function(f, np.zeros(6, dtype=int)) == 0.0


def test_eval_checkerboard_cuts_every_grid_edge():
    horizontal, vertical = grid_cut_functions(2, 2)
    f = SubmodularMixture((horizontal, vertical), [1.0, 1.0], np.zeros(4))
    assert eval_set_function(f, [1, 0, 0, 1]) == 4.0


def test_eval_wrong_length_raises():
    msg_match = "Expected a binary vector of length 2"
    with pytest.raises(DimensionMismatchException, match=msg_match):
        eval_set_function(UNIT_EDGE, [1, 0, 1])


def test_eval_non_binary_raises():
    msg_match = "Binary vectors may only contain 0 and 1."
    with pytest.raises(SubmodularDataException, match=msg_match):
        eval_set_function(UNIT_EDGE, [2, 0])


@pytest.mark.parametrize(
    "edges, msg_match",
    [
        (((1, 0, 1.0),), "must satisfy 0 <= i < j"),
        (((0, 1, 1.0), (0, 1, 2.0)), "Duplicate edge"),
        (((0, 1, -1.0),), "invalid weight"),
        (((0, 1, float("nan")),), "invalid weight"),
    ],
)
def test_invalid_cut_raises(edges, msg_match):
    with pytest.raises(SubmodularDataException, match=msg_match):
        CutFunction(num_nodes=2, edges=edges)


def test_from_edges_orders_endpoints():
    cut = CutFunction.from_edges(3, [(2, 0, 0.5)])
    assert cut.edges == ((0, 2, 0.5),)


def test_tabulated_requires_normalization():
    msg_match = "f\\(0\\) = 0"
    with pytest.raises(SubmodularDataException, match=msg_match):
        TabulatedFunction(num_nodes=1, values=[1.0, 0.0])


def test_marginal_gain_single_edge():
    assert marginal_gain(UNIT_EDGE, [0, 0], 0) == 1.0
    assert marginal_gain(UNIT_EDGE, [0, 1], 0) == -1.0


def test_marginal_gain_requires_free_index():
    with pytest.raises(PreconditionViolationException, match="needs x_0 = 0"):
        marginal_gain(UNIT_EDGE, [1, 0], 0)
    with pytest.raises(PreconditionViolationException, match="out of range"):
        marginal_gain(UNIT_EDGE, [0, 0], 5)


def test_marginal_gains_are_non_increasing_along_chains():
    rng = np.random.default_rng(1)
    f = random_cut(rng, 8)
    for _ in range(20):
        order = rng.permutation(8)
        d = order[-1]
        x = np.zeros(8, dtype=int)
        gains = []
        for e in order[:-1]:
            gains.append(marginal_gain(f, x, d))
            x[e] = 1
        gains.append(marginal_gain(f, x, d))
        assert np.all(np.diff(gains) <= 1e-12)


def test_cuts_are_submodular():
    rng = np.random.default_rng(2)
    assert is_submodular_bruteforce(random_cut(rng, 7, density=0.8))


def test_supermodular_pair_is_rejected():
    f = TabulatedFunction(num_nodes=2, values=[0.0, 0.0, 0.0, 1.0])
    assert not is_submodular_bruteforce(f)


def test_mixture_minus_modular_is_submodular():
    rng = np.random.default_rng(3)
    f = SubmodularMixture(
        (random_cut(rng, 6), random_cut(rng, 6)), [0.7, 1.3], rng.normal(size=6)
    )
    assert is_submodular_bruteforce(f)


def test_submodularity_check_is_capped():
    with pytest.raises(ProblemTooLargeException, match="D <= 12"):
        is_submodular_bruteforce(CutFunction(num_nodes=13))


def test_greedy_vertex_of_zero_function():
    s = greedy_base_vertex(SubmodularMixture.zero(4), [3.0, -1.0, 2.0, 0.0]).s
    np.testing.assert_array_equal(s, np.zeros(4))


def test_greedy_vertex_single_edge():
    s = greedy_base_vertex(UNIT_EDGE, [2.0, 1.0]).s
    np.testing.assert_allclose(s, [1.0, -1.0])


def test_greedy_vertex_is_in_base_polytope():
    rng = np.random.default_rng(4)
    for _ in range(5):
        f = random_cut_mixture(rng, 8)
        vertex = greedy_base_vertex(f, rng.normal(size=8))
        assert vertex.is_member(f)


def test_greedy_vertex_maximizes_linear_function():
    rng = np.random.default_rng(5)
    f = random_cut(rng, 5)
    w = rng.normal(size=5)
    best = w @ greedy_base_vertex(f, w).s
    for _ in range(20):
        other = greedy_base_vertex(f, rng.normal(size=5)).s
        assert w @ other <= best + 1e-9


def test_lovasz_extension_agrees_on_vertices():
    rng = np.random.default_rng(6)
    f = random_cut_mixture(rng, 5)
    for x in hypercube(5):
        assert lovasz_extension(f, x) == pytest.approx(eval_set_function(f, x))


def test_lovasz_extension_of_zero_and_constant_vectors():
    rng = np.random.default_rng(7)
    assert lovasz_extension(SubmodularMixture.zero(3), rng.normal(size=3)) == 0.0
    assert lovasz_extension(random_cut(rng, 6), np.full(6, 0.5)) == pytest.approx(0.0)


def test_base_polytope_membership():
    assert is_in_base_polytope(UNIT_EDGE, np.array([0.0, 0.0]))
    assert is_in_base_polytope(UNIT_EDGE, np.array([1.0, -1.0]))
    assert not is_in_base_polytope(UNIT_EDGE, np.array([1.5, -1.5]))
    assert not is_in_base_polytope(UNIT_EDGE, np.array([0.5, 0.0]))


def test_restrict_nothing_returns_same_function():
    assert restrict_and_contract(UNIT_EDGE, {}) is UNIT_EDGE


def test_restrict_single_edge_gives_modular_slope():
    g = restrict_and_contract(UNIT_EDGE, {0: 1})
    assert g.num_nodes == 1
    assert eval_set_function(g, [0]) == 0.0
    assert eval_set_function(g, [1]) == -1.0


def test_restricted_cut_stays_submodular():
    rng = np.random.default_rng(8)
    f = random_cut(rng, 8)
    g = restrict_and_contract(f, {1: 0, 4: 1, 6: 1})
    assert isinstance(g, SubmodularMixture) and g.is_cut_mixture
    assert g.num_nodes == 5
    assert is_submodular_bruteforce(g)


def test_restrict_matches_definition():
    rng = np.random.default_rng(9)
    f = random_cut_mixture(rng, 6)
    fixed = {0: 1, 3: 0}
    g = restrict_and_contract(f, fixed)
    anchor = np.array([1, 0, 0, 0, 0, 0])
    for y in hypercube(4):
        x = anchor.copy()
        x[[1, 2, 4, 5]] = y
        expected = eval_set_function(f, x) - eval_set_function(f, anchor)
        assert eval_set_function(g, y) == pytest.approx(expected)


def test_restrict_generic_function():
    f = TabulatedFunction(num_nodes=2, values=[0.0, 1.0, 1.0, 1.5])
    g = restrict_and_contract(f, {1: 1})
    assert isinstance(g, ConditionedFunction)
    assert eval_set_function(g, [1]) == pytest.approx(0.5)


def test_restrict_everything_gives_zero_dimensional_function():
    g = restrict_and_contract(UNIT_EDGE, {0: 0, 1: 1})
    assert g.num_nodes == 0
    assert eval_set_function(g, []) == 0.0


def test_restrict_invalid_assignment_raises():
    with pytest.raises(PreconditionViolationException, match="out of range"):
        restrict_and_contract(UNIT_EDGE, {2: 0})
    with pytest.raises(PreconditionViolationException, match="must be 0 or 1"):
        restrict_and_contract(UNIT_EDGE, {0: 2})
