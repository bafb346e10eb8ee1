import numpy as np
import pytest

from prefect_submodular import checks
from prefect_submodular.checks import (
    SUITES,
    random_cut,
    random_cut_mixture,
    run_selftest,
)
from prefect_submodular.submodular import is_submodular_bruteforce


def test_random_cut():
    cut = random_cut(np.random.default_rng(0), 6, density=1.0)
    assert len(cut.edges) == 15
    assert all(0 <= w < 1 for _, _, w in cut.edges)


def test_random_cut_mixture_is_submodular():
    f = random_cut_mixture(np.random.default_rng(1), 5, num_functions=3)
    assert len(f.base_functions) == 3
    assert np.all(f.alpha >= 0)
    assert is_submodular_bruteforce(f)


@pytest.mark.parametrize(
    "name",
    [
        "tightness",
        "min-norm point",
        "L-field duality",
        "solver equivalence",
        "marginal gradients",
        "Jensen gaps",
        "conditioning",
        "MAP denoising",
        "SGD gradients",
        "convexity",
    ],
)
def test_suite_passes(name):
    suite = dict(SUITES)[name]
    passed, failed = suite(np.random.default_rng(0))
    assert failed == 0
    assert passed > 0


def test_selftest_counts_raising_suite_as_failure(monkeypatch):
    def broken(rng):
        raise RuntimeError("boom")

    monkeypatch.setattr(checks, "SUITES", [("ok", lambda rng: (2, 0)), ("x", broken)])
    results = run_selftest(seed=0)
    assert [(r.name, r.passed, r.failed) for r in results] == [
        ("ok", 2, 0),
        ("x", 0, 1),
    ]


def test_selftest_suites_get_independent_generators(monkeypatch):
    draws = []

    def record(rng):
        draws.append(rng.random())
        return 1, 0

    monkeypatch.setattr(checks, "SUITES", [("a", record), ("b", record)])
    run_selftest(seed=4)
    first = list(draws)
    run_selftest(seed=4)
    assert draws[2:] == first
    assert first[0] != first[1]
