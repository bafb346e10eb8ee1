"""
Set functions on the hypercube {0,1}^D.

A point of the hypercube is a binary vector (`BinaryVector`), equivalently the
indicator of a subset of {0, ..., D-1}. Enumeration order is little-endian: the
code of a vector is sum_d x_d 2^d.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from prefect_submodular.exceptions import (
    DimensionMismatchException,
    PreconditionViolationException,
    ProblemTooLargeException,
    SubmodularDataException,
)

TOL_NUM = 1e-9
TOL_SUB = 1e-9
MAX_SUBMODULARITY_CHECK_DIM = 12
MAX_MEMBERSHIP_CHECK_DIM = 16

BinaryVector = np.ndarray


def as_binary_vector(x: Sequence[int], num_nodes: int) -> BinaryVector:
    """
    Validate and convert `x` to a binary vector of length `num_nodes`.

    Raises:
        - `DimensionMismatchException` if the length differs from `num_nodes`.
        - `SubmodularDataException` if an entry is not 0 or 1.
    """
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != num_nodes:
        msg = f"Expected a binary vector of length {num_nodes}, got shape {arr.shape}."
        raise DimensionMismatchException(msg)
    if not np.all((arr == 0) | (arr == 1)):
        raise SubmodularDataException("Binary vectors may only contain 0 and 1.")
    return arr.astype(np.int8)


def as_real_vector(w: Sequence[float], num_nodes: int, name: str = "w") -> np.ndarray:
    """
    Validate and convert `w` to a float vector of length `num_nodes`.
    """
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != num_nodes:
        msg = f"Expected `{name}` of length {num_nodes}, got shape {arr.shape}."
        raise DimensionMismatchException(msg)
    return arr


def hypercube(num_nodes: int, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """
    Rows `start..stop-1` of the hypercube in little-endian order.
    """
    stop = (1 << num_nodes) if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(num_nodes)) & 1).astype(np.int8)


def iter_hypercube(num_nodes: int, chunk_size: int = 1 << 16) -> Iterator[np.ndarray]:
    """
    Iterate over the hypercube in little-endian chunks of at most `chunk_size` rows.
    """
    total = 1 << num_nodes
    for start in range(0, total, chunk_size):
        yield hypercube(num_nodes, start, min(start + chunk_size, total))


def code_to_vector(code: int, num_nodes: int) -> BinaryVector:
    """Little-endian binary expansion of `code`."""
    return ((code >> np.arange(num_nodes)) & 1).astype(np.int8)


def _frozen(arr: np.ndarray) -> np.ndarray:
    """Read-only copy."""
    arr.setflags(write=False)
    return arr


class SetFunction(ABC):
    """
    A real-valued function on {0,1}^D, normalized so that f(0) = 0.

    Subclasses implement `evaluate_many`; every other operation goes through it.
    """

    num_nodes: int

    @abstractmethod
    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """
        Evaluate the function on each row of the (n, D) binary matrix `X`.
        """

    def __call__(self, x: Sequence[int]) -> float:
        """f(x) for a single binary vector."""
        return eval_set_function(self, x)

    def table(self) -> np.ndarray:
        """
        Values on the whole hypercube, in little-endian order.
        """
        return np.concatenate(
            [self.evaluate_many(X) for X in iter_hypercube(self.num_nodes)]
        )


@dataclass(frozen=True, eq=False)
class CutFunction(SetFunction):
    """
    Undirected weighted graph cut, f(x) = sum_{(i,j)} w_ij |x_i - x_j|.

    Args:
        - num_nodes (int): Number of variables D.
        - edges (tuple): Triples `(i, j, w)` with `i < j` and `w >= 0`.
    """

    num_nodes: int
    edges: Tuple[Tuple[int, int, float], ...] = ()

    def __post_init__(self):
        """Cast edges to (int, int, float) and validate them."""
        if self.num_nodes < 0:
            raise SubmodularDataException("`num_nodes` must be non-negative.")
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        object.__setattr__(self, "edges", edges)
        seen = set()
        for i, j, w in edges:
            if not (0 <= i < j < self.num_nodes):
                msg = f"Edge ({i}, {j}) must satisfy 0 <= i < j < {self.num_nodes}."
                raise SubmodularDataException(msg)
            if (i, j) in seen:
                raise SubmodularDataException(f"Duplicate edge ({i}, {j}).")
            if not np.isfinite(w) or w < 0:
                msg = f"Edge ({i}, {j}) has invalid weight {w}; weights must be >= 0."
                raise SubmodularDataException(msg)
            seen.add((i, j))
        sources = np.array([e[0] for e in self.edges], dtype=np.int64)
        targets = np.array([e[1] for e in self.edges], dtype=np.int64)
        weights = np.array([e[2] for e in self.edges], dtype=float)
        object.__setattr__(self, "sources", _frozen(sources))
        object.__setattr__(self, "targets", _frozen(targets))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "CutFunction":
        """
        Build a cut function from `(i, j, w)` triples in any orientation.
        """
        ordered = tuple(
            (min(int(i), int(j)), max(int(i), int(j)), float(w)) for i, j, w in edges
        )
        return cls(num_nodes=num_nodes, edges=ordered)

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Sum of the weights of edges with differing endpoints."""
        X = np.asarray(X)
        if not self.edges:
            return np.zeros(X.shape[0])
        crossing = X[:, self.sources] != X[:, self.targets]
        return crossing.astype(float) @ self.weights

    def __repr__(self) -> str:
        """Size summary instead of the full edge list."""
        return f"CutFunction(num_nodes={self.num_nodes}, num_edges={len(self.edges)})"


@dataclass(frozen=True, eq=False)
class TabulatedFunction(SetFunction):
    """
    A set function given by its full table of 2^D values (little-endian order).
    """

    num_nodes: int
    values: np.ndarray

    def __post_init__(self):
        """The table has 2^D entries and f(0) = 0."""
        values = np.array(self.values, dtype=float)
        if values.shape != (1 << self.num_nodes,):
            msg = f"Expected {1 << self.num_nodes} table values, got {values.shape}."
            raise DimensionMismatchException(msg)
        if abs(values[0]) > TOL_NUM:
            raise SubmodularDataException("Tabulated functions must satisfy f(0) = 0.")
        object.__setattr__(self, "values", _frozen(values))

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Table lookup by little-endian code."""
        codes = np.asarray(X, dtype=np.int64) @ (1 << np.arange(self.num_nodes))
        return self.values[codes]


@dataclass(frozen=True, eq=False)
class ConditionedFunction(SetFunction):
    """
    g(y) = f(merge(fixed, y)) - f(merge(fixed, 0)) on the free coordinates of `base`.
    """

    base: SetFunction
    free_indices: np.ndarray
    assignment: np.ndarray

    def __post_init__(self):
        """Cache the dimension and f(anchor)."""
        object.__setattr__(self, "num_nodes", int(len(self.free_indices)))
        anchor = self.assignment.astype(np.int8)[None, :]
        object.__setattr__(self, "offset", float(self.base.evaluate_many(anchor)[0]))

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """f on the free coordinates, the fixed ones taken from the assignment."""
        X = np.asarray(X)
        full = np.repeat(self.assignment.astype(np.int8)[None, :], X.shape[0], axis=0)
        full[:, self.free_indices] = X
        return self.base.evaluate_many(full) - self.offset


@dataclass(frozen=True, eq=False)
class SubmodularMixture(SetFunction):
    """
    f(x) = sum_k alpha_k f_k(x) - t^T x with alpha >= 0.

    Args:
        - base_functions (tuple): The K base set functions f_k, all on D variables.
        - alpha (ndarray): K non-negative weights.
        - t (ndarray): D modular coefficients.
    """

    base_functions: Tuple[SetFunction, ...]
    alpha: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        """Freeze alpha and t and check their sizes."""
        base_functions = tuple(self.base_functions)
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        t = np.array(self.t, dtype=float).reshape(-1)
        if alpha.shape[0] != len(base_functions):
            K = len(base_functions)
            msg = f"Expected {K} `alpha` weights, got {alpha.shape[0]}."
            raise DimensionMismatchException(msg)
        if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
            raise SubmodularDataException("Mixture weights `alpha` must be >= 0.")
        for fk in base_functions:
            if fk.num_nodes != t.shape[0]:
                msg = (
                    f"Base function on {fk.num_nodes} variables does not match "
                    f"`t` of length {t.shape[0]}."
                )
                raise DimensionMismatchException(msg)
        object.__setattr__(self, "base_functions", base_functions)
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "num_nodes", int(t.shape[0]))

    @classmethod
    def modular(cls, coefficients: Sequence[float]) -> "SubmodularMixture":
        """
        The modular function x -> c^T x.
        """
        c = np.asarray(coefficients, dtype=float)
        return cls(base_functions=(), alpha=np.zeros(0), t=-c)

    @classmethod
    def zero(cls, num_nodes: int) -> "SubmodularMixture":
        """The zero function on `num_nodes` variables."""
        return cls(base_functions=(), alpha=np.zeros(0), t=np.zeros(num_nodes))

    @property
    def is_cut_mixture(self) -> bool:
        """Whether every base function is a graph cut."""
        return all(isinstance(fk, CutFunction) for fk in self.base_functions)

    def with_parameters(self, alpha: np.ndarray, t: np.ndarray) -> "SubmodularMixture":
        """Same base functions, new parameters."""
        return SubmodularMixture(self.base_functions, alpha, t)

    def shifted(self, extra_modular: np.ndarray) -> "SubmodularMixture":
        """
        The mixture for x -> f(x) - extra_modular^T x.
        """
        extra = as_real_vector(extra_modular, self.num_nodes, "extra_modular")
        return SubmodularMixture(self.base_functions, self.alpha, self.t + extra)

    def base_values(self, X: np.ndarray) -> np.ndarray:
        """
        Matrix (n, K) of base function values f_k on the rows of `X`.
        """
        X = np.asarray(X)
        if not self.base_functions:
            return np.zeros((X.shape[0], 0))
        return np.stack([fk.evaluate_many(X) for fk in self.base_functions], axis=1)

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """sum_k alpha_k f_k(x) - t^T x."""
        X = np.asarray(X)
        return self.base_values(X) @ self.alpha - X @ self.t

    def merged_edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Edges of the alpha-weighted sum of the cut base functions, merged by pair.
        """
        cuts = [
            (fk, a)
            for fk, a in zip(self.base_functions, self.alpha)
            if isinstance(fk, CutFunction) and fk.edges and a > 0
        ]
        if not cuts:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        sources = np.concatenate([fk.sources for fk, _ in cuts])
        targets = np.concatenate([fk.targets for fk, _ in cuts])
        weights = np.concatenate([a * fk.weights for fk, a in cuts])
        keys = sources * max(self.num_nodes, 1) + targets
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        merged = np.bincount(inverse, weights=weights)
        return (
            unique_keys // max(self.num_nodes, 1),
            unique_keys % max(self.num_nodes, 1),
            merged,
        )


@dataclass(frozen=True, eq=False)
class BasePoint:
    """
    A vector s claimed to lie in the base polytope B(f).
    """

    s: np.ndarray

    def is_member(self, f: SetFunction, tol: float = TOL_NUM) -> bool:
        """
        Exhaustive membership certificate: s(A) <= f(A) for all A and s(V) = f(V).

        Raises:
            - `ProblemTooLargeException` if `f` has more than 16 variables.
        """
        return is_in_base_polytope(f, self.s, tol=tol)


def eval_set_function(f: SetFunction, x: Sequence[int]) -> float:
    """
    Evaluate `f` at the binary vector `x`.

    Raises:
        - `DimensionMismatchException` if `x` does not have `f.num_nodes` entries.
    """
    vector = as_binary_vector(x, f.num_nodes)
    return float(f.evaluate_many(vector[None, :])[0])


def marginal_gain(f: SetFunction, x: Sequence[int], d: int) -> float:
    """
    f(x + e_d) - f(x), defined for x_d = 0.

    Raises:
        - `PreconditionViolationException` if `d` is out of range or `x_d = 1`.
    """
    vector = as_binary_vector(x, f.num_nodes)
    if not 0 <= d < f.num_nodes:
        raise PreconditionViolationException(f"Index {d} is out of range.")
    if vector[d] == 1:
        raise PreconditionViolationException(f"Marginal gain needs x_{d} = 0.")
    pair = np.repeat(vector[None, :], 2, axis=0)
    pair[1, d] = 1
    values = f.evaluate_many(pair)
    return float(values[1] - values[0])


def is_submodular_bruteforce(f: SetFunction, tol: float = TOL_SUB) -> bool:
    """
    Check all second differences f(x+e_i+e_j) - f(x+e_i) - f(x+e_j) + f(x) <= tol.

    Raises:
        - `ProblemTooLargeException` if `f` has more than 12 variables.
    """
    D = f.num_nodes
    if D > MAX_SUBMODULARITY_CHECK_DIM:
        msg = f"Submodularity check supports D <= {MAX_SUBMODULARITY_CHECK_DIM}."
        raise ProblemTooLargeException(msg)
    values = f.table()
    codes = np.arange(1 << D, dtype=np.int64)
    for i in range(D):
        bit_i = 1 << i
        for j in range(i + 1, D):
            bit_j = 1 << j
            base = codes[(codes & (bit_i | bit_j)) == 0]
            second = (
                values[base | bit_i | bit_j]
                - values[base | bit_i]
                - values[base | bit_j]
                + values[base]
            )
            if np.any(second > tol):
                return False
    return True


def greedy_base_vertex(f: SetFunction, w: Sequence[float]) -> BasePoint:
    """
    Greedy algorithm: the vertex of B(f) maximizing w^T s.

    Indices are visited by decreasing weight, ties by lowest index first, and
    s_{sigma(j)} = f(sigma(1..j)) - f(sigma(1..j-1)).
    """
    D = f.num_nodes
    weights = as_real_vector(w, D)
    order = np.argsort(-weights, kind="stable")
    chain = np.zeros((D + 1, D), dtype=np.int8)
    chain[:, order] = np.tri(D + 1, D, k=-1, dtype=np.int8)
    values = f.evaluate_many(chain)
    s = np.empty(D)
    s[order] = np.diff(values)
    return BasePoint(s=s)


def lovasz_extension(f: SetFunction, w: Sequence[float]) -> float:
    """
    Lovász extension of `f` at `w`, the support function of B(f).
    """
    weights = as_real_vector(w, f.num_nodes)
    return float(weights @ greedy_base_vertex(f, weights).s)


def is_in_base_polytope(f: SetFunction, s: np.ndarray, tol: float = TOL_NUM) -> bool:
    """
    Exhaustively check s(A) <= f(A) for all A and s(V) = f(V).

    Raises:
        - `ProblemTooLargeException` if `f` has more than 16 variables.
    """
    D = f.num_nodes
    if D > MAX_MEMBERSHIP_CHECK_DIM:
        limit = MAX_MEMBERSHIP_CHECK_DIM
        msg = f"Base polytope membership check supports D <= {limit}."
        raise ProblemTooLargeException(msg)
    s = as_real_vector(s, D, "s")
    X = hypercube(D)
    values = f.evaluate_many(X)
    if abs(s.sum() - values[-1]) > tol:
        return False
    return bool(np.all(X @ s <= values + tol))


def _validate_assignment(num_nodes: int, fixed: Mapping[int, int]):
    """Indices in range and values in {0, 1}."""
    assignment = np.zeros(num_nodes, dtype=np.int8)
    is_fixed = np.zeros(num_nodes, dtype=bool)
    for index, value in fixed.items():
        if not 0 <= int(index) < num_nodes:
            raise PreconditionViolationException(f"Index {index} is out of range.")
        if value not in (0, 1):
            msg = f"Fixed value for index {index} must be 0 or 1, got {value}."
            raise PreconditionViolationException(msg)
        assignment[int(index)] = value
        is_fixed[int(index)] = True
    return assignment, is_fixed


def _condition_cut(
    cut: CutFunction, assignment: np.ndarray, is_fixed: np.ndarray
) -> Tuple[CutFunction, np.ndarray]:
    """
    Split a conditioned cut into a cut on the free nodes plus a modular term.
    """
    free = np.flatnonzero(~is_fixed)
    position = np.full(cut.num_nodes, -1, dtype=np.int64)
    position[free] = np.arange(free.shape[0])
    linear = np.zeros(free.shape[0])
    if not cut.edges:
        return CutFunction(num_nodes=free.shape[0]), linear
    i, j, w = cut.sources, cut.targets, cut.weights
    fixed_i, fixed_j = is_fixed[i], is_fixed[j]
    both_free = ~fixed_i & ~fixed_j
    edges = tuple(
        (int(position[a]), int(position[b]), float(c))
        for a, b, c in zip(i[both_free], j[both_free], w[both_free])
    )
    # w |y - v| = w (1 - 2v) y + w v
    mask = ~fixed_i & fixed_j
    np.add.at(linear, position[i[mask]], w[mask] * (1 - 2 * assignment[j[mask]]))
    mask = fixed_i & ~fixed_j
    np.add.at(linear, position[j[mask]], w[mask] * (1 - 2 * assignment[i[mask]]))
    return CutFunction(num_nodes=free.shape[0], edges=edges), linear


def restrict_and_contract(f: SetFunction, fixed: Mapping[int, int]) -> SetFunction:
    """
    Condition `f` on a partial assignment.

    Returns g(y) = f(merge(fixed, y)) - f(merge(fixed, 0)) on the free indices,
    taken in increasing order. Cuts and cut mixtures stay cut mixtures (the fixed
    endpoints turn into modular terms), so they remain solvable by max-flow.

    Raises:
        - `PreconditionViolationException` if an index is out of range or a value
            is not binary.
    """
    if not fixed:
        return f
    assignment, is_fixed = _validate_assignment(f.num_nodes, fixed)
    free = np.flatnonzero(~is_fixed)

    if isinstance(f, CutFunction):
        cut, linear = _condition_cut(f, assignment, is_fixed)
        return SubmodularMixture((cut,), np.ones(1), -linear)

    if isinstance(f, SubmodularMixture):
        bases = []
        t = f.t[free].copy()
        for fk, a in zip(f.base_functions, f.alpha):
            if isinstance(fk, CutFunction):
                cut, linear = _condition_cut(fk, assignment, is_fixed)
                bases.append(cut)
                t -= a * linear
            else:
                bases.append(ConditionedFunction(fk, free, assignment))
        return SubmodularMixture(tuple(bases), f.alpha.copy(), t)

    return ConditionedFunction(f, free, assignment)
