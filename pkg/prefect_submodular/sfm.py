"""
Submodular function minimization: exhaustive search for small D and
max-flow/min-cut for mixtures of graph cuts plus modular terms.

Label convention: x_d = 1 iff variable node d ends on the sink side of the cut.
"""
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from prefect_submodular.exceptions import (
    ProblemTooLargeException,
    SubmodularConfigurationException,
    SubmodularDataException,
    UnsupportedStructureException,
)
from prefect_submodular.submodular import (
    TOL_NUM,
    CutFunction,
    SetFunction,
    SubmodularMixture,
    as_real_vector,
    code_to_vector,
    hypercube,
    iter_hypercube,
)

try:
    import maxflow
except ImportError:  # pragma: no cover
    maxflow = None

MAX_BRUTEFORCE_DIM = 20
BACKENDS = ("auto", "dinic", "pymaxflow", "bruteforce")


class Solver(str, Enum):
    """Solver that produced a `MinimizationResult`."""

    BRUTEFORCE = "bruteforce"
    MAXFLOW = "maxflow"


@dataclass(frozen=True, eq=False)
class MinimizationResult:
    """
    Minimizer of f(x) - extra_modular^T x.
    """

    argmin: np.ndarray
    value: float
    solver: Solver


@dataclass(eq=False)
class FlowNetwork:
    """
    s-t network over D variable nodes `0..D-1`, source `D` and sink `D + 1`.

    The energy of a labelling equals the capacity of the corresponding cut
    plus `offset`.
    """

    num_variables: int
    arcs: List[Tuple[int, int, float]] = field(default_factory=list)
    offset: float = 0.0

    def __post_init__(self):
        """Capacities must be finite and non-negative."""
        for tail, head, capacity in self.arcs:
            if not (0 <= tail < self.num_nodes and 0 <= head < self.num_nodes):
                raise SubmodularDataException(f"Arc ({tail}, {head}) is out of range.")
            if not np.isfinite(capacity) or capacity < 0:
                msg = f"Arc ({tail}, {head}) has invalid capacity {capacity}."
                raise SubmodularDataException(msg)
            if head == self.source or tail == self.sink:
                msg = f"Arc ({tail}, {head}) enters the source or leaves the sink."
                raise SubmodularDataException(msg)

    @property
    def source(self) -> int:
        """Node index of the source."""
        return self.num_variables

    @property
    def sink(self) -> int:
        """Node index of the sink."""
        return self.num_variables + 1

    @property
    def num_nodes(self) -> int:
        """Variables plus source and sink."""
        return self.num_variables + 2

    def cut_capacity(self, side: np.ndarray) -> float:
        """
        Capacity of the cut whose sink side holds the variables with `side == 1`.
        """
        on_sink = np.zeros(self.num_nodes, dtype=bool)
        on_sink[: self.num_variables] = np.asarray(side, dtype=bool)
        on_sink[self.sink] = True
        return float(
            sum(c for u, v, c in self.arcs if not on_sink[u] and on_sink[v])
        )

    def to_dimacs(self) -> str:
        """
        Dump the network in DIMACS max-flow format (1-based node ids).
        """
        lines = [
            f"c energy offset {self.offset!r}",
            f"p max {self.num_nodes} {len(self.arcs)}",
            f"n {self.source + 1} s",
            f"n {self.sink + 1} t",
        ]
        lines += [f"a {u + 1} {v + 1} {c!r}" for u, v, c in self.arcs]
        return "\n".join(lines) + "\n"


def _as_cut_mixture(f: SetFunction) -> Optional[SubmodularMixture]:
    """View f as a cut mixture, or None."""
    if isinstance(f, CutFunction):
        return SubmodularMixture((f,), np.ones(1), np.zeros(f.num_nodes))
    if isinstance(f, SubmodularMixture) and f.is_cut_mixture:
        return f
    return None


def minimize_bruteforce(
    f: SetFunction, extra_modular: Optional[Sequence[float]] = None
) -> MinimizationResult:
    """
    Exact minimizer of f(x) - extra_modular^T x by enumeration.

    Ties are broken by the smallest little-endian code.

    Raises:
        - `ProblemTooLargeException` if `f` has more than 20 variables.
    """
    D = f.num_nodes
    if D > MAX_BRUTEFORCE_DIM:
        msg = f"Brute-force minimization supports D <= {MAX_BRUTEFORCE_DIM}, got {D}."
        raise ProblemTooLargeException(msg)
    extra = np.zeros(D) if extra_modular is None else as_real_vector(extra_modular, D)
    values = np.concatenate(
        [f.evaluate_many(X) - X @ extra for X in iter_hypercube(D)]
    )
    best = int(np.flatnonzero(values <= values.min() + TOL_NUM)[0])
    return MinimizationResult(
        argmin=code_to_vector(best, D),
        value=float(values[best]),
        solver=Solver.BRUTEFORCE,
    )


def minimize_bruteforce_batch(
    f: SetFunction, extra_modular: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Minimize f(x) - e_m^T x for every row e_m of `extra_modular` at once.

    Returns:
        - The minimum values, shape (M,).
        - The minimizers, shape (M, D).
    """
    D = f.num_nodes
    if D > MAX_BRUTEFORCE_DIM // 2:
        msg = f"Batched brute force supports D <= {MAX_BRUTEFORCE_DIM // 2}, got {D}."
        raise ProblemTooLargeException(msg)
    X = hypercube(D)
    table = f.evaluate_many(X)
    extras = np.atleast_2d(np.asarray(extra_modular, dtype=float))
    energies = table[None, :] - extras @ X.T
    best = np.argmin(energies, axis=1)
    return energies[np.arange(extras.shape[0]), best], X[best]


def build_flow_network(
    f: SetFunction, extra_modular: Optional[Sequence[float]] = None
) -> FlowNetwork:
    """
    Pairwise-energy network for f(x) - extra_modular^T x with f a cut mixture.

    With c = -(t + extra_modular), a positive c_d becomes an arc source -> d and a
    negative one an arc d -> sink, each with capacity |c_d|; every merged edge
    (i, j, alpha w) becomes two antiparallel arcs.

    Raises:
        - `UnsupportedStructureException` if a base function is not a cut.
    """
    mixture = _as_cut_mixture(f)
    if mixture is None:
        msg = f"Max-flow needs a mixture of cut functions, got {type(f).__name__}."
        raise UnsupportedStructureException(msg)
    D = mixture.num_nodes
    extra = np.zeros(D) if extra_modular is None else as_real_vector(extra_modular, D)
    c = -(mixture.t + extra)

    network = FlowNetwork(num_variables=D, offset=float(np.minimum(c, 0).sum()))
    for d in range(D):
        if c[d] > 0:
            network.arcs.append((network.source, d, float(c[d])))
        elif c[d] < 0:
            network.arcs.append((d, network.sink, float(-c[d])))
    for i, j, w in zip(*mixture.merged_edges()):
        if w > 0:
            network.arcs.append((int(i), int(j), float(w)))
            network.arcs.append((int(j), int(i), float(w)))
    return network


class _ResidualGraph:
    """
    Residual graph with paired arcs: arc `e` and its reverse `e ^ 1`.
    """

    def __init__(self, network: FlowNetwork):
        self.adjacency: List[List[int]] = [[] for _ in range(network.num_nodes)]
        self.heads: List[int] = []
        self.residual: List[float] = []
        for tail, head, capacity in network.arcs:
            self._add_arc(tail, head, capacity)
        largest = max(self.residual, default=0.0)
        self.eps = 1e-12 * max(1.0, largest)

    def _add_arc(self, tail: int, head: int, capacity: float):
        """Append an arc and its zero-capacity reverse."""
        self.adjacency[tail].append(len(self.heads))
        self.heads.append(head)
        self.residual.append(float(capacity))
        self.adjacency[head].append(len(self.heads))
        self.heads.append(tail)
        self.residual.append(0.0)

    def levels(self, source: int) -> List[int]:
        """BFS distances from `source` in the residual graph, -1 if unreachable."""
        level = [-1] * len(self.adjacency)
        level[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for e in self.adjacency[u]:
                v = self.heads[e]
                if level[v] < 0 and self.residual[e] > self.eps:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level

    def reaches(self, sink: int) -> List[bool]:
        """Nodes with a residual path to `sink`."""
        found = [False] * len(self.adjacency)
        found[sink] = True
        queue = deque([sink])
        while queue:
            v = queue.popleft()
            for e in self.adjacency[v]:
                u = self.heads[e]
                if not found[u] and self.residual[e ^ 1] > self.eps:
                    found[u] = True
                    queue.append(u)
        return found

    def blocking_flow(self, source: int, sink: int, level: List[int]) -> float:
        """
        Saturate the layered graph with augmenting paths (iterative DFS).
        """
        heads, residual, adjacency = self.heads, self.residual, self.adjacency
        cursor = [0] * len(adjacency)
        total = 0.0
        while True:
            path: List[int] = []
            u = source
            while u != sink:
                arcs = adjacency[u]
                while cursor[u] < len(arcs):
                    e = arcs[cursor[u]]
                    if residual[e] > self.eps and level[heads[e]] == level[u] + 1:
                        break
                    cursor[u] += 1
                if cursor[u] < len(arcs):
                    e = arcs[cursor[u]]
                    path.append(e)
                    u = heads[e]
                    continue
                # dead end
                if u == source:
                    return total
                level[u] = -1
                e = path.pop()
                u = heads[e ^ 1]
                cursor[u] += 1
            bottleneck = min(residual[e] for e in path)
            for e in path:
                residual[e] -= bottleneck
                residual[e ^ 1] += bottleneck
            total += bottleneck


def max_flow(network: FlowNetwork) -> Tuple[float, np.ndarray]:
    """
    Dinic's algorithm (BFS layering plus blocking flows).

    Returns:
        - The maximum flow value.
        - `min_cut_side`: 1 for variables that still reach the sink in the final
            residual graph. This is the smallest sink side among all minimum cuts,
            so tied minimizers resolve to the smallest set.
    """
    graph = _ResidualGraph(network)
    flow = 0.0
    while True:
        level = graph.levels(network.source)
        if level[network.sink] < 0:
            break
        flow += graph.blocking_flow(network.source, network.sink, level)
    on_sink = graph.reaches(network.sink)[: network.num_variables]
    return flow, np.array(on_sink, dtype=np.int8)


def _pymaxflow_side(network: FlowNetwork) -> np.ndarray:
    """Sink-side labels from PyMaxflow's Boykov-Kolmogorov solver."""
    graph = maxflow.Graph[float]()
    nodes = graph.add_nodes(network.num_variables)
    for tail, head, capacity in network.arcs:
        if tail == network.source:
            graph.add_tedge(nodes[head], capacity, 0.0)
        elif head == network.sink:
            graph.add_tedge(nodes[tail], 0.0, capacity)
        else:
            graph.add_edge(nodes[tail], nodes[head], capacity, 0.0)
    graph.maxflow()
    return np.array(
        [graph.get_segment(nodes[d]) for d in range(network.num_variables)],
        dtype=np.int8,
    )


def minimize(
    f: SetFunction,
    extra_modular: Optional[Sequence[float]] = None,
    backend: str = "auto",
) -> MinimizationResult:
    """
    Minimize f(x) - extra_modular^T x.

    Cut mixtures go to max-flow (`pymaxflow` when importable under `auto`, else
    the built-in Dinic solver); anything else is enumerated when D <= 20.

    Args:
        - f (SetFunction): The submodular function.
        - extra_modular (array, optional): Modular perturbation, zero by default.
        - backend (str): One of `auto`, `dinic`, `pymaxflow`, `bruteforce`.

    Raises:
        - `SubmodularConfigurationException` if `backend` is unknown.
        - `UnsupportedStructureException` if `f` is not a cut mixture and D > 20.
    """
    if backend not in BACKENDS:
        raise SubmodularConfigurationException(f"Unknown `backend` {backend!r}.")
    D = f.num_nodes
    extra = np.zeros(D) if extra_modular is None else as_real_vector(extra_modular, D)
    mixture = _as_cut_mixture(f)

    if backend == "bruteforce" or mixture is None or D == 0:
        if D > MAX_BRUTEFORCE_DIM:
            msg = (
                f"No exact minimizer for {type(f).__name__} with D = {D}: max-flow "
                "needs cut functions and enumeration needs D <= 20."
            )
            raise UnsupportedStructureException(msg)
        return minimize_bruteforce(f, extra)

    network = build_flow_network(mixture, extra)
    if backend == "pymaxflow" or (backend == "auto" and maxflow is not None):
        if maxflow is None:
            raise SubmodularConfigurationException("PyMaxflow is not installed.")
        argmin = _pymaxflow_side(network)
    else:
        _, argmin = max_flow(network)
    value = float(f.evaluate_many(argmin[None, :])[0] - argmin @ extra)
    return MinimizationResult(argmin=argmin, value=value, solver=Solver.MAXFLOW)
