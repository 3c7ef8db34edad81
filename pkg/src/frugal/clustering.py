"""Budget-capped agglomerative clustering with a mixed linkage rule.

The merge value of two clusters interpolates between their closest and
farthest pairwise distances: weight 1 recovers single linkage, weight 0
complete linkage.  A run performs at most a budgeted number of greedy
merges, then a dynamic program recovers the best pruning of the resulting
forest under the k-median objective (cluster cost is the best medoid among
the cluster's own members).  A run counts as solved at the smallest merge
budget whose best pruning cost reaches the instance's admissibility
threshold.

Merge values are affine in the mixture weight, so merge sequences are
piecewise constant over the unit interval; the partition here computes the
exact invariance cells with rational arithmetic, the same way the
branch-and-bound domain does.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .core import (
    CappedRunOutcome,
    ConfigProblem,
    InstanceHandle,
    ParamSpace,
    PartitionCell,
)
from .sweep import AffineScore, DecisionTracker, cells_from_refinement, refine_cells, sweep_unit_interval

__all__ = [
    "ClusteringInstance",
    "MergeForest",
    "PruningResult",
    "ClusteringProblem",
    "MAX_POINTS",
    "linkage_merge_value",
    "capped_linkage_run",
    "best_pruning",
    "clustering_run_with_cap",
    "clustering_partition",
    "clustering_cell_bound",
    "exact_kmedian_cost",
    "parse_instance",
    "format_instance",
    "load_instance",
    "random_metric_instance",
]

MAX_POINTS = 12
_TRIANGLE_SLACK = Fraction(1, 10**9)
_F_BOUND_SATURATION = 2**62


def _to_fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


@dataclass(frozen=True)
class ClusteringInstance:
    """A metric over up to ``MAX_POINTS`` points, a target cluster count,
    and the cost threshold below which a clustering is admissible."""

    distances: tuple[tuple[Fraction, ...], ...]
    k: int
    theta: Fraction
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        n = len(self.distances)
        if n < 2:
            raise ValueError("need at least two points")
        if n > MAX_POINTS:
            raise ValueError(f"at most {MAX_POINTS} points supported")
        for i, row in enumerate(self.distances):
            if len(row) != n:
                raise ValueError("distance matrix must be square")
            if row[i] != 0:
                raise ValueError("diagonal distances must be zero")
            for j, value in enumerate(row):
                if value < 0:
                    raise ValueError("distances must be nonnegative")
                if value != self.distances[j][i]:
                    raise ValueError("distance matrix must be symmetric")
        for i, j, l in itertools.permutations(range(n), 3):
            if self.distances[i][l] > self.distances[i][j] + self.distances[j][l] + _TRIANGLE_SLACK:
                raise ValueError(f"triangle inequality violated at ({i}, {j}, {l})")
        if not 1 <= self.k <= n:
            raise ValueError("k must lie in [1, n]")
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    @property
    def n(self) -> int:
        return len(self.distances)

    @classmethod
    def from_lists(cls, distances, k: int, theta, name: str = "") -> "ClusteringInstance":
        return cls(
            distances=tuple(tuple(_to_fraction(v) for v in row) for row in distances),
            k=int(k),
            theta=_to_fraction(theta),
            name=name,
        )


@dataclass(frozen=True)
class MergeForest:
    """State of a linkage run: singletons plus one node per performed merge.

    Node ids 0..n-1 are the points; merge ``s`` (0-based) creates node
    ``n + s``.  ``members[i]`` is the point set of node ``i``.
    """

    size: int
    merges: tuple[tuple[int, int, int], ...]
    members: tuple[frozenset[int], ...]
    roots: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.roots) != self.size - len(self.merges):
            raise ValueError("a forest with m merges must have n - m roots")

    def prefix(self, merge_count: int) -> "MergeForest":
        """The forest after only the first ``merge_count`` merges."""
        if not 0 <= merge_count <= len(self.merges):
            raise ValueError("merge_count out of range")
        merged_away = set()
        for a, b, _ in self.merges[:merge_count]:
            merged_away.update((a, b))
        node_count = self.size + merge_count
        roots = tuple(i for i in range(node_count) if i not in merged_away)
        return MergeForest(
            size=self.size,
            merges=self.merges[:merge_count],
            members=self.members[:node_count],
            roots=roots,
        )

    def children(self) -> dict[int, tuple[int, int]]:
        return {new: (a, b) for a, b, new in self.merges}


def linkage_merge_value(A: Iterable[int], B: Iterable[int], rho, distances) -> Fraction:
    """Mixture of the closest and farthest pairwise distances between two
    disjoint clusters: ``rho * min + (1 - rho) * max``."""
    set_a, set_b = frozenset(A), frozenset(B)
    if not set_a or not set_b:
        raise ValueError("clusters must be nonempty")
    if set_a & set_b:
        raise ValueError("clusters must be disjoint")
    exact_rho = _to_fraction(rho)
    if not 0 <= exact_rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    pairs = [distances[u][v] for u in set_a for v in set_b]
    return exact_rho * min(pairs) + (1 - exact_rho) * max(pairs)


def capped_linkage_run(
    instance: ClusteringInstance,
    rho,
    tau_merges: int,
    tracker: DecisionTracker | None = None,
) -> MergeForest:
    """Perform exactly ``tau_merges`` greedy merges at the given weight.

    Each step merges the root pair with the smallest linkage value; ties
    break toward the pair that stays minimal just right of the tie, then
    toward the lexicographically smallest (smaller id, larger id) pair.
    Routing the argmin through a tracker records the invariance interval.
    """
    n = instance.n
    if not 0 <= tau_merges <= n - 1:
        raise ValueError("tau_merges must lie in [0, n - 1]")
    exact_rho = _to_fraction(rho)
    if not 0 <= exact_rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    if tracker is None:
        # Standalone runs at the top endpoint behave like the limit from
        # the left; see DecisionTracker for the boundary convention.
        tracker = DecisionTracker(exact_rho, Fraction(2), tie_rightward=exact_rho != 1)
    members: list[frozenset[int]] = [frozenset((i,)) for i in range(n)]
    roots: list[int] = list(range(n))
    # Closest/farthest pair distances between live roots, updated on merge.
    stats: dict[tuple[int, int], tuple[Fraction, Fraction]] = {}
    for i in range(n):
        for j in range(i + 1, n):
            d = instance.distances[i][j]
            stats[(i, j)] = (d, d)
    merges: list[tuple[int, int, int]] = []
    for step in range(tau_merges):
        candidates = []
        for a, b in itertools.combinations(sorted(roots), 2):
            closest, farthest = stats[(a, b)]
            candidates.append(
                ((a, b), AffineScore(intercept=farthest, slope=closest - farthest))
            )
        a, b = tracker.argmin(candidates)
        new_id = n + step
        members.append(members[a] | members[b])
        merges.append((a, b, new_id))
        roots.remove(a)
        roots.remove(b)
        for r in roots:
            mins = []
            maxs = []
            for old in (a, b):
                lo, hi = min(old, r), max(old, r)
                closest, farthest = stats[(lo, hi)]
                mins.append(closest)
                maxs.append(farthest)
            stats[(r, new_id)] = (min(mins), max(maxs))
        roots.append(new_id)
    return MergeForest(
        size=n, merges=tuple(merges), members=tuple(members), roots=tuple(sorted(roots))
    )


@dataclass(frozen=True)
class PruningResult:
    """Best antichain selection: clusters covering all points, or inadmissible."""

    clusters: tuple[frozenset[int], ...] | None
    cost: Any  # Fraction, or math.inf when no selection of size k exists


def _cluster_cost(members: frozenset[int], instance: ClusteringInstance) -> Fraction:
    return min(
        sum((instance.distances[p][c] for p in members), Fraction(0)) for c in members
    )


def best_pruning(forest: MergeForest, k: int, instance: ClusteringInstance) -> PruningResult:
    """Minimum k-median cost over all exact-k antichain selections.

    Per forest node, a table maps each achievable cluster count to the best
    cost of covering that node's points with clusters from its subtree;
    tables combine across roots by a knapsack over the cluster count.  When
    fewer roots than k exist the selection is infeasible and the cost is the
    infinity sentinel.
    """
    if not 1 <= k <= forest.size:
        raise ValueError("k must lie in [1, n]")
    if k < len(forest.roots):
        return PruningResult(clusters=None, cost=math.inf)
    children = forest.children()
    cost_cache: dict[int, Fraction] = {}

    def node_cost(node: int) -> Fraction:
        if node not in cost_cache:
            cost_cache[node] = _cluster_cost(forest.members[node], instance)
        return cost_cache[node]

    tables: dict[int, dict[int, Fraction]] = {}
    node_count = forest.size + len(forest.merges)
    for node in range(node_count):
        if node < forest.size:
            tables[node] = {1: Fraction(0)}
            continue
        left, right = children[node]
        table: dict[int, Fraction] = {1: node_cost(node)}
        for q_left, c_left in tables[left].items():
            for q_right, c_right in tables[right].items():
                q = q_left + q_right
                total = c_left + c_right
                if q not in table or total < table[q]:
                    table[q] = total
        tables[node] = table

    # suffix_best[i] maps q to the best cost of covering roots[i:] with
    # exactly q clusters.
    roots = list(forest.roots)
    suffix_best: list[dict[int, Fraction]] = [{} for _ in range(len(roots) + 1)]
    suffix_best[len(roots)] = {0: Fraction(0)}
    for i in reversed(range(len(roots))):
        current: dict[int, Fraction] = {}
        for q_root, c_root in tables[roots[i]].items():
            for q_rest, c_rest in suffix_best[i + 1].items():
                q = q_root + q_rest
                if q > k:
                    continue
                total = c_root + c_rest
                if q not in current or total < current[q]:
                    current[q] = total
        suffix_best[i] = current
    if k not in suffix_best[0]:
        return PruningResult(clusters=None, cost=math.inf)
    target_cost = suffix_best[0][k]

    def select(node: int, q: int) -> list[int]:
        # A single cluster covering a node's points can only be the node
        # itself; larger counts must split between the children.
        if q == 1:
            return [node]
        left, right = children[node]
        for q_left in sorted(tables[left]):
            q_right = q - q_left
            if (
                q_right in tables[right]
                and tables[left][q_left] + tables[right][q_right] == tables[node][q]
            ):
                return select(left, q_left) + select(right, q_right)
        raise AssertionError("pruning reconstruction failed below a node")

    chosen: list[int] = []
    remaining = k
    for i, root in enumerate(roots):
        for q_root in sorted(tables[root]):
            rest = remaining - q_root
            if (
                rest in suffix_best[i + 1]
                and tables[root][q_root] + suffix_best[i + 1][rest]
                == suffix_best[i][remaining]
            ):
                chosen.extend(select(root, q_root))
                remaining = rest
                break
        else:
            raise AssertionError("pruning reconstruction failed across roots")
    clusters = tuple(forest.members[node] for node in chosen)
    return PruningResult(clusters=clusters, cost=target_cost)


def clustering_run_with_cap(rho, instance: ClusteringInstance, tau: int) -> CappedRunOutcome:
    """Smallest merge budget whose best pruning is admissible, if within cap.

    The best pruning cost is non-increasing in the merge budget (later
    forests contain every earlier node), so the first admissible budget is
    the exact loss.  Budgets are capped at ``n - 1`` merges; a cap beyond
    that cannot help.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    budget = min(tau, instance.n - 1)
    forest = capped_linkage_run(instance, rho, budget)
    for tau_prime in range(budget + 1):
        result = best_pruning(forest.prefix(tau_prime), instance.k, instance)
        if result.cost <= instance.theta:
            return CappedRunOutcome.finished(tau_prime)
    return CappedRunOutcome.truncated(tau)


def _payloads(instances: Sequence[Any]) -> list[ClusteringInstance]:
    return [
        item.payload if isinstance(item, InstanceHandle) else item for item in instances
    ]


def clustering_partition(
    instances: Sequence[Any], tau: int, threads: int = 1
) -> list[PartitionCell]:
    """Exact partition of [0, 1] into merge-invariance cells at the given cap."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    items = _payloads(instances)
    if not items:
        raise ValueError("need at least one instance")

    def sweep_one(instance: ClusteringInstance):
        budget = min(tau, instance.n - 1)

        def execute(rho: Fraction, tracker: DecisionTracker):
            forest = capped_linkage_run(instance, rho, budget, tracker)
            for tau_prime in range(budget + 1):
                result = best_pruning(forest.prefix(tau_prime), instance.k, instance)
                if result.cost <= instance.theta:
                    return (min(tau_prime, tau), True)
            return (tau, False)

        return sweep_unit_interval(execute, degenerate_message="degenerate linkage tie")

    distinct: dict[int, ClusteringInstance] = {}
    order: list[int] = []
    for item in items:
        key = id(item)
        order.append(key)
        if key not in distinct:
            distinct[key] = item
    keys = list(distinct)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            swept = dict(zip(keys, pool.map(sweep_one, (distinct[k] for k in keys))))
    else:
        swept = {k: sweep_one(distinct[k]) for k in keys}
    refined = refine_cells([swept[k] for k in order])
    return cells_from_refinement(refined)


def clustering_cell_bound(instances: Sequence[Any], tau: int) -> int:
    """Analytic ceiling on the cell count: ``sum_j n_j^8 + 1``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    total = 1
    for instance in _payloads(instances):
        total += instance.n**8
        if total >= _F_BOUND_SATURATION:
            return _F_BOUND_SATURATION
    return total


def exact_kmedian_cost(distances: Sequence[Sequence[Any]], k: int) -> Fraction:
    """Brute-force optimal k-median cost: best k centers, nearest-center
    assignment.  Any partition's medoid cost is at least this."""
    n = len(distances)
    if not 1 <= k <= n:
        raise ValueError("k must lie in [1, n]")
    best = None
    points = range(n)
    for centers in itertools.combinations(points, k):
        cost = sum(min(_to_fraction(distances[p][c]) for c in centers) for p in points)
        if best is None or cost < best:
            best = cost
    return best


class ClusteringProblem(ConfigProblem):
    """Configuration problem over a finite pool of clustering instances."""

    domain = "clustering"

    def __init__(self, pool: Sequence[ClusteringInstance], threads: int = 1) -> None:
        if not pool:
            raise ValueError("need a nonempty instance pool")
        self.pool = list(pool)
        self.threads = threads
        self.space = ParamSpace()
        self._measured: dict[tuple[frozenset, int], int] = {}

    def sample(self, rng: np.random.Generator) -> InstanceHandle:
        index = int(rng.integers(len(self.pool)))
        return InstanceHandle(domain=self.domain, uid=index, payload=self.pool[index])

    def all_instances(self) -> list[InstanceHandle]:
        return [
            InstanceHandle(domain=self.domain, uid=i, payload=inst)
            for i, inst in enumerate(self.pool)
        ]

    def _key(self, instances: Sequence[Any], tau: int):
        uids = frozenset(
            h.uid if isinstance(h, InstanceHandle) else id(h) for h in instances
        )
        return (uids, tau)

    def run_with_cap(self, rho, instance, tau: int) -> CappedRunOutcome:
        payload = instance.payload if isinstance(instance, InstanceHandle) else instance
        return clustering_run_with_cap(rho, payload, tau)

    def get_partition(self, instances, tau: int) -> list[PartitionCell]:
        cells = clustering_partition(instances, tau, threads=self.threads)
        self._measured[self._key(instances, tau)] = len(cells)
        return cells

    def f_bound(self, instances, tau: int) -> int:
        measured = self._measured.get(self._key(instances, tau))
        if measured is not None:
            return measured
        return clustering_cell_bound(instances, tau)


def parse_instance(text: str, name: str = "") -> ClusteringInstance:
    """Parse the plain-text metric format.

    Line 1: ``n k theta``; then ``n`` lines of ``n`` distances (the full
    symmetric matrix).  Symmetry, the zero diagonal, and the triangle
    inequality are all validated.
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty instance file")
    header = lines[0].split()
    if len(header) != 3:
        raise ValueError("first line must be 'n k theta'")
    n, k = int(header[0]), int(header[1])
    theta = header[2]
    if len(lines) != 1 + n:
        raise ValueError(f"expected {1 + n} nonblank lines, found {len(lines)}")
    rows = []
    for line in lines[1:]:
        tokens = line.split()
        if len(tokens) != n:
            raise ValueError(f"each matrix line must carry {n} distances")
        rows.append(tokens)
    return ClusteringInstance.from_lists(rows, k, theta, name=name)


def format_instance(instance: ClusteringInstance) -> str:
    def fmt(value: Fraction) -> str:
        if value.denominator == 1:
            return str(value.numerator)
        return str(float(value))

    lines = [f"{instance.n} {instance.k} {fmt(instance.theta)}"]
    for row in instance.distances:
        lines.append(" ".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def load_instance(path: str | Path) -> ClusteringInstance:
    path = Path(path)
    return parse_instance(path.read_text(), name=path.name)


def random_metric_instance(
    rng: np.random.Generator,
    num_points: int = 6,
    k: int = 2,
    slack: Any = Fraction(6, 5),
) -> ClusteringInstance:
    """Random integer metric: distinct grid points under the L1 distance.

    The admissibility threshold is the exhaustive optimal k-median cost
    scaled by ``slack``, so every instance is solvable once enough merges
    are allowed.
    """
    if not 2 <= num_points <= MAX_POINTS:
        raise ValueError("num_points out of range")
    if not 1 <= k < num_points:
        raise ValueError("k must lie in [1, num_points)")
    points: list[tuple[int, int]] = []
    seen = set()
    while len(points) < num_points:
        candidate = (int(rng.integers(0, 13)), int(rng.integers(0, 13)))
        if candidate not in seen:
            seen.add(candidate)
            points.append(candidate)
    distances = [
        [
            Fraction(abs(p[0] - q[0]) + abs(p[1] - q[1]))
            for q in points
        ]
        for p in points
    ]
    theta = exact_kmedian_cost(distances, k) * _to_fraction(slack)
    return ClusteringInstance.from_lists(distances, k, theta)
