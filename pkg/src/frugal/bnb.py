"""Branch-and-bound over boxed binary maximization programs.

Branching uses a one-parameter mixture of two scores derived from the LP
objective decreases of the two candidate children: the mixture weight slides
between the smaller decrease and the larger one.  The loss of a run is the
number of nodes in the finished search tree.  Because every branching
decision is an argmax over scores affine in the mixture weight, the unit
interval splits into finitely many cells on which the whole tree is
invariant; the partition here computes those cells exactly.

All LP relaxations are solved with a dense two-phase tableau simplex over
exact rationals using Bland's rule, so objective values, scores, and cell
breakpoints are exact.  This is desk-scale machinery: at most 20 variables,
and every solved relaxation is memoized per instance.
"""
from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

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
    "Milp",
    "LpSolution",
    "BnbNode",
    "BnbProblem",
    "MAX_VARIABLES",
    "MAX_TREE_SIZE",
    "INFEASIBLE_SCORE",
    "lp_relax",
    "scores",
    "bnb_run",
    "branching_trace",
    "bnb_partition",
    "bnb_cell_bound",
    "parse_milp",
    "format_milp",
    "load_milp",
    "random_milp",
]

MAX_VARIABLES = 20
# Any run that builds this many nodes is treated as terminated at this loss.
MAX_TREE_SIZE = 2**15
# Finite stand-in for the objective decrease of an infeasible child; keeps
# score mixtures affine.  A node with both children infeasible is fathomed
# before its score can matter.
INFEASIBLE_SCORE = Fraction(10**9)
_F_BOUND_SATURATION = 2**62

_SIMPLEX_ITERATION_LIMIT = 100_000


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
class Milp:
    """A maximization program over binary variables inside the unit box.

    ``rows @ x <= rhs`` with ``x`` binary; the box ``0 <= x <= 1`` is always
    imposed on the relaxation, so the feasible region is bounded regardless
    of the constraint matrix.
    """

    objective: tuple[Fraction, ...]
    rows: tuple[tuple[Fraction, ...], ...]
    rhs: tuple[Fraction, ...]
    name: str = field(default="", compare=False)
    _lp_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.objective:
            raise ValueError("need at least one variable")
        if len(self.objective) > MAX_VARIABLES:
            raise ValueError(f"at most {MAX_VARIABLES} variables supported")
        if len(self.rows) != len(self.rhs):
            raise ValueError("one right-hand side per row required")
        for row in self.rows:
            if len(row) != len(self.objective):
                raise ValueError("row length must match the variable count")

    @property
    def n(self) -> int:
        return len(self.objective)

    @classmethod
    def from_lists(cls, objective, rows, rhs, name: str = "") -> "Milp":
        return cls(
            objective=tuple(_to_fraction(v) for v in objective),
            rows=tuple(tuple(_to_fraction(v) for v in row) for row in rows),
            rhs=tuple(_to_fraction(v) for v in rhs),
            name=name,
        )


@dataclass(frozen=True)
class LpSolution:
    """Optimum of an LP relaxation, or an infeasibility certificate."""

    status: str
    objective: Fraction | None
    point: tuple[Fraction, ...] | None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    def is_integral(self) -> bool:
        if not self.is_optimal:
            return False
        return all(x == 0 or x == 1 for x in self.point)


def _pivot(tableau: list[list[Fraction]], zrow: list[Fraction], row: int, col: int) -> None:
    pivot_row = tableau[row]
    piv = pivot_row[col]
    if piv != 1:
        inv = 1 / piv
        tableau[row] = pivot_row = [v * inv for v in pivot_row]
    for other in tableau:
        if other is pivot_row:
            continue
        factor = other[col]
        if factor:
            for j, v in enumerate(pivot_row):
                if v:
                    other[j] -= factor * v
    factor = zrow[col]
    if factor:
        for j, v in enumerate(pivot_row):
            if v:
                zrow[j] -= factor * v


def _reduced_costs(
    tableau: list[list[Fraction]], basis: list[int], cost: list[Fraction], ncols: int
) -> list[Fraction]:
    zrow = list(cost) + [Fraction(0)]
    for i, b in enumerate(basis):
        cb = cost[b]
        if cb:
            row = tableau[i]
            for j in range(ncols + 1):
                if row[j]:
                    zrow[j] -= cb * row[j]
    return zrow


def _simplex_min(
    tableau: list[list[Fraction]], basis: list[int], cost: list[Fraction], ncols: int
) -> Fraction:
    """Minimize cost over the tableau in place; Bland's rule, exact arithmetic."""
    zrow = _reduced_costs(tableau, basis, cost, ncols)
    for _ in range(_SIMPLEX_ITERATION_LIMIT):
        entering = -1
        for j in range(ncols):
            if zrow[j] < 0:
                entering = j
                break
        if entering < 0:
            return -zrow[ncols]
        leaving = -1
        best_ratio = None
        for i, row in enumerate(tableau):
            coef = row[entering]
            if coef > 0:
                ratio = row[-1] / coef
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and basis[i] < basis[leaving])
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise RuntimeError("unbounded LP despite box constraints")
        _pivot(tableau, zrow, leaving, entering)
        basis[leaving] = entering
    raise RuntimeError("simplex iteration limit exceeded")


def _solve_box_lp(
    objective: Sequence[Fraction], rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]
) -> tuple[str, Fraction | None, tuple[Fraction, ...] | None]:
    """Maximize objective over ``rows @ x <= rhs`` and ``0 <= x <= 1``."""
    n = len(objective)
    zero = Fraction(0)
    one = Fraction(1)
    all_rows = [list(row) for row in rows] + [
        [one if j == i else zero for j in range(n)] for i in range(n)
    ]
    all_rhs = list(rhs) + [one] * n
    m = len(all_rows)
    n_slack = m
    negative = [i for i in range(m) if all_rhs[i] < 0]
    n_art = len(negative)
    ncols = n + n_slack + n_art
    tableau: list[list[Fraction]] = []
    basis: list[int] = []
    art_col = {r: n + n_slack + k for k, r in enumerate(negative)}
    for i in range(m):
        row = [zero] * (ncols + 1)
        flip = all_rhs[i] < 0
        sign = -1 if flip else 1
        for j in range(n):
            coef = all_rows[i][j]
            if coef:
                row[j] = sign * coef
        row[n + i] = Fraction(sign)
        row[-1] = sign * all_rhs[i]
        if flip:
            row[art_col[i]] = one
            basis.append(art_col[i])
        else:
            basis.append(n + i)
        tableau.append(row)

    if n_art:
        phase1 = [zero] * ncols
        for col in art_col.values():
            phase1[col] = one
        infeasibility = _simplex_min(tableau, basis, phase1, ncols)
        if infeasibility > 0:
            return "infeasible", None, None
        # Drive leftover artificials out of the basis, dropping redundant rows.
        art_set = set(art_col.values())
        keep: list[int] = []
        for i in range(len(tableau)):
            if basis[i] in art_set:
                pivot_col = next(
                    (j for j in range(n + n_slack) if tableau[i][j] != 0), None
                )
                if pivot_col is None:
                    continue
                zdummy = [zero] * (ncols + 1)
                _pivot(tableau, zdummy, i, pivot_col)
                basis[i] = pivot_col
            keep.append(i)
        tableau = [tableau[i][: n + n_slack] + [tableau[i][-1]] for i in keep]
        basis = [basis[i] for i in keep]
        ncols = n + n_slack

    phase2 = [-c for c in objective] + [zero] * (ncols - n)
    neg_value = _simplex_min(tableau, basis, phase2, ncols)
    point = [zero] * n
    for i, b in enumerate(basis):
        if b < n:
            point[b] = tableau[i][-1]
    return "optimal", -neg_value, tuple(point)


def _normalize_fixings(fixings: Mapping[int, int] | Iterable[tuple[int, int]] | None, n: int):
    if fixings is None:
        return ()
    items = sorted(dict(fixings).items())
    for index, value in items:
        if not 0 <= index < n:
            raise ValueError(f"fixed variable index {index} out of range")
        if value not in (0, 1):
            raise ValueError(f"fixed value must be binary, got {value}")
    return tuple(items)


def lp_relax(milp: Milp, fixings=None) -> LpSolution:
    """Exact optimum of the LP relaxation with the given variables fixed.

    Free variables range over ``[0, 1]``; results are memoized per instance
    keyed by the fixing set, since branch-and-bound revisits the same
    subproblems across parameters and caps.
    """
    fixed = _normalize_fixings(fixings, milp.n)
    cache = milp._lp_cache
    hit = cache.get(fixed)
    if hit is not None:
        return hit
    fix = dict(fixed)
    free = [j for j in range(milp.n) if j not in fix]
    constant = sum((milp.objective[j] * v for j, v in fixed), Fraction(0))
    if not free:
        feasible = all(
            sum((row[j] * fix[j] for j in fix), Fraction(0)) <= b
            for row, b in zip(milp.rows, milp.rhs)
        )
        if feasible:
            point = tuple(Fraction(fix[j]) for j in range(milp.n))
            solution = LpSolution("optimal", constant, point)
        else:
            solution = LpSolution("infeasible", None, None)
        cache[fixed] = solution
        return solution
    objective = [milp.objective[j] for j in free]
    rows = [[row[j] for j in free] for row in milp.rows]
    rhs = [
        b - sum((row[j] * fix[j] for j in fix), Fraction(0))
        for row, b in zip(milp.rows, milp.rhs)
    ]
    status, value, reduced_point = _solve_box_lp(objective, rows, rhs)
    if status != "optimal":
        solution = LpSolution("infeasible", None, None)
    else:
        point = [Fraction(0)] * milp.n
        for j, v in fixed:
            point[j] = Fraction(v)
        for j, v in zip(free, reduced_point):
            point[j] = v
        solution = LpSolution("optimal", value + constant, tuple(point))
    cache[fixed] = solution
    return solution


@dataclass(frozen=True)
class BnbNode:
    """A search-tree node: a partial assignment plus its LP relaxation."""

    node_id: int
    depth: int
    fixings: tuple[tuple[int, int], ...]
    relaxation: LpSolution


def scores(node: BnbNode, index: int, milp: Milp) -> tuple[Fraction, Fraction]:
    """Objective decreases of the two children from branching on a variable.

    Returns ``(smaller, larger)`` of the two decreases; an infeasible child
    contributes the finite sentinel ``INFEASIBLE_SCORE``.
    """
    fix = dict(node.fixings)
    if index in fix:
        raise ValueError(f"variable {index} is already fixed at this node")
    if not node.relaxation.is_optimal:
        raise ValueError("scores need a node with an optimal relaxation")
    parent_value = node.relaxation.objective
    decreases = []
    for value in (0, 1):
        child = lp_relax(milp, {**fix, index: value})
        if child.is_optimal:
            decreases.append(parent_value - child.objective)
        else:
            decreases.append(INFEASIBLE_SCORE)
    return min(decreases), max(decreases)


@dataclass
class _RunRecord:
    completed: bool
    tree_size: int
    incumbent_value: Fraction | None
    incumbent_point: tuple[Fraction, ...] | None
    decisions: list[tuple[int, int]]


def _run_capped(milp: Milp, node_limit: int, tracker: DecisionTracker) -> _RunRecord:
    """Best-first branch-and-bound capped at ``node_limit`` tree nodes.

    Node selection pops the frontier node with the largest relaxation value
    (ties: deeper node, then lower node id); these keys never depend on the
    mixture weight, so the only parameter-sensitive decisions are the
    branching argmaxes routed through the tracker.
    """
    record = _RunRecord(False, 1, None, None, [])
    root_lp = lp_relax(milp, None)
    if node_limit < 1:
        raise ValueError("node limit must be positive")
    if not root_lp.is_optimal:
        record.completed = True
        return record
    if root_lp.is_integral():
        record.completed = True
        record.incumbent_value = root_lp.objective
        record.incumbent_point = root_lp.point
        return record
    root = BnbNode(0, 0, (), root_lp)
    next_id = 1
    frontier: list[tuple[Fraction, int, int, BnbNode]] = []
    heapq.heappush(frontier, (-root_lp.objective, -root.depth, root.node_id, root))
    while frontier:
        _, _, _, node = heapq.heappop(frontier)
        if (
            record.incumbent_value is not None
            and node.relaxation.objective <= record.incumbent_value
        ):
            continue
        fix = dict(node.fixings)
        candidates = []
        for i in range(milp.n):
            if i in fix:
                continue
            low, high = scores(node, i, milp)
            candidates.append((i, AffineScore(intercept=high, slope=low - high)))
        chosen = tracker.argmax(candidates)
        record.decisions.append((node.node_id, chosen))
        for value in (0, 1):
            if record.tree_size + 1 > node_limit:
                return record
            record.tree_size += 1
            child_fixings = tuple(sorted({**fix, chosen: value}.items()))
            child_lp = lp_relax(milp, child_fixings)
            child = BnbNode(next_id, node.depth + 1, child_fixings, child_lp)
            next_id += 1
            if not child_lp.is_optimal:
                continue
            if child_lp.is_integral():
                if (
                    record.incumbent_value is None
                    or child_lp.objective > record.incumbent_value
                ):
                    record.incumbent_value = child_lp.objective
                    record.incumbent_point = child_lp.point
                continue
            if (
                record.incumbent_value is not None
                and child_lp.objective <= record.incumbent_value
            ):
                continue
            heapq.heappush(
                frontier, (-child_lp.objective, -child.depth, child.node_id, child)
            )
    record.completed = True
    return record


def _run_outcome(milp: Milp, cap: int, tracker: DecisionTracker) -> CappedRunOutcome:
    limit = min(cap, MAX_TREE_SIZE)
    record = _run_capped(milp, limit, tracker)
    if record.completed:
        return CappedRunOutcome.finished(record.tree_size)
    if limit == MAX_TREE_SIZE:
        # Hitting the absolute tree-size bound counts as termination.
        return CappedRunOutcome.finished(MAX_TREE_SIZE)
    return CappedRunOutcome.truncated(cap)


def _check_run_args(rho, cap: int) -> Fraction:
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    if cap < 1:
        raise ValueError("cap must be a positive integer")
    return _to_fraction(rho)


def _standalone_tracker(exact_rho: Fraction) -> DecisionTracker:
    # Runs at the top endpoint behave like the limit from the left; see
    # DecisionTracker for the boundary convention.
    return DecisionTracker(exact_rho, Fraction(2), tie_rightward=exact_rho != 1)


def bnb_run(milp: Milp, rho, cap: int) -> CappedRunOutcome:
    """Capped search: solved with the exact tree size, or cap-exceeded."""
    exact_rho = _check_run_args(rho, cap)
    tracker = _standalone_tracker(exact_rho)
    return _run_outcome(milp, cap, tracker)


def branching_trace(milp: Milp, rho, cap: int) -> tuple[tuple[int, int], ...]:
    """The (node id, branched variable) sequence of a capped run, for
    execution-invariance checks."""
    exact_rho = _check_run_args(rho, cap)
    tracker = _standalone_tracker(exact_rho)
    record = _run_capped(milp, min(cap, MAX_TREE_SIZE), tracker)
    return tuple(record.decisions)


def best_binary_solution(milp: Milp, rho, cap: int = MAX_TREE_SIZE):
    """Incumbent value of a capped run (None when infeasible or cap exceeded)."""
    exact_rho = _check_run_args(rho, cap)
    tracker = _standalone_tracker(exact_rho)
    record = _run_capped(milp, min(cap, MAX_TREE_SIZE), tracker)
    if not record.completed:
        return None
    return record.incumbent_value


def _payloads(instances: Sequence[Any]) -> list[Milp]:
    return [
        item.payload if isinstance(item, InstanceHandle) else item for item in instances
    ]


def bnb_partition(
    instances: Sequence[Any], tau: int, threads: int = 1
) -> list[PartitionCell]:
    """Exact partition of [0, 1] into tree-invariance cells at the given cap.

    Per instance, the unit interval is swept left to right: a capped run at
    the left endpoint of each unresolved interval yields both the capped
    loss and the first point where any branching decision flips.  The
    per-instance partitions are then refined into a common partition with
    solved fractions and capped-loss vectors.
    """
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    milps = _payloads(instances)
    if not milps:
        raise ValueError("need at least one instance")

    def sweep_one(milp: Milp):
        def execute(rho: Fraction, tracker: DecisionTracker):
            outcome = _run_outcome(milp, tau, tracker)
            return (outcome.capped_loss(tau), outcome.solved)

        return sweep_unit_interval(
            execute, degenerate_message="degenerate breakpoint cluster"
        )

    distinct: dict[int, Any] = {}
    order: list[int] = []
    for milp in milps:
        key = id(milp)
        order.append(key)
        if key not in distinct:
            distinct[key] = milp
    keys = list(distinct)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            swept = dict(zip(keys, pool.map(sweep_one, (distinct[k] for k in keys))))
    else:
        swept = {k: sweep_one(distinct[k]) for k in keys}
    refined = refine_cells([swept[k] for k in order])
    return cells_from_refinement(refined)


def bnb_cell_bound(instances: Sequence[Any], tau: int) -> int:
    """Analytic ceiling on the cell count: ``sum_j n_j^(2 (tau+1)) + 1``.

    Saturates well below integer overflow territory; monotone in the
    instance set and the cap by construction.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    total = 1
    for milp in _payloads(instances):
        total += milp.n ** (2 * (tau + 1))
        if total >= _F_BOUND_SATURATION:
            return _F_BOUND_SATURATION
    return total


class BnbProblem(ConfigProblem):
    """Configuration problem over a finite pool of programs.

    The pool acts as the instance distribution: sampling is uniform with
    replacement.  Measured cell counts are cached per (instance set, cap)
    and reused by ``f_bound``; otherwise the analytic ceiling applies.
    """

    domain = "bnb"

    def __init__(self, pool: Sequence[Milp], threads: int = 1) -> None:
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
            InstanceHandle(domain=self.domain, uid=i, payload=m)
            for i, m in enumerate(self.pool)
        ]

    def _key(self, instances: Sequence[Any], tau: int):
        uids = frozenset(
            h.uid if isinstance(h, InstanceHandle) else id(h) for h in instances
        )
        return (uids, tau)

    def run_with_cap(self, rho, instance, tau: int) -> CappedRunOutcome:
        milp = instance.payload if isinstance(instance, InstanceHandle) else instance
        return bnb_run(milp, rho, tau)

    def get_partition(self, instances, tau: int) -> list[PartitionCell]:
        cells = bnb_partition(instances, tau, threads=self.threads)
        self._measured[self._key(instances, tau)] = len(cells)
        return cells

    def f_bound(self, instances, tau: int) -> int:
        measured = self._measured.get(self._key(instances, tau))
        if measured is not None:
            return measured
        return bnb_cell_bound(instances, tau)


def parse_milp(text: str, name: str = "") -> Milp:
    """Parse the plain-text program format.

    Line 1: ``n m``; line 2: ``n`` objective coefficients; then ``m`` lines
    of ``n`` row coefficients, a literal ``<=``, and the right-hand side.
    Values are whitespace-separated decimals, parsed exactly.
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty instance file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError("first line must be 'n m'")
    n, m = int(header[0]), int(header[1])
    if n < 1:
        raise ValueError("need at least one variable")
    if n > MAX_VARIABLES:
        raise ValueError(f"instances with more than {MAX_VARIABLES} variables are rejected")
    if m < 0:
        raise ValueError("row count must be nonnegative")
    if len(lines) != 2 + m:
        raise ValueError(f"expected {2 + m} nonblank lines, found {len(lines)}")
    objective = lines[1].split()
    if len(objective) != n:
        raise ValueError(f"objective line must carry {n} coefficients")
    rows = []
    rhs = []
    for line in lines[2:]:
        tokens = line.split()
        if len(tokens) != n + 2 or tokens[n] != "<=":
            raise ValueError(f"malformed constraint line: {line!r}")
        rows.append(tokens[:n])
        rhs.append(tokens[n + 1])
    return Milp.from_lists(objective, rows, rhs, name=name)


def format_milp(milp: Milp) -> str:
    def fmt(value: Fraction) -> str:
        if value.denominator == 1:
            return str(value.numerator)
        return str(float(value))

    lines = [f"{milp.n} {len(milp.rows)}", " ".join(fmt(c) for c in milp.objective)]
    for row, b in zip(milp.rows, milp.rhs):
        lines.append(" ".join(fmt(v) for v in row) + f" <= {fmt(b)}")
    return "\n".join(lines) + "\n"


def load_milp(path: str | Path) -> Milp:
    path = Path(path)
    return parse_milp(path.read_text(), name=path.name)


def random_milp(rng: np.random.Generator, num_vars: int = 5, num_rows: int = 3) -> Milp:
    """Random knapsack-like program with small integer coefficients.

    The origin is always feasible, right-hand sides sit strictly inside the
    row sums so root relaxations are typically fractional.
    """
    if not 1 <= num_vars <= MAX_VARIABLES:
        raise ValueError("num_vars out of range")
    objective = rng.integers(1, 10, size=num_vars)
    rows = []
    rhs = []
    for _ in range(num_rows):
        row = rng.integers(0, 6, size=num_vars)
        while not row.any():
            row = rng.integers(0, 6, size=num_vars)
        fraction_kept = rng.uniform(0.35, 0.65)
        bound = max(1, int(round(float(row.sum()) * fraction_kept)))
        rows.append(row)
        rhs.append(bound)
    return Milp.from_lists(objective, rows, rhs)
