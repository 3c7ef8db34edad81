"""Exact interval tracking for executions driven by affine score comparisons.

Both shipped combinatorial domains make a sequence of discrete decisions,
each an argmax (or argmin) over scores that are affine functions of the
single parameter ``rho``.  Running the algorithm once at the left endpoint of
an unresolved interval while recording, for every decision, the first point
to the right where the winning candidate changes, yields the maximal
right-open interval on which the whole execution is invariant.  Sweeping
left to right therefore produces the exact execution-invariance partition of
the unit interval.

All arithmetic is over ``fractions.Fraction``, so breakpoints are exact and
cells never drift against a grid sweep.

Selection ties break toward the candidate that stays the winner immediately
to the right of the tie point (largest slope for argmax, smallest for
argmin), then toward the earliest candidate in the supplied order.  This
makes executions right-continuous in ``rho``, which is what lets every cell
be half-open ``[lo, hi)`` with breakpoints owned by the cell on their right.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence, TypeVar

import numpy as np

from .core import ParamCell, PartitionCell

__all__ = [
    "AffineScore",
    "DecisionTracker",
    "DegenerateCellError",
    "sweep_unit_interval",
    "refine_cells",
    "cells_from_refinement",
]

T = TypeVar("T")
K = TypeVar("K")

MIN_CELL_WIDTH = Fraction(1, 10**12)


class DegenerateCellError(RuntimeError):
    """Raised when breakpoints cluster below the representable cell width."""


@dataclass(frozen=True)
class AffineScore:
    """A score line ``value(rho) = intercept + slope * rho``."""

    intercept: Fraction
    slope: Fraction

    def value_at(self, rho: Fraction) -> Fraction:
        return self.intercept + self.slope * rho


class DecisionTracker:
    """Selects decision winners at a point and tracks their invariance bound.

    ``bound`` starts at the sweep's right end and shrinks to the first point
    strictly right of ``point`` where any selection made so far would change.

    ``tie_rightward`` controls which side of an exact score tie the winner
    comes from.  Interior points break toward the candidate that wins just
    right of the point (cells are right-open, so a breakpoint behaves like
    the cell it opens); the single exception is an evaluation exactly at the
    space's top endpoint, which belongs to the topmost cell and must behave
    like the limit from the left.
    """

    __slots__ = ("point", "bound", "tie_rightward")

    def __init__(self, point: Fraction, upper: Fraction, tie_rightward: bool = True) -> None:
        self.point = point
        self.bound = upper
        self.tie_rightward = tie_rightward

    def argmax(self, candidates: Sequence[tuple[K, AffineScore]]) -> K:
        return self._select(candidates, 1)

    def argmin(self, candidates: Sequence[tuple[K, AffineScore]]) -> K:
        return self._select(candidates, -1)

    def _select(self, candidates: Sequence[tuple[K, AffineScore]], sense: int) -> K:
        if not candidates:
            raise ValueError("no candidates to select from")
        rho = self.point
        side = 1 if self.tie_rightward else -1
        best_key, best_score = candidates[0]
        best_value = best_score.value_at(rho)
        for key, score in candidates[1:]:
            value = score.value_at(rho)
            if sense * (value - best_value) > 0 or (
                value == best_value
                and side * sense * (score.slope - best_score.slope) > 0
            ):
                best_key, best_score, best_value = key, score, value
        for key, score in candidates:
            if key is best_key:
                continue
            value = score.value_at(rho)
            gap = sense * (best_value - value)
            closing = sense * (score.slope - best_score.slope)
            # gap == 0 means a tie the winner keeps forever (equal or
            # diverging line); only a strictly trailing rival that closes the
            # gap produces a crossing.
            if gap > 0 and closing > 0:
                crossing = rho + gap / closing
                if crossing < self.bound:
                    self.bound = crossing
        return best_key


def sweep_unit_interval(
    execute: Callable[[Fraction, DecisionTracker], T],
    *,
    degenerate_message: str = "degenerate breakpoint cluster",
) -> list[tuple[Fraction, Fraction, T]]:
    """Partition [0, 1] into maximal right-open execution-invariance cells.

    ``execute`` runs the full algorithm at the given point, routing every
    score comparison through the tracker, and returns the cell payload.
    """
    cells: list[tuple[Fraction, Fraction, T]] = []
    cursor = Fraction(0)
    top = Fraction(1)
    while cursor < top:
        tracker = DecisionTracker(cursor, top)
        payload = execute(cursor, tracker)
        right = min(tracker.bound, top)
        if right - cursor < MIN_CELL_WIDTH:
            raise DegenerateCellError(degenerate_message)
        cells.append((cursor, right, payload))
        cursor = right
    return cells


def refine_cells(
    per_instance: Sequence[Sequence[tuple[Fraction, Fraction, T]]],
) -> list[tuple[Fraction, Fraction, list[T]]]:
    """Common refinement of per-instance right-open partitions of [0, 1]."""
    if not per_instance:
        raise ValueError("need at least one instance partition")
    breakpoints = sorted({lo for cells in per_instance for lo, _, _ in cells} | {Fraction(1)})
    cursors = [0] * len(per_instance)
    refined: list[tuple[Fraction, Fraction, list[T]]] = []
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        payloads = []
        for idx, cells in enumerate(per_instance):
            while cells[cursors[idx]][1] <= lo:
                cursors[idx] += 1
            cell_lo, cell_hi, payload = cells[cursors[idx]]
            assert cell_lo <= lo and hi <= cell_hi
            payloads.append(payload)
        refined.append((lo, hi, payloads))
    return refined


def cells_from_refinement(
    refined: Sequence[tuple[Fraction, Fraction, list[tuple[int, bool]]]],
) -> list[PartitionCell]:
    """Build partition cells from refined (capped_loss, solved) payloads."""
    out = []
    for index, (lo, hi, payloads) in enumerate(refined):
        losses = np.array([loss for loss, _ in payloads], dtype=np.int64)
        solved = np.array([ok for _, ok in payloads], dtype=np.bool_)
        cell = ParamCell(
            intervals=((lo, hi),), label=index, top_closed=(hi == Fraction(1))
        )
        out.append(PartitionCell(cell=cell, z=float(solved.mean()), capped_losses=losses))
    return out
