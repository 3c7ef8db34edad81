"""An exactly solvable configuration family with closed-form loss laws.

The parameter space splits into three regions with known laws: a middle
band where the loss is a small constant with probability one, and two outer
regions where the loss is that constant or a much larger value with equal
probability, each driven by an independent coin frozen into the instance at
sampling time.  The region count is 3 for every instance set and cap, all
quantiles and capped means are available in closed form, and the optimal
capped expectation is the middle band's constant.  This family is the
quantitative substrate of the acceptance suite: the expensive combinatorial
domains are exercised for exactness, this one for end-to-end guarantees.

The default tail losses 16 and 256 stand in for tree sizes that grow
exponentially with instance size in the motivating worst-case construction;
they are plain integer knobs here because only the law matters to the
learner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .core import (
    CappedRunOutcome,
    ConfigProblem,
    InstanceHandle,
    ParamCell,
    ParamSpace,
    PartitionCell,
    law_capped_mean,
    tail_quantile_exact,
)

__all__ = [
    "SyntheticFamily",
    "SyntheticInstance",
    "SyntheticSample",
    "SyntheticProblem",
    "SyntheticOptSummary",
    "REGIONS",
    "synthetic_sample",
    "synthetic_run_with_cap",
    "synthetic_partition",
    "synthetic_exact_opt",
]

REGIONS = ("low", "mid", "high")


@dataclass(frozen=True)
class SyntheticFamily:
    """Family parameters: breakpoints and the three loss magnitudes.

    The left region is ``rho <= a``, the middle is the open band ``(a, b)``,
    and the right region is ``rho >= b``; both breakpoints must sit strictly
    between 1/3 and 1/2.
    """

    a: float = 0.35
    b: float = 0.45
    loss_mid: int = 8
    loss_low: int = 16
    loss_high: int = 256

    def __post_init__(self) -> None:
        if not 1.0 / 3.0 < self.a < self.b < 0.5:
            raise ValueError("breakpoints must satisfy 1/3 < a < b < 1/2")
        if not 0 < self.loss_mid < self.loss_low < self.loss_high:
            raise ValueError("losses must satisfy 0 < mid < low < high")

    def region(self, rho: float) -> str:
        if rho <= self.a:
            return "low"
        if rho < self.b:
            return "mid"
        return "high"

    def loss_law(self, region: str) -> tuple[tuple[int, float], ...]:
        """Exact loss law of any parameter in the region."""
        if region == "low":
            return ((self.loss_mid, 0.5), (self.loss_low, 0.5))
        if region == "mid":
            return ((self.loss_mid, 1.0),)
        if region == "high":
            return ((self.loss_mid, 0.5), (self.loss_high, 0.5))
        raise ValueError(f"unknown region {region!r}")

    def tail_quantile(self, rho: float, delta: float) -> int:
        return tail_quantile_exact(self.loss_law(self.region(rho)), delta)

    def capped_mean(self, rho: float, cap: int) -> float:
        return law_capped_mean(self.loss_law(self.region(rho)), cap)


@dataclass(frozen=True)
class SyntheticInstance:
    """Coins frozen at sampling time; True means the heavy-tail outcome."""

    coin_low: bool
    coin_high: bool


def synthetic_sample(family: SyntheticFamily, rng: np.random.Generator) -> SyntheticInstance:
    """Draw one instance: each coin lands heavy independently with probability 1/2."""
    draws = rng.random(2)
    return SyntheticInstance(coin_low=bool(draws[0] < 0.5), coin_high=bool(draws[1] < 0.5))


def _instance_loss(family: SyntheticFamily, rho: float, instance: SyntheticInstance) -> int:
    region = family.region(rho)
    if region == "mid":
        return family.loss_mid
    if region == "low":
        return family.loss_low if instance.coin_low else family.loss_mid
    return family.loss_high if instance.coin_high else family.loss_mid


def synthetic_run_with_cap(
    family: SyntheticFamily, rho: float, instance: SyntheticInstance, tau: int
) -> CappedRunOutcome:
    """Closed-form capped run: solved exactly when the instance loss fits the cap."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    loss = _instance_loss(family, rho, instance)
    if loss <= tau:
        return CappedRunOutcome.finished(loss)
    return CappedRunOutcome.truncated(tau)


class SyntheticSample(Sequence[InstanceHandle]):
    """Array-backed batch of instances; indexing materializes handles lazily."""

    __slots__ = ("uids", "coin_low", "coin_high")

    def __init__(self, uids: np.ndarray, coin_low: np.ndarray, coin_high: np.ndarray) -> None:
        self.uids = np.asarray(uids, dtype=np.int64)
        self.coin_low = np.asarray(coin_low, dtype=np.bool_)
        self.coin_high = np.asarray(coin_high, dtype=np.bool_)

    def __len__(self) -> int:
        return int(self.uids.shape[0])

    def __getitem__(self, index: int) -> InstanceHandle:
        payload = SyntheticInstance(bool(self.coin_low[index]), bool(self.coin_high[index]))
        return InstanceHandle(domain="synthetic", uid=int(self.uids[index]), payload=payload)


def _coin_arrays(instances: Sequence[Any]) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(instances, SyntheticSample):
        return instances.coin_low, instances.coin_high
    low = np.empty(len(instances), dtype=np.bool_)
    high = np.empty(len(instances), dtype=np.bool_)
    for i, item in enumerate(instances):
        payload = item.payload if isinstance(item, InstanceHandle) else item
        low[i] = payload.coin_low
        high[i] = payload.coin_high
    return low, high


def synthetic_partition(
    family: SyntheticFamily, instances: Sequence[Any], tau: int
) -> list[PartitionCell]:
    """The exact three-region partition for any instance set and cap.

    Cells are half-open with breakpoints owned rightward, so the left cell
    runs up to the smallest float above ``a``: membership of every
    representable parameter then matches the closed-left / open-middle /
    closed-right region law used by ``synthetic_run_with_cap``.
    """
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    coin_low, coin_high = _coin_arrays(instances)
    count = coin_low.shape[0]
    if count == 0:
        raise ValueError("need at least one instance")
    just_above_a = math.nextafter(family.a, 1.0)
    raw_losses = {
        "low": np.where(coin_low, family.loss_low, family.loss_mid).astype(np.int64),
        "mid": np.full(count, family.loss_mid, dtype=np.int64),
        "high": np.where(coin_high, family.loss_high, family.loss_mid).astype(np.int64),
    }
    cells = []
    bounds = {
        "low": (0.0, just_above_a, False),
        "mid": (just_above_a, family.b, False),
        "high": (family.b, 1.0, True),
    }
    for label in REGIONS:
        lo, hi, top = bounds[label]
        raw = raw_losses[label]
        capped = np.minimum(raw, tau)
        cells.append(
            PartitionCell(
                cell=ParamCell(intervals=((lo, hi),), label=label, top_closed=top),
                z=float((raw <= tau).mean()),
                capped_losses=capped,
            )
        )
    return cells


@dataclass(frozen=True)
class SyntheticOptSummary:
    """Closed-form benchmark quantities at a given tail level."""

    opt_quarter: float
    t_delta_by_region: dict[str, int]
    capped_mean_by_region: dict[str, float]


def synthetic_exact_opt(family: SyntheticFamily, delta: float) -> SyntheticOptSummary:
    """Exact optimum of the quarter-tail capped expectation over the space.

    Computes, per region, the quarter-tail quantile and the expectation of
    the loss capped there; the optimum is their minimum, attained on the
    middle band where the loss is constant.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    tails = {}
    means = {}
    for region in REGIONS:
        law = family.loss_law(region)
        tails[region] = tail_quantile_exact(law, delta / 4.0)
        means[region] = law_capped_mean(law, tails[region])
    return SyntheticOptSummary(
        opt_quarter=min(means.values()),
        t_delta_by_region=tails,
        capped_mean_by_region=means,
    )


class SyntheticProblem(ConfigProblem):
    """Configuration-problem adapter around a synthetic family."""

    domain = "synthetic"

    def __init__(self, family: SyntheticFamily | None = None) -> None:
        self.family = family or SyntheticFamily()
        self.space = ParamSpace()
        self._next_uid = 0

    def _take_uids(self, count: int) -> np.ndarray:
        start = self._next_uid
        self._next_uid += count
        return np.arange(start, start + count, dtype=np.int64)

    def sample(self, rng: np.random.Generator) -> InstanceHandle:
        return self.sample_many(rng, 1)[0]

    def sample_many(self, rng: np.random.Generator, count: int) -> SyntheticSample:
        draws = rng.random((count, 2))
        return SyntheticSample(
            uids=self._take_uids(count),
            coin_low=draws[:, 0] < 0.5,
            coin_high=draws[:, 1] < 0.5,
        )

    def merge_samples(self, first, second) -> SyntheticSample:
        if isinstance(first, SyntheticSample) and isinstance(second, SyntheticSample):
            return SyntheticSample(
                uids=np.concatenate([first.uids, second.uids]),
                coin_low=np.concatenate([first.coin_low, second.coin_low]),
                coin_high=np.concatenate([first.coin_high, second.coin_high]),
            )
        return super().merge_samples(first, second)

    def run_with_cap(self, rho, instance, tau: int) -> CappedRunOutcome:
        payload = instance.payload if isinstance(instance, InstanceHandle) else instance
        return synthetic_run_with_cap(self.family, float(rho), payload, tau)

    def get_partition(self, instances, tau: int) -> list[PartitionCell]:
        return synthetic_partition(self.family, instances, tau)

    def f_bound(self, instances, tau: int) -> int:
        return 3
