import math

import numpy as np
import pytest

from frugal.core import validate_cells_cover
from frugal.synthetic import (
    SyntheticFamily,
    SyntheticInstance,
    SyntheticProblem,
    synthetic_exact_opt,
    synthetic_partition,
    synthetic_run_with_cap,
    synthetic_sample,
)
from support import check_partition_contract


@pytest.fixture
def family():
    return SyntheticFamily()


class TestFamily:
    def test_default_validation(self, family):
        assert family.a == 0.35 and family.b == 0.45

    def test_bad_breakpoints_rejected(self):
        with pytest.raises(ValueError):
            SyntheticFamily(a=0.3, b=0.45)
        with pytest.raises(ValueError):
            SyntheticFamily(a=0.4, b=0.55)
        with pytest.raises(ValueError):
            SyntheticFamily(loss_mid=8, loss_low=8, loss_high=256)

    def test_region_boundaries(self, family):
        assert family.region(family.a) == "low"  # closed left region
        assert family.region(math.nextafter(family.a, 1.0)) == "mid"
        assert family.region(family.b) == "high"  # closed right region
        assert family.region(math.nextafter(family.b, 0.0)) == "mid"


class TestRunWithCap:
    def test_mid_region_constant(self, family):
        inst = SyntheticInstance(coin_low=True, coin_high=True)
        out = synthetic_run_with_cap(family, 0.4, inst, 8)
        assert out.solved and out.budget_used == 8

    def test_low_region_heavy_coin(self, family):
        inst = SyntheticInstance(coin_low=True, coin_high=False)
        out = synthetic_run_with_cap(family, family.a / 2, inst, 8)
        assert not out.solved and out.budget_used == 8

    def test_boundary_belongs_left(self, family):
        inst = SyntheticInstance(coin_low=True, coin_high=False)
        out = synthetic_run_with_cap(family, family.a, inst, 16)
        assert out.solved and out.budget_used == family.loss_low

    def test_piecewise_constant_in_rho(self, family):
        # Sweep a fine grid: the loss takes exactly the three region values.
        inst = SyntheticInstance(coin_low=True, coin_high=True)
        tau = 1024
        losses = {}
        for rho in np.linspace(0.0, 1.0, 1001):
            out = synthetic_run_with_cap(family, float(rho), inst, tau)
            losses.setdefault(family.region(float(rho)), set()).add(out.budget_used)
        assert losses["low"] == {family.loss_low}
        assert losses["mid"] == {family.loss_mid}
        assert losses["high"] == {family.loss_high}


class TestSampling:
    def test_coin_balance(self, family):
        problem = SyntheticProblem(family)
        rng = np.random.default_rng(5)
        batch = problem.sample_many(rng, 10**5)
        assert 0.49 <= batch.coin_low.mean() <= 0.51
        assert 0.49 <= batch.coin_high.mean() <= 0.51

    def test_instances_frozen(self, family):
        rng = np.random.default_rng(1)
        inst = synthetic_sample(family, rng)
        first = synthetic_run_with_cap(family, 0.2, inst, 16)
        second = synthetic_run_with_cap(family, 0.2, inst, 16)
        assert first == second

    def test_distinct_seeds_differ(self, family):
        problem = SyntheticProblem(family)
        a = problem.sample_many(np.random.default_rng(1), 64)
        b = problem.sample_many(np.random.default_rng(2), 64)
        assert not np.array_equal(a.coin_low, b.coin_low)

    def test_handles_round_trip(self, family):
        problem = SyntheticProblem(family)
        batch = problem.sample_many(np.random.default_rng(3), 8)
        handles = [batch[i] for i in range(len(batch))]
        assert [h.payload.coin_low for h in handles] == list(batch.coin_low)


class TestPartition:
    def test_always_three_cells(self, family):
        problem = SyntheticProblem(family)
        for tau in (1, 8, 64):
            batch = problem.sample_many(np.random.default_rng(tau), 50)
            cells = problem.get_partition(batch, tau)
            assert len(cells) == 3
            validate_cells_cover(cells, problem.space)
            assert problem.f_bound(batch, tau) == 3

    def test_mid_cell_at_cap_eight(self, family):
        problem = SyntheticProblem(family)
        batch = problem.sample_many(np.random.default_rng(2), 200)
        cells = synthetic_partition(family, batch, 8)
        mid = next(c for c in cells if c.cell.label == "mid")
        assert mid.z == 1.0
        assert set(mid.capped_losses) == {8}

    def test_left_cell_solved_fraction(self, family):
        problem = SyntheticProblem(family)
        batch = problem.sample_many(np.random.default_rng(9), 500)
        cells = synthetic_partition(family, batch, 8)
        low = next(c for c in cells if c.cell.label == "low")
        assert low.z == float((~batch.coin_low).mean())

    def test_partition_contract(self, family):
        problem = SyntheticProblem(family)
        rng = np.random.default_rng(4)
        batch = problem.sample_many(rng, 40)
        for tau in (8, 16, 256):
            cells = problem.get_partition(batch, tau)
            check_partition_contract(problem, list(batch), cells, tau, rng)

    def test_budget_monotonicity(self, family):
        problem = SyntheticProblem(family)
        rng = np.random.default_rng(12)
        batch = problem.sample_many(rng, 20)
        for handle in batch:
            for tau in (7, 8, 15, 16, 255, 256):
                now = problem.run_with_cap(0.2, handle, tau)
                nxt = problem.run_with_cap(0.2, handle, tau + 1)
                if now.solved:
                    assert nxt.solved and nxt.budget_used == now.budget_used


class TestExactOpt:
    def test_defaults(self, family):
        summary = synthetic_exact_opt(family, 0.25)
        assert summary.opt_quarter == 8.0
        assert summary.t_delta_by_region == {"low": 16, "mid": 8, "high": 256}
        assert summary.capped_mean_by_region["low"] == pytest.approx(12.0)
        assert summary.capped_mean_by_region["high"] == pytest.approx(132.0)

    def test_opt_constant_in_delta(self, family):
        for delta in (0.05, 0.25, 0.9):
            assert synthetic_exact_opt(family, delta).opt_quarter == 8.0

    def test_empirical_capped_means_match_laws(self, family):
        problem = SyntheticProblem(family)
        rng = np.random.default_rng(21)
        batch = problem.sample_many(rng, 10**5)
        for rho, cap in ((0.2, 16), (0.4, 8), (0.6, 256)):
            outcomes = synthetic_partition(family, batch, cap)
            cell = next(c for c in outcomes if c.cell.contains(rho))
            expected = family.capped_mean(rho, cap)
            # Bernoulli mixture: spread (tail - mid) / 2 per draw.
            spread = max(family.loss_low, family.loss_high) / 2
            tolerance = 3 * spread / math.sqrt(len(batch))
            assert abs(cell.capped_losses.mean() - expected) <= tolerance
