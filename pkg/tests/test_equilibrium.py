import numpy as np
import pytest

from bewley_lottery.distribution import Distribution
from bewley_lottery.equilibrium import (BracketError, _bisect, compare_steady_states,
                                        compute_aggregates, exit_rate, implied_ratio, leverage,
                                        market_residuals, own_funds, solve_benchmark)
from bewley_lottery.household import NonConvergenceError, Prices, StateGrid, solve_household
from bewley_lottery.model import (AssetGrid, MarkovChain, ModelConfig, Numerics, factor_prices,
                                  income_tax)


class FakeEvaluator:
    """Stands in for the household-plus-distribution solve with a known map."""

    def __init__(self, implied):
        self.implied = implied
        self.trace = []

    def __call__(self, x):
        self.trace.append({"K_over_L": x})
        return self.implied(x), None, None, None, None, None


class TestBisection:
    def test_finds_the_fixed_point(self):
        cfg = ModelConfig()
        ev = FakeEvaluator(lambda x: 6.0 + 0.3 * (6.0 - x))
        x, gap, *_ = _bisect(cfg, evaluator=ev)
        assert x == pytest.approx(6.0, rel=1e-4) and gap < 1e-4

    def test_widens_the_bracket(self):
        ev = FakeEvaluator(lambda x: 30.0 - x)
        x, *_ = _bisect(ModelConfig(), bracket=(1.0, 2.0), evaluator=ev)
        assert x == pytest.approx(15.0, rel=1e-4)

    def test_reports_both_ends_when_no_sign_change(self):
        ev = FakeEvaluator(lambda x: x + 1.0)
        with pytest.raises(BracketError, match="low end.*high end"):
            _bisect(ModelConfig(), evaluator=ev)

    def test_iteration_cap(self):
        cfg = ModelConfig(numerics=Numerics(eq_max_iter=2, eq_tol=1e-12))
        with pytest.raises(NonConvergenceError):
            _bisect(cfg, evaluator=FakeEvaluator(lambda x: 6.123 + 0.3 * (6.123 - x)))


class TestAggregates:
    def test_single_state_worker_economy(self):
        cfg = ModelConfig(assets=AssetGrid(a_min=0.01, a_max=5.0, n=30),
                          eta_chain=MarkovChain((1.3,), ((1.0,),)),
                          theta_chain=MarkovChain((0.0,), ((1.0,),)),
                          numerics=Numerics(n_k=5, n_n=5))
        prices = Prices(0.03, 1.2)
        _, pol, _ = solve_household(prices, cfg)
        grid = StateGrid.from_config(cfg)
        mass = np.zeros((2,) + grid.shape)
        mass[0, :, 0, 0, 0] = np.linspace(1, 2, 30) / np.linspace(1, 2, 30).sum()
        agg = compute_aggregates(Distribution(mass), pol, prices, cfg)
        assert agg.K_corp == pytest.approx((mass[0, :, 0, 0, 0] * grid.assets).sum())
        assert agg.L_corp == pytest.approx(1.3)
        assert agg.K_entre == 0 and agg.entrepreneur_mass == 0

    def test_implied_ratio_edges(self, benchmark_eq):
        from dataclasses import replace

        agg = benchmark_eq.aggregates
        assert implied_ratio(replace(agg, L_corp=0.0)) == np.inf
        assert implied_ratio(replace(agg, K_corp=-1.0)) == 0.0


class TestBenchmarkEquilibrium:
    def test_prices_consistent_with_ratio(self, benchmark_eq):
        r, w = factor_prices(benchmark_eq.K_over_L, benchmark_eq.config.technology)
        assert (r, w) == (benchmark_eq.prices.r, benchmark_eq.prices.w)

    def test_markets_clear(self, benchmark_eq):
        agg, tol = benchmark_eq.aggregates, benchmark_eq.config.numerics.eq_tol
        assert benchmark_eq.gap < tol
        cap, lab = market_residuals(agg, benchmark_eq.K_over_L)
        assert abs(cap) < tol * agg.total_assets
        assert abs(lab) < tol * agg.total_labor_endowment
        assert agg.K_corp + agg.K_entre == pytest.approx(agg.total_assets, rel=1e-14)

    def test_government_budget(self, benchmark_eq):
        eq = benchmark_eq
        m, pol, tax = eq.distribution.mass, eq.policies, eq.config.tax
        revenue = tax.tau_c * (m * pol.consumption).sum() + (m * income_tax(pol.income, tax)).sum()
        assert abs(eq.aggregates.G - revenue) < 1e-8 * eq.aggregates.G
        agg = eq.aggregates
        assert agg.G == pytest.approx(agg.consumption_tax + agg.income_tax, rel=1e-14)

    def test_goods_market(self, benchmark_eq):
        # output = consumption + investment + government with stationary capital
        agg = benchmark_eq.aggregates
        delta = benchmark_eq.config.technology.delta
        spending = agg.C + delta * agg.total_assets + agg.G
        assert spending == pytest.approx(agg.Y_total, rel=0.05)

    def test_moment_ranges(self, benchmark_eq):
        m = benchmark_eq.moments
        for label, value, is_share in m.summary():
            if is_share:
                assert 0 <= value <= 1, label
        pop = sum(row["population_share"] for row in m.theta_table)
        assert pop == pytest.approx(m.entrepreneur_fraction, rel=1e-12)
        assert sum(row["entrepreneur_share"] for row in m.theta_table) == pytest.approx(1.0)

    def test_theta_table_pattern(self, benchmark_eq):
        rows = benchmark_eq.moments.theta_table
        assert rows[0]["population_share"] == 0
        share = [r["entrepreneur_share"] for r in rows]
        invest = [r["mean_investment"] for r in rows[1:]]
        assert all(b > a for a, b in zip(share, share[1:]))
        assert all(b > a for a, b in zip(invest, invest[1:]))
        assert rows[-1]["mean_leverage"] == pytest.approx(0.5, abs=1e-9)

    def test_exit_rate_by_direct_count(self, benchmark_eq):
        mE = benchmark_eq.distribution.mass[1]
        leaving = (mE * (benchmark_eq.policies.occ_next[1] == 0)).sum()
        assert benchmark_eq.moments.exit_rate == pytest.approx(leaving / mE.sum(), rel=1e-12)

    def test_leverage_definition(self, benchmark_eq):
        cfg = benchmark_eq.config
        grid = StateGrid.from_config(cfg)
        lev = leverage(benchmark_eq.policies, grid, cfg)
        x = own_funds(grid, cfg)
        k = benchmark_eq.policies.capital
        np.testing.assert_allclose(lev, np.maximum(k - x, 0) / x)
        assert lev.max() <= cfg.credit.d + 1e-12

    def test_self_comparison(self, benchmark_eq):
        for row in compare_steady_states(benchmark_eq, benchmark_eq):
            assert row["pct_change"] == 0.0

    def test_warm_start_reuses_solution(self, benchmark_eq):
        eq = benchmark_eq
        _, _, it = solve_household(eq.prices, eq.config, V_init=eq.values)
        assert it <= 2


class TestLotteryEquilibrium:
    def test_revenue_target(self, lottery_eq):
        target = lottery_eq.config.revenue_share * lottery_eq.aggregates.Y_total
        assert abs(lottery_eq.tau - target) / lottery_eq.tau < 1e-3

    def test_lottery_balanced(self, lottery_eq):
        spec = lottery_eq.config.lottery
        assert abs(spec.expected_payout() - spec.tau) < 1e-10
        agg = lottery_eq.aggregates
        assert agg.lottery_payout == pytest.approx(agg.lottery_revenue, rel=1e-5)
        assert spec.prizes[2] / spec.prizes[1] == pytest.approx(3.0)

    def test_outer_iterates_recorded(self, lottery_eq):
        trace = lottery_eq.tau_trace
        assert trace and trace[-1]["residual"] < 1e-3
        assert all(t["tau"] > 0 for t in trace)

    def test_deltas_within_five_percent(self, lottery_eq, benchmark_eq):
        for row in compare_steady_states(lottery_eq, benchmark_eq):
            assert abs(row["pct_change"]) <= 5.0, row

    def test_output_and_capital_rise(self, lottery_eq, benchmark_eq):
        deltas = {r["moment"]: r["pct_change"] for r in compare_steady_states(lottery_eq, benchmark_eq)}
        assert deltas["aggregate output"] > 0
        assert deltas["aggregate capital"] > 0

    def test_leverage_falls_with_prize(self, lottery_eq):
        lev = [r["mean_leverage"] for r in lottery_eq.moments.leverage_by_prize]
        assert all(b <= a + 1e-12 for a, b in zip(lev, lev[1:]))

    def test_exit_rate_matches_contemporaneous_formula_shape(self, lottery_eq):
        cfg = lottery_eq.config
        assert 0 < exit_rate(lottery_eq.distribution, lottery_eq.policies, cfg) < 1


@pytest.mark.slow
def test_full_resolution_benchmark():
    """Full 1000-point grids: K/Y within 5% of 2.60 (hours of CPU time)."""
    eq = solve_benchmark(ModelConfig())
    assert abs(eq.moments.capital_output_ratio / 2.60 - 1) <= 0.05
    assert abs(eq.moments.entrepreneur_fraction - 0.1374) <= 0.03
    assert abs(eq.moments.exit_rate - 0.2130) <= 0.05
