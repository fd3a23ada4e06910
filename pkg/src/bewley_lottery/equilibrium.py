"""
Stationary general equilibrium: market clearing by bisection on the
corporate capital-labour ratio, the lottery price fixed point, aggregates
and the moment tables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distribution import (Distribution, invariant_distribution,
                           top_mass, transition_operator)
from .household import (NonConvergenceError, PolicySet, Prices, StateGrid, ValueTables,
                        solve_household)
from .model import (ModelConfig, ModelError, corporate_output, entrepreneur_output,
                    factor_prices, income_tax, ratio_from_rate)

log = logging.getLogger(__name__)


class BracketError(RuntimeError):
    """No sign change of excess capital supply in the search interval."""


@dataclass
class Aggregates:
    K_corp: float
    L_corp: float
    K_entre: float
    L_entre: float
    hired_labor: float
    total_assets: float
    total_labor_endowment: float
    Y_corp: float
    Y_entre: float
    Y_total: float
    C: float
    G: float
    consumption_tax: float
    income_tax: float
    lottery_revenue: float
    lottery_payout: float
    entrepreneur_mass: float
    entrepreneur_income: float
    total_income: float
    entrepreneur_assets: float

    @property
    def productive_capital(self):
        return self.K_corp + self.K_entre

    def as_dict(self):
        out = dict(self.__dict__)
        out["productive_capital"] = self.productive_capital
        return out


@dataclass
class MomentsReport:
    capital_output_ratio: float
    govt_expenditure_share: float
    income_tax_share: float
    entrepreneur_fraction: float
    entrepreneur_income_share: float
    entrepreneur_asset_share: float
    entrepreneur_investment_share: float
    exit_rate: float
    output: float
    capital: float  # total household assets, the numerator of K/Y
    productive_capital: float
    consumption: float
    theta_table: list = field(default_factory=list)
    leverage_by_prize: list = field(default_factory=list)

    SUMMARY = (
        ("aggregate output", "output", False),
        ("aggregate capital", "capital", False),
        ("aggregate productive capital", "productive_capital", False),
        ("aggregate consumption", "consumption", False),
        ("capital-output ratio", "capital_output_ratio", False),
        ("government expenditure/GDP", "govt_expenditure_share", True),
        ("income tax/total tax revenue", "income_tax_share", True),
        ("fraction of entrepreneurs", "entrepreneur_fraction", True),
        ("share of entrepreneur's income", "entrepreneur_income_share", True),
        ("share of entrepreneur's asset", "entrepreneur_asset_share", True),
        ("share of entrepreneur's investment", "entrepreneur_investment_share", True),
        ("exit rate", "exit_rate", True),
    )

    def summary(self):
        return [(label, getattr(self, key), pct) for label, key, pct in self.SUMMARY]


@dataclass
class Equilibrium:
    config: ModelConfig
    prices: Prices
    K_over_L: float
    values: ValueTables
    policies: PolicySet
    distribution: Distribution
    aggregates: Aggregates
    moments: MomentsReport | None = None
    gap: float = np.nan  # relative implied-vs-guessed K/L gap
    trace: list = field(default_factory=list)
    tau_trace: list = field(default_factory=list)

    @property
    def tau(self):
        return self.config.tau


# --------------------------------------------------------------------------
# aggregation


def _occupation_weights(phi):
    return phi.mass[0], phi.mass[1]


def compute_aggregates(phi, policies, prices, config, grid=None, K_over_L=None):
    """Integrate policies against the distribution.

    Corporate capital is household assets net of capital operated by
    entrepreneurs; corporate labour is worker efficiency units net of labour
    hired by entrepreneurs. With ``K_over_L`` given, corporate output is
    evaluated at the demanded input mix, otherwise at the supplied one.
    """
    grid = grid or StateGrid.from_config(config)
    mW, mE = _occupation_weights(phi)
    m = phi.mass
    tech = config.technology
    a = grid.assets[:, None, None, None]
    eta = grid.eta[None, None, :, None]
    theta = grid.theta[None, :, None, None]
    k, n = policies.capital, policies.labor
    hired = np.maximum(n - eta, 0.0)

    total_assets = float((m.sum(axis=0) * a).sum())
    K_entre = float((mE * k).sum())
    L_entre = float((mE * n).sum())
    hired_labor = float((mE * hired).sum())
    labor_endow = float((mW * eta).sum())
    K_corp = total_assets - K_entre
    L_corp = labor_endow - hired_labor
    if K_corp < 0 or L_corp <= 0:
        Y_corp = np.nan
    else:
        Y_corp = corporate_output(K_corp, L_corp, tech)
    Y_entre = float((mE * entrepreneur_output(k, n, np.broadcast_to(theta, k.shape), tech)).sum())
    C = float((m * policies.consumption).sum())
    taxes = income_tax(policies.income, config.tax)
    inc_tax = float((m * taxes).sum())
    cons_tax = config.tax.tau_c * C
    psi = grid.prizes[None, None, None, :]
    payout = float((m.sum(axis=0) * np.broadcast_to(psi, mW.shape)).sum())
    return Aggregates(
        K_corp=K_corp, L_corp=L_corp, K_entre=K_entre, L_entre=L_entre,
        hired_labor=hired_labor, total_assets=total_assets,
        total_labor_endowment=labor_endow, Y_corp=float(Y_corp), Y_entre=Y_entre,
        Y_total=float(Y_corp) + Y_entre, C=C, G=cons_tax + inc_tax,
        consumption_tax=cons_tax, income_tax=inc_tax,
        lottery_revenue=config.tau * float(m.sum()), lottery_payout=payout,
        entrepreneur_mass=float(mE.sum()),
        entrepreneur_income=float((mE * policies.income[1]).sum()),
        total_income=float((m * policies.income).sum()),
        entrepreneur_assets=float((mE * a).sum()),
    )


def implied_ratio(agg):
    """Corporate K/L supplied; infinite when entrepreneurs absorb all labour."""
    if agg.K_corp <= 0:
        return 0.0
    if agg.L_corp <= 0:
        return np.inf
    return agg.K_corp / agg.L_corp


def market_residuals(agg, K_over_L):
    """Capital and labour excess supply at the corporate input mix ``K_over_L``.

    Corporate demand is pinned down by labour supply and the ratio, so the
    capital residual carries the whole imbalance and the labour residual is
    its mirror image in efficiency units.
    """
    K_demand = K_over_L * agg.L_corp
    cap = agg.total_assets - agg.K_entre - K_demand
    lab = agg.total_labor_endowment - agg.hired_labor - agg.K_corp / K_over_L
    return cap, lab


# --------------------------------------------------------------------------
# solvers


class _Evaluator:
    """Solve households and distribution at a guessed ratio, with warm starts."""

    def __init__(self, config):
        self.config = config
        self.grid = StateGrid.from_config(config)
        self.V = None
        self.phi = None
        self.trace = []

    def __call__(self, x):
        cfg = self.config
        r, w = factor_prices(x, cfg.technology)
        prices = Prices(r, w)
        V, pol, vit = solve_household(prices, cfg, V_init=self.V, grid=self.grid)
        phi, dit = invariant_distribution(pol, cfg, phi_init=self.phi, grid=self.grid)
        self.V, self.phi = V, phi
        agg = compute_aggregates(phi, pol, prices, cfg, self.grid)
        implied = implied_ratio(agg)
        self.trace.append({"K_over_L": x, "r": r, "w": w, "implied": implied,
                           "vfi_iterations": vit, "dist_iterations": dit})
        log.info("K/L=%.6f r=%.5f implied=%.6f (vfi %d, dist %d)", x, r, implied, vit, dit)
        return implied, prices, V, pol, phi, agg


def _complete_markets_ratio(config):
    r = 1.0 / config.preferences.beta - 1.0
    return ratio_from_rate(r, config.technology)


def _bisect(config, bracket=None, evaluator=None):
    num = config.numerics
    ev = evaluator or _Evaluator(config)
    x0 = _complete_markets_ratio(config)
    lo, hi = bracket or (0.5 * x0, 2.0 * x0)

    def excess(x):
        res = ev(x)
        return res[0] - x, res

    f_lo, res_lo = excess(lo)
    f_hi, res_hi = excess(hi)
    widen = 0
    while not (f_lo > 0 > f_hi):
        if widen >= 6:
            raise BracketError(
                f"no sign change of implied minus guessed K/L on [{lo:.4f}, {hi:.4f}]: "
                f"excess {f_lo:+.4f} at the low end, {f_hi:+.4f} at the high end")
        if f_lo <= 0:
            lo /= 1.5
            f_lo, res_lo = excess(lo)
        if f_hi >= 0:
            hi *= 1.5
            f_hi, res_hi = excess(hi)
        widen += 1

    best = min(((abs(f_lo) / lo, lo, res_lo), (abs(f_hi) / hi, hi, res_hi)), key=lambda t: t[0])
    for _ in range(num.eq_max_iter):
        mid = 0.5 * (lo + hi)
        f_mid, res_mid = excess(mid)
        gap = abs(f_mid) / mid
        if gap < best[0]:
            best = (gap, mid, res_mid)
        if gap < num.eq_tol:
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
        if (hi - lo) / mid < 1e-12:
            break
    gap, x, (implied, prices, V, pol, phi, agg) = best
    if gap >= num.eq_tol:
        raise NonConvergenceError("capital-labour bisection", gap, len(ev.trace), ev.trace)
    return x, gap, prices, V, pol, phi, agg, ev


def solve_benchmark(config, bracket=None, evaluator=None):
    """Stationary equilibrium by bisection on the corporate capital-labour ratio."""
    x, gap, prices, V, pol, phi, agg, ev = _bisect(config, bracket, evaluator)
    eq = Equilibrium(config=config, prices=prices, K_over_L=x, values=V, policies=pol,
                     distribution=phi, aggregates=agg, gap=gap, trace=list(ev.trace))
    eq.moments = compute_moments(eq)
    if top_mass(phi) > 0.01:
        log.warning("%.2f%% of mass sits at the top of the asset grid", 100 * top_mass(phi))
    return eq


def solve_lottery(config, bracket=None, callback=None):
    """Nested fixed point: inner market clearing, outer ticket price.

    The ticket price is updated by damped iteration towards the revenue
    target; prizes are rescaled at every step so the lottery stays balanced.
    ``callback(eq)`` is called after every outer iteration, which is where a
    caller can write a resumable checkpoint: restarting from a saved
    equilibrium's lottery and K/L bracket picks up at that iterate.
    """
    if config.lottery is None:
        raise ModelError("solve_lottery needs a lottery specification")
    num = config.numerics
    tau = config.lottery.tau
    tau_trace = []
    ev = None
    eq = None
    for it in range(1, num.tau_max_iter + 1):
        cfg = config.with_lottery(config.lottery.rescaled(tau))
        if ev is not None:
            ev.config = cfg
            ev.grid = StateGrid.from_config(cfg)
        else:
            ev = _Evaluator(cfg)
        eq = solve_benchmark(cfg, bracket=bracket, evaluator=ev)
        target = config.revenue_share * eq.aggregates.Y_total
        resid = abs(tau - target) / tau
        tau_trace.append({"tau": tau, "target": target, "residual": resid,
                          "K_over_L": eq.K_over_L})
        log.info("lottery outer %d: tau=%.6f target=%.6f", it, tau, target)
        if callback is not None:
            eq.tau_trace = list(tau_trace)
            callback(eq)
        if resid < num.tau_tol:
            eq.tau_trace = tau_trace
            return eq
        tau = (1 - num.tau_damping) * tau + num.tau_damping * target
        bracket = (eq.K_over_L * 0.97, eq.K_over_L * 1.03)
    raise NonConvergenceError("lottery price iteration", tau_trace[-1]["residual"],
                              num.tau_max_iter, tau_trace)


def solve(config, **kw):
    return solve_lottery(config, **kw) if config.has_lottery else solve_benchmark(config, **kw)


# --------------------------------------------------------------------------
# moments


def exit_rate(phi, policies, config, grid=None):
    """Share of current entrepreneurs who are workers next period."""
    mE = phi.mass[1]
    total = mE.sum()
    if total <= 0:
        return 0.0
    if policies.timing == "predetermined":
        return float((mE * (policies.occ_next[1] == 0)).sum() / total)
    only_e = Distribution(np.stack([np.zeros_like(mE), mE]))
    nxt = transition_operator(only_e, policies, config, grid)
    return float(nxt.mass[0].sum() / total)


def own_funds(grid, config):
    """Net worth available as collateral, ``a - tau + psi``."""
    return (grid.assets[:, None, None, None] - config.tau
            + grid.prizes[None, None, None, :])


def leverage(policies, grid, config):
    """Borrowed capital relative to own funds, ``max(k - x, 0) / x``."""
    x = own_funds(grid, config)
    k = policies.capital
    with np.errstate(divide="ignore", invalid="ignore"):
        lev = np.where(x > 0, np.maximum(k - x, 0.0) / x, 0.0)
    return np.broadcast_to(lev, k.shape)


def compute_moments(eq):
    cfg, phi, pol, agg = eq.config, eq.distribution, eq.policies, eq.aggregates
    grid = StateGrid.from_config(cfg)
    mE = phi.mass[1]
    k = pol.capital
    active = (k > 0) & (mE > 0)
    lev = leverage(pol, grid, cfg)
    Y = agg.Y_total
    fe = agg.entrepreneur_mass

    rows = []
    for t, theta in enumerate(grid.theta):
        m_t = mE[:, t]
        mass = float(m_t.sum())
        act = active[:, t]
        w_act = np.where(act, m_t, 0.0)
        row = {
            "theta": float(theta),
            "population_share": mass,
            "entrepreneur_share": mass / fe if fe > 0 else 0.0,
            "mean_investment": float((m_t * k[:, t]).sum() / mass) if mass > 0 else np.nan,
            "mean_assets": float((m_t * grid.assets[:, None, None]).sum() / mass) if mass > 0 else np.nan,
            "mean_leverage": float((w_act * lev[:, t]).sum() / w_act.sum()) if w_act.sum() > 0 else np.nan,
        }
        rows.append(row)

    by_prize = []
    for p, prize in enumerate(grid.prizes):
        w_act = np.where(active[..., p], mE[..., p], 0.0)
        tot = w_act.sum()
        by_prize.append({"prize": float(prize),
                         "mean_leverage": float((w_act * lev[..., p]).sum() / tot) if tot > 0 else np.nan})

    return MomentsReport(
        capital_output_ratio=agg.total_assets / Y,
        govt_expenditure_share=agg.G / Y,
        income_tax_share=agg.income_tax / agg.G,
        entrepreneur_fraction=fe,
        entrepreneur_income_share=agg.entrepreneur_income / agg.total_income,
        entrepreneur_asset_share=agg.entrepreneur_assets / agg.total_assets,
        entrepreneur_investment_share=agg.K_entre / agg.total_assets,
        exit_rate=exit_rate(phi, pol, cfg, grid),
        output=Y,
        capital=agg.total_assets,
        productive_capital=agg.productive_capital,
        consumption=agg.C,
        theta_table=rows,
        leverage_by_prize=by_prize,
    )


def compare_steady_states(eq_a, eq_b):
    """Percentage change of every summary moment from ``eq_b`` to ``eq_a``."""
    ma = eq_a.moments if isinstance(eq_a, Equilibrium) else eq_a
    mb = eq_b.moments if isinstance(eq_b, Equilibrium) else eq_b
    out = []
    for (label, va, pct), (_, vb, _) in zip(ma.summary(), mb.summary()):
        change = 100.0 * (va - vb) / vb if vb != 0 else (0.0 if va == vb else np.inf)
        out.append({"moment": label, "a": va, "b": vb, "pct_change": change, "is_share": pct})
    return out
