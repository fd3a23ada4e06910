"""
Household dynamic programme: the static firm problem and value function
iteration over the joint worker/entrepreneur state space.

Arrays are laid out as ``[a, theta, eta, psi]``; occupation-indexed arrays
carry a leading axis with ``0 = worker`` and ``1 = entrepreneur``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from .model import ModelError, income_tax

log = logging.getLogger(__name__)

WORKER, ENTREPRENEUR = 0, 1


class NonConvergenceError(RuntimeError):
    def __init__(self, what, residual, iterations, trace=None):
        super().__init__(f"{what} did not converge after {iterations} iterations "
                         f"(last residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations
        self.trace = trace or []


@dataclass(frozen=True)
class Prices:
    r: float
    w: float

    def __post_init__(self):
        if not self.w > 0:
            raise ModelError(f"wage must be positive, got {self.w}")


@dataclass
class StateGrid:
    assets: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    prizes: np.ndarray
    prize_probs: np.ndarray
    P_theta: np.ndarray
    P_eta: np.ndarray

    @classmethod
    def from_config(cls, config):
        return cls(
            assets=config.assets.points(),
            theta=config.theta_chain.values,
            eta=config.eta_chain.values,
            prizes=config.prizes,
            prize_probs=config.prize_probs,
            P_theta=config.theta_chain.matrix,
            P_eta=config.eta_chain.matrix,
        )

    @property
    def shape(self):
        return (self.assets.size, self.theta.size, self.eta.size, self.prizes.size)


@dataclass
class ValueTables:
    VW: np.ndarray
    VE: np.ndarray


@dataclass
class FirmSolution:
    """Cached static firm problem at one price pair."""

    k_grid: np.ndarray
    n_grid: np.ndarray
    k: np.ndarray  # [a, theta, eta, psi]
    n: np.ndarray
    income: np.ndarray  # pre-tax taxable income
    pi: np.ndarray  # after-tax resources


@dataclass
class PolicySet:
    """Grid-valued decision rules at every state and occupation.

    ``savings_idx``, ``consumption``, ``cash`` and ``income`` have shape
    ``[2, a, theta, eta, psi]``. ``occ_next`` holds the occupation chosen for
    next period (predetermined timing); ``occupation`` holds the occupation
    operated today as a function of the state (contemporaneous timing).
    """

    savings_idx: np.ndarray
    consumption: np.ndarray
    cash: np.ndarray
    income: np.ndarray
    occ_next: np.ndarray
    occupation: np.ndarray | None
    firm: FirmSolution
    timing: str
    infeasible: int = 0

    @property
    def capital(self):
        return self.firm.k

    @property
    def labor(self):
        return self.firm.n

    @property
    def profit(self):
        return self.firm.pi


# --------------------------------------------------------------------------
# static firm problem


def capital_grid(config):
    num = config.numerics
    k_max = num.k_max if num.k_max is not None else (1.0 + config.credit.d) * config.assets.a_max
    return np.linspace(0.0, k_max, num.n_k)


def labor_grid(config, w, k_max):
    """Labour grid wide enough that the top-ability unconstrained choice is interior."""
    tech = config.technology
    theta = float(config.theta_chain.values.max())
    e_l = (1.0 - tech.alpha) * tech.v
    n_star = ((e_l * theta * k_max ** (tech.alpha * tech.v)) / w) ** (1.0 / (1.0 - e_l))
    n_max = max(config.numerics.n_max_scale * n_star, float(config.eta_chain.values.max()))
    return np.linspace(0.0, n_max, config.numerics.n_n)


@numba.njit(cache=True)
def _best_labor(k_grid, n_grid, theta, eta, alpha, v, w):
    """For every (theta, eta, k): max over n of output net of hired labour."""
    nt, ne, nk, nn = theta.size, eta.size, k_grid.size, n_grid.size
    g = np.zeros((nt, ne, nk))
    arg = np.zeros((nt, ne, nk), dtype=np.int64)
    for t in range(nt):
        for e in range(ne):
            for ik in range(nk):
                best = -np.inf
                bi = 0
                kpart = k_grid[ik] ** alpha
                for jn in range(nn):
                    n = n_grid[jn]
                    y = theta[t] * (kpart * n ** (1.0 - alpha)) ** v
                    hired = n - eta[e]
                    if hired < 0.0:
                        hired = 0.0
                    val = y - w * hired
                    if val > best:
                        best = val
                        bi = jn
                g[t, e, ik] = best
                arg[t, e, ik] = bi
    return g, arg


@numba.njit(cache=True)
def _labor_at(k, n_grid, theta, eta, alpha, v, w):
    best = -np.inf
    bi = 0
    kpart = k ** alpha
    for jn in range(n_grid.size):
        hired = n_grid[jn] - eta
        if hired < 0.0:
            hired = 0.0
        val = theta * (kpart * n_grid[jn] ** (1.0 - alpha)) ** v - w * hired
        if val > best:
            best = val
            bi = jn
    return best, bi


@numba.njit(cache=True)
def _best_capital(agrid, k_grid, n_grid, g, n_arg, theta, eta, alpha, v, w,
                  r, iota, delta, d, tau, prizes):
    """Maximise taxable income over feasible capital.

    Candidates are the capital grid points below the collateral limit plus
    the two corners the grid would otherwise miss: full self-financing
    ``k = a`` and the binding limit ``k = (1+d)(a - tau + psi)``. After-tax
    resources are strictly increasing in taxable income, so the
    income-maximising choice is also the profit-maximising one.
    """
    na, nk, npz = agrid.size, k_grid.size, prizes.size
    nt, ne = g.shape[0], g.shape[1]
    k_out = np.zeros((na, nt, ne, npz))
    n_out = np.zeros((na, nt, ne, npz))
    income = np.zeros((na, nt, ne, npz))
    for ia in range(na):
        a = agrid[ia]
        for p in range(npz):
            cap = (1.0 + d) * (a - tau + prizes[p])
            for t in range(nt):
                for e in range(ne):
                    best = -np.inf
                    bk = 0.0
                    bn = n_grid[n_arg[t, e, 0]]
                    for ik in range(nk):
                        k = k_grid[ik]
                        if ik > 0 and k > cap:
                            break
                        rr = r if k <= a else r + iota
                        val = g[t, e, ik] - delta * k - rr * (k - a)
                        if val > best:
                            best = val
                            bk = k
                            bn = n_grid[n_arg[t, e, ik]]
                    for corner in range(2):
                        k = a if corner == 0 else cap
                        if k <= 0.0 or k > cap or theta[t] == 0.0:
                            continue
                        gk, jn = _labor_at(k, n_grid, theta[t], eta[e], alpha, v, w)
                        rr = r if k <= a else r + iota
                        val = gk - delta * k - rr * (k - a)
                        if val > best:
                            best = val
                            bk = k
                            bn = n_grid[jn]
                    k_out[ia, t, e, p] = bk
                    n_out[ia, t, e, p] = bn
                    income[ia, t, e, p] = best - tau + prizes[p]
    return k_out, n_out, income


def solve_firm(prices, config, grid=None):
    """Static entrepreneur problem at every (a, theta, eta, psi).

    Returns optimal capital and labour, taxable income and after-tax
    resources ``pi`` (which include the gross return on assets).
    """
    grid = grid or StateGrid.from_config(config)
    tech, credit = config.technology, config.credit
    k_grid = capital_grid(config)
    n_grid = labor_grid(config, prices.w, k_grid[-1])
    g, n_arg = _best_labor(k_grid, n_grid, grid.theta, grid.eta, tech.alpha, tech.v, prices.w)
    k, n, income = _best_capital(grid.assets, k_grid, n_grid, g, n_arg, grid.theta, grid.eta,
                                 tech.alpha, tech.v, prices.w, prices.r, credit.iota,
                                 tech.delta, credit.d, config.tau, grid.prizes)
    a = grid.assets[:, None, None, None]
    psi = grid.prizes[None, None, None, :]
    # income = y - delta k - r~(k - a) - w hired - tau + psi
    pi = income + config.tau - psi + a - income_tax(income, config.tax)
    return FirmSolution(k_grid=k_grid, n_grid=n_grid, k=k, n=n, income=income, pi=pi)


def entrepreneur_profit(a, theta, eta, psi, prices, config):
    """After-tax resources and (k, n) for one state, by direct grid search.

    This is the unfactored reference form of the firm problem; ``solve_firm``
    computes the same argmax for all states at once.
    """
    tech, credit = config.technology, config.credit
    k_grid = capital_grid(config)
    n_grid = labor_grid(config, prices.w, k_grid[-1])
    tau = config.tau
    cap = (1.0 + credit.d) * (a - tau + psi)
    corners = [k for k in (a, cap) if 0.0 < k <= cap and theta > 0]
    k_cand = np.concatenate([k_grid, corners])
    K, N = np.meshgrid(k_cand, n_grid, indexing="ij")
    y = theta * (K**tech.alpha * N ** (1 - tech.alpha)) ** tech.v
    rr = np.where(K <= a, prices.r, prices.r + credit.iota)
    hired = np.maximum(N - eta, 0.0)
    I = y - tech.delta * K - rr * (K - a) - prices.w * hired - tau + psi
    pi = y + (1 - tech.delta) * K - (1 + rr) * (K - a) - prices.w * hired - income_tax(I, config.tax)
    feasible = K <= cap
    feasible[0, :] = True
    pi = np.where(feasible, pi, -np.inf)
    ik, jn = np.unravel_index(int(np.argmax(pi)), pi.shape)
    return float(pi[ik, jn]), float(k_cand[ik]), float(n_grid[jn])


# --------------------------------------------------------------------------
# Bellman operator


def cash_on_hand(prices, config, firm, grid):
    """Right-hand side of each occupation's budget constraint, ``[2, a, t, e, p]``."""
    tau = config.tau
    a = grid.assets[:, None, None, None]
    eta = grid.eta[None, None, :, None]
    psi = grid.prizes[None, None, None, :]
    shape = grid.shape
    income_w = np.broadcast_to(eta * prices.w + prices.r * a + psi - tau, shape)
    cash_w = np.broadcast_to(eta * prices.w + (1 + prices.r) * a + psi - tau, shape) \
        - income_tax(income_w, config.tax)
    cash_e = firm.pi + psi - tau
    return np.stack([cash_w, cash_e]), np.stack([np.array(income_w), firm.income])


def expectation(V, grid):
    """E[V(a', theta', eta', psi') | theta, eta] on the ``[a', theta, eta]`` grid."""
    Vpsi = V @ grid.prize_probs
    return np.einsum("ij,ajk,lk->ail", grid.P_theta, Vpsi, grid.P_eta, optimize=True)


@numba.njit(cache=True)
def _crra(c, sigma):
    if sigma == 1.0:
        return np.log(c)
    if sigma == 2.0:
        return -1.0 / c
    return c ** (1.0 - sigma) / (1.0 - sigma)


@numba.njit(parallel=True, cache=True)
def _maximise(cash, agrid, cont, beta, sigma, tau_c, c_min):
    """Grid search over next-period assets for both occupations.

    ``cont`` is the continuation ``[a', theta, eta]``. The smallest maximiser
    is nondecreasing in cash-on-hand, so along the asset axis the search
    starts from the previous argmax whenever cash has not fallen. Returns
    values, argmax indices and a count of states with no positive-consumption
    choice.
    """
    nj, na, nt, ne, npz = cash.shape
    V = np.empty(cash.shape)
    idx = np.zeros(cash.shape, dtype=np.int64)
    bad = np.zeros(nj * nt * ne * npz, dtype=np.int64)
    for flat in numba.prange(nj * nt * ne * npz):
        p = flat % npz
        e = (flat // npz) % ne
        t = (flat // (npz * ne)) % nt
        j = flat // (npz * ne * nt)
        start = 0
        prev_cash = -np.inf
        for ia in range(na):
            x = cash[j, ia, t, e, p]
            if x < prev_cash:
                start = 0
            prev_cash = x
            best = -np.inf
            bi = -1
            for ap in range(start, na):
                c = (x - agrid[ap]) / (1.0 + tau_c)
                if c <= 0.0:
                    break
                val = _crra(c, sigma) + beta * cont[ap, t, e]
                if val > best:
                    best = val
                    bi = ap
            if bi < 0:
                bad[flat] += 1
                bi = 0
                best = _crra(c_min, sigma) + beta * cont[0, t, e]
                start = 0
            else:
                start = bi
            V[j, ia, t, e, p] = best
            idx[j, ia, t, e, p] = bi
    return V, idx, bad.sum()


def continuation(values, grid, timing):
    """Continuation value on ``[a', theta, eta]`` and the occupation rule it implies."""
    VW, VE = values.VW, values.VE
    if timing == "predetermined":
        EW, EE = expectation(VW, grid), expectation(VE, grid)
        choice = (EE > EW).astype(np.int8)
        return np.maximum(EW, EE), choice
    choice = (VE > VW).astype(np.int8)
    return expectation(np.maximum(VW, VE), grid), choice


def bellman_update(values, prices, config, firm=None, grid=None, cash=None):
    """One application of the Bellman operator.

    Returns the updated value tables, the implied policies and the sup-norm
    change in values.
    """
    grid = grid or StateGrid.from_config(config)
    firm = firm or solve_firm(prices, config, grid)
    if cash is None:
        cash = cash_on_hand(prices, config, firm, grid)
    cash_arr, income = cash
    prefs, num = config.preferences, config.numerics
    cont, choice = continuation(values, grid, config.timing)
    V, idx, bad = _maximise(cash_arr, grid.assets, cont, prefs.beta, prefs.sigma,
                            config.tax.tau_c, num.c_min)
    new = ValueTables(VW=V[0], VE=V[1])
    resid = max(np.abs(new.VW - values.VW).max(), np.abs(new.VE - values.VE).max())
    policies = _policies(idx, cash_arr, income, choice, new, firm, grid, config, bad)
    return new, policies, float(resid)


def _policies(idx, cash, income, choice, values, firm, grid, config, bad):
    a_next = grid.assets[idx]
    c = (cash - a_next) / (1.0 + config.tax.tau_c)
    infeasible = idx == 0
    infeasible &= c <= 0
    c = np.where(infeasible, config.numerics.c_min, c)
    t_idx = np.arange(grid.theta.size)[None, None, :, None, None]
    e_idx = np.arange(grid.eta.size)[None, None, None, :, None]
    if config.timing == "predetermined":
        occ_next = choice[idx, t_idx, e_idx]
        occupation = None
    else:
        occupation = choice
        occ_next = np.zeros(idx.shape, dtype=np.int8)
    return PolicySet(savings_idx=idx, consumption=c, cash=cash, income=income,
                     occ_next=occ_next.astype(np.int8), occupation=occupation,
                     firm=firm, timing=config.timing, infeasible=int(bad))


def initial_values(prices, config, firm=None, grid=None, cash=None):
    """Constant lower bound: perpetual consumption of half the poorest cash-on-hand."""
    grid = grid or StateGrid.from_config(config)
    if cash is None:
        firm = firm or solve_firm(prices, config, grid)
        cash = cash_on_hand(prices, config, firm, grid)
    c_low = max(float((cash[0] - grid.assets[0]).min()) / (1 + config.tax.tau_c), 1e-3) / 2.0
    p = config.preferences
    u = np.log(c_low) if p.sigma == 1.0 else c_low ** (1 - p.sigma) / (1 - p.sigma)
    V0 = np.full(grid.shape, u / (1.0 - p.beta))
    return ValueTables(VW=V0.copy(), VE=V0.copy())


def solve_household(prices, config, V_init=None, grid=None, return_trace=False):
    """Value function iteration to a sup-norm fixed point.

    Parameters
    ----------
    prices : Prices
    config : ModelConfig
    V_init : ValueTables, optional
        Warm start; defaults to a uniform lower bound on the value.

    Returns
    -------
    values, policies, iterations (and the residual trace if requested)
    """
    grid = grid or StateGrid.from_config(config)
    firm = solve_firm(prices, config, grid)
    cash = cash_on_hand(prices, config, firm, grid)
    values = V_init or initial_values(prices, config, firm, grid, cash)
    num = config.numerics
    trace = []
    for it in range(1, num.vfi_max_iter + 1):
        values, policies, resid = bellman_update(values, prices, config, firm, grid, cash)
        trace.append(resid)
        if resid < num.vfi_tol:
            if policies.infeasible:
                log.debug("%d states had no positive-consumption choice", policies.infeasible)
            log.debug("VFI converged in %d iterations", it)
            if return_trace:
                return values, policies, it, trace
            return values, policies, it
    raise NonConvergenceError("value function iteration", trace[-1], num.vfi_max_iter, trace)
