"""
Monte Carlo panel of households driven by the stationary policies.

Shocks come from counter-based Philox streams keyed by ``(seed, variable,
period)``, so each shock series is reproducible on its own. Changing the
prize structure redraws only the prize outcomes, and the ability and
efficiency histories stay the same.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .household import StateGrid
from .model import ModelError, stationary_distribution

# stream identifiers
_THETA, _ETA, _PSI, _THETA0, _ETA0 = range(5)

PANEL_COLUMNS = ("id", "t", "a_lag", "eta", "theta", "psi", "occupation", "c", "a_next", "k")


@dataclass(frozen=True)
class SimConfig:
    n_households: int = 400_000
    n_periods: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_households < 1:
            raise ModelError("need at least one household")
        if self.n_periods < 2:
            raise ModelError("need at least two periods")


@dataclass
class Panel:
    records: pd.DataFrame  # full records for the last two periods
    summary: pd.DataFrame  # per-period aggregates for every period
    sim: SimConfig

    def period(self, t):
        return self.records[self.records["t"] == t]

    @property
    def last(self):
        return self.period(self.sim.n_periods)


def uniforms(seed, stream, period, n):
    """``n`` uniforms from the Philox stream keyed by ``(seed, stream, period)``."""
    ss = np.random.SeedSequence([int(seed), int(stream), int(period)])
    return np.random.Generator(np.random.Philox(ss)).random(n)


def draw_categorical(cdf_rows, current, u):
    """Inverse-CDF draw: next index for each household given its row."""
    cdf = cdf_rows[current]
    nxt = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(nxt, cdf_rows.shape[1] - 1)


def _cdf(P):
    c = np.cumsum(P, axis=-1)
    c[..., -1] = 1.0
    return c


@dataclass
class PanelState:
    a_idx: np.ndarray
    theta: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    occ: np.ndarray


def init_panel(sim, eq):
    """Period-1 states: stationary ability and efficiency, all workers,
    every household at the grid point nearest mean steady-state assets."""
    cfg = eq.config
    grid = StateGrid.from_config(cfg)
    n = sim.n_households
    pt = _cdf(stationary_distribution(cfg.theta_chain))
    pe = _cdf(stationary_distribution(cfg.eta_chain))
    theta = draw_categorical(pt[None, :], np.zeros(n, dtype=np.int64), uniforms(sim.seed, _THETA0, 1, n))
    eta = draw_categorical(pe[None, :], np.zeros(n, dtype=np.int64), uniforms(sim.seed, _ETA0, 1, n))
    mean_assets = eq.aggregates.total_assets
    a0 = int(np.abs(grid.assets - mean_assets).argmin())
    return PanelState(a_idx=np.full(n, a0, dtype=np.int64), theta=theta, eta=eta,
                      psi=np.zeros(n, dtype=np.int64), occ=np.zeros(n, dtype=np.int8))


def decisions(state, policies):
    """Read every decision off the policy tables at the realised states."""
    ix = (state.occ, state.a_idx, state.theta, state.eta, state.psi)
    fx = ix[1:]
    is_e = state.occ == 1
    return {
        "a_next_idx": policies.savings_idx[ix],
        "c": policies.consumption[ix],
        "occ_next": policies.occ_next[ix],
        "k": np.where(is_e, policies.capital[fx], 0.0),
        "n": np.where(is_e, policies.labor[fx], 0.0),
    }


def step_panel(state, dec, policies, config, sim, t):
    """Move households from period ``t - 1`` to ``t``."""
    n = state.a_idx.size
    Pt = _cdf(config.theta_chain.matrix)
    Pe = _cdf(config.eta_chain.matrix)
    pp = _cdf(config.prize_probs)[None, :]
    theta = draw_categorical(Pt, state.theta, uniforms(sim.seed, _THETA, t, n))
    eta = draw_categorical(Pe, state.eta, uniforms(sim.seed, _ETA, t, n))
    psi = draw_categorical(pp, np.zeros(n, dtype=np.int64), uniforms(sim.seed, _PSI, t, n))
    if config.timing == "predetermined":
        occ = dec["occ_next"].astype(np.int8)
    else:
        occ = policies.occupation[dec["a_next_idx"], theta, eta, psi].astype(np.int8)
    return PanelState(a_idx=dec["a_next_idx"], theta=theta, eta=eta, psi=psi, occ=occ)


def _records(state, dec, grid, t):
    n = state.a_idx.size
    return pd.DataFrame({
        "id": np.arange(n, dtype=np.int64),
        "t": np.full(n, t, dtype=np.int64),
        "a_lag": grid.assets[state.a_idx],
        "eta": grid.eta[state.eta],
        "theta": grid.theta[state.theta],
        "psi": grid.prizes[state.psi],
        "occupation": state.occ.astype(np.int64),
        "c": dec["c"],
        "a_next": grid.assets[dec["a_next_idx"]],
        "k": dec["k"],
    })


def run_simulation(sim, eq):
    """Simulate ``sim.n_periods`` periods; keep full records for the last two."""
    cfg, pol = eq.config, eq.policies
    grid = StateGrid.from_config(cfg)
    state = init_panel(sim, eq)
    keep, rows, dec = [], [], None
    for t in range(1, sim.n_periods + 1):
        if dec is not None:
            state = step_panel(state, dec, pol, cfg, sim, t)
        dec = decisions(state, pol)
        rows.append({"t": t,
                     "mean_assets": float(grid.assets[state.a_idx].mean()),
                     "entrepreneur_fraction": float(state.occ.mean()),
                     "winners": int((state.psi > 0).sum()),
                     "mean_capital": float(dec["k"].mean())})
        if t >= sim.n_periods - 1:
            keep.append(_records(state, dec, grid, t))
    return Panel(records=pd.concat(keep, ignore_index=True), summary=pd.DataFrame(rows), sim=sim)
