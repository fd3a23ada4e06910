"""
Stationary distribution over ``[occupation, a, theta, eta, psi]`` by the
histogram method: mass is pushed forward along grid-valued policies and the
exogenous transition matrices until it stops moving.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .household import NonConvergenceError, StateGrid
from .model import ModelError, stationary_distribution


@dataclass
class Distribution:
    mass: np.ndarray  # [2, a, theta, eta, psi]

    def __post_init__(self):
        if (self.mass < 0).any():
            raise ModelError("distribution has negative mass")

    @property
    def total(self):
        return float(self.mass.sum())

    def marginal(self, axis):
        """Marginal over one of ``"occupation", "a", "theta", "eta", "psi"``."""
        names = ("occupation", "a", "theta", "eta", "psi")
        keep = names.index(axis)
        other = tuple(i for i in range(5) if i != keep)
        return self.mass.sum(axis=other)


def initial_distribution(config, grid=None):
    grid = grid or StateGrid.from_config(config)
    pt = stationary_distribution(config.theta_chain)
    pe = stationary_distribution(config.eta_chain)
    mass = np.zeros((2,) + grid.shape)
    mass[0, 0] = pt[:, None, None] * pe[None, :, None] * grid.prize_probs[None, None, :]
    return Distribution(mass)


def _shock_step(tmp, grid):
    """Apply theta, eta and prize transitions to mass on ``[..., a', theta, eta]``."""
    moved = np.einsum("...atk,ts,kl->...asl", tmp, grid.P_theta, grid.P_eta, optimize=True)
    return moved[..., None] * grid.prize_probs


def transition_operator(phi, policies, config, grid=None):
    """One period of the law of motion for the distribution."""
    grid = grid or StateGrid.from_config(config)
    mass = phi.mass
    if mass.shape != policies.savings_idx.shape:
        raise ModelError(f"distribution shape {mass.shape} does not match policies "
                         f"{policies.savings_idx.shape}")
    na, nt, ne, _ = grid.shape
    t_idx = np.arange(nt)[None, None, :, None]
    e_idx = np.arange(ne)[None, None, None, :]
    if policies.timing == "predetermined":
        # policies depend on today's prize, so aggregate after indexing
        dest = (policies.occ_next.astype(np.int64) * na + policies.savings_idx) * nt * ne
        dest = dest + t_idx[..., None] * ne + e_idx[..., None]
        tmp = np.bincount(dest.ravel(), weights=mass.ravel(), minlength=2 * na * nt * ne)
        tmp = tmp.reshape(2, na, nt, ne)
        return Distribution(_shock_step(tmp, grid))
    dest = (policies.savings_idx * nt * ne) + t_idx[..., None] * ne + e_idx[..., None]
    tmp = np.bincount(dest.ravel(), weights=mass.ravel(), minlength=na * nt * ne)
    moved = _shock_step(tmp.reshape(na, nt, ne), grid)
    is_e = policies.occupation.astype(bool)
    out = np.stack([np.where(is_e, 0.0, moved), np.where(is_e, moved, 0.0)])
    return Distribution(out)


def invariant_distribution(policies, config, phi_init=None, grid=None):
    """Iterate the law of motion to an L1 fixed point.

    Returns
    -------
    Distribution, iterations
    """
    grid = grid or StateGrid.from_config(config)
    phi = phi_init or initial_distribution(config, grid)
    num = config.numerics
    resid = np.inf
    for it in range(1, num.dist_max_iter + 1):
        new = transition_operator(phi, policies, config, grid)
        resid = float(np.abs(new.mass - phi.mass).sum())
        phi = new
        if resid < num.dist_tol:
            return phi, it
    raise NonConvergenceError("invariant distribution", resid, num.dist_max_iter)


def top_mass(phi):
    """Mass sitting at the largest asset grid point."""
    return float(phi.mass[:, -1].sum())
