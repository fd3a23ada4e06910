"""
Structural primitives of the occupational-choice economy.

Parameter containers, preferences, the two production technologies, the
income tax schedule, factor prices, lottery arithmetic and Markov-chain
helpers. Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class ModelError(ValueError):
    """Invalid parameter or out-of-domain argument."""


@dataclass(frozen=True)
class Preferences:
    sigma: float = 2.0  # relative risk aversion
    beta: float = 0.9575  # discount factor

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.beta < 1:
            raise ModelError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class Technology:
    alpha: float = 0.36  # capital share
    v: float = 0.88  # span of control
    delta: float = 0.06  # depreciation
    A: float = 1.0  # corporate TFP

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ModelError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.v < 1:
            raise ModelError(f"v must lie in (0, 1), got {self.v}")
        if not 0 <= self.delta <= 1:
            raise ModelError(f"delta must lie in [0, 1], got {self.delta}")
        if not self.A > 0:
            raise ModelError(f"A must be positive, got {self.A}")


@dataclass(frozen=True)
class TaxSystem:
    tau_c: float = 0.0567
    tau_I: float = 0.0316
    a0: float = 0.258
    a1: float = 0.768
    a2: float = 0.438

    def __post_init__(self):
        if self.tau_c < 0 or self.tau_I < 0:
            raise ModelError("tax rates must be nonnegative")
        if min(self.a0, self.a1, self.a2) <= 0:
            raise ModelError("a0, a1, a2 must be positive")


@dataclass(frozen=True)
class CreditSector:
    iota: float = 0.05  # borrowing spread over r
    d: float = 0.5  # maximum leverage

    def __post_init__(self):
        if self.iota < 0 or self.d < 0:
            raise ModelError("iota and d must be nonnegative")


@dataclass(frozen=True)
class LotterySpec:
    """Ticket price and prize distribution; prizes are absolute amounts."""

    tau: float
    prizes: tuple
    probs: tuple

    def __post_init__(self):
        prizes = tuple(float(x) for x in self.prizes)
        probs = tuple(float(x) for x in self.probs)
        object.__setattr__(self, "prizes", prizes)
        object.__setattr__(self, "probs", probs)
        if len(prizes) != len(probs) or not prizes:
            raise ModelError("prizes and probs must be nonempty and of equal length")
        if prizes[0] != 0.0:
            raise ModelError("the first prize must be the zero (losing) outcome")
        if any(b < a for a, b in zip(prizes, prizes[1:])):
            raise ModelError("prizes must be nondecreasing")
        if any(p < 0 for p in probs):
            raise ModelError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ModelError(f"probabilities sum to {sum(probs)!r}, not 1")
        if self.tau < 0:
            raise ModelError("ticket price must be nonnegative")

    @classmethod
    def from_relative(cls, tau, unit, multipliers, win_probs):
        """Build from a prize unit and relative magnitudes.

        ``multipliers`` and ``win_probs`` describe the winning outcomes only;
        the zero prize is prepended with probability ``1 - sum(win_probs)``.
        """
        win_probs = [float(p) for p in win_probs]
        p0 = 1.0 - float(np.sum(win_probs))
        prizes = (0.0,) + tuple(unit * float(m) for m in multipliers)
        return cls(tau=tau, prizes=prizes, probs=(p0, *win_probs))

    @property
    def n(self):
        return len(self.prizes)

    def expected_payout(self):
        return lottery_expected_payout(self)

    def imbalance(self):
        return self.expected_payout() - self.tau

    def rescaled(self, tau):
        """Same relative prize structure with prizes scaled so payout equals ``tau``."""
        payout = self.expected_payout()
        if payout <= 0:
            raise ModelError("cannot rescale a lottery that pays nothing")
        s = tau / payout
        return replace(self, tau=float(tau), prizes=tuple(p * s for p in self.prizes))


@dataclass(frozen=True)
class MarkovChain:
    grid: tuple
    P: tuple

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        P = np.asarray(self.P, dtype=float)
        object.__setattr__(self, "grid", tuple(grid.tolist()))
        object.__setattr__(self, "P", tuple(tuple(row) for row in P.tolist()))
        n = grid.size
        if P.shape != (n, n):
            raise ModelError(f"transition matrix has shape {P.shape}, expected {(n, n)}")
        if (P < 0).any():
            raise ModelError("transition matrix has negative entries")
        rowsum = P.sum(axis=1)
        if np.abs(rowsum - 1).max() > 1e-12:
            raise ModelError(f"transition rows sum to {rowsum.tolist()}, not 1")
        inner = grid[1:] if n > 1 and grid[0] == 0 else grid
        if n > 1 and not np.all(np.diff(inner) > 0):
            raise ModelError("chain grid must be strictly increasing")
        if n > 1 and grid[1] <= grid[0]:
            raise ModelError("chain grid must be strictly increasing")

    @property
    def values(self):
        return np.asarray(self.grid)

    @property
    def matrix(self):
        return np.asarray(self.P)

    @property
    def n(self):
        return len(self.grid)

    @classmethod
    def from_rows(cls, grid, rows, renormalize=True):
        """Accept a matrix printed at finite precision, renormalizing each row."""
        P = np.asarray(rows, dtype=float)
        if renormalize:
            P = P / P.sum(axis=1, keepdims=True)
        return cls(grid=tuple(grid), P=P)


# Markov chains for labour efficiency and entrepreneurial ability.
ETA_GRID = (0.646, 0.798, 0.966, 1.169, 1.444)
ETA_P = (
    (0.731, 0.253, 0.016, 0.000, 0.000),
    (0.192, 0.555, 0.236, 0.017, 0.000),
    (0.011, 0.222, 0.533, 0.222, 0.011),
    (0.000, 0.017, 0.236, 0.555, 0.192),
    (0.000, 0.000, 0.016, 0.253, 0.731),
)
THETA_GRID = (0.000, 0.706, 1.470, 2.234)
THETA_P = (
    (0.780, 0.220, 0.000, 0.000),
    (0.430, 0.420, 0.150, 0.000),
    (0.000, 0.430, 0.420, 0.150),
    (0.000, 0.000, 0.220, 0.780),
)

# Lottery calibration: ticket price, prize unit, relative magnitudes, odds.
LOTTERY_TAU = 0.0292
LOTTERY_UNIT = 5.08
LOTTERY_MULTIPLIERS = (1.0, 3.0, 6.0)
LOTTERY_WIN_PROBS = (0.0047, 0.00025, 0.00005)
LOTTERY_REVENUE_SHARE = 0.0132


def default_eta_chain():
    return MarkovChain.from_rows(ETA_GRID, ETA_P)


def default_theta_chain():
    return MarkovChain.from_rows(THETA_GRID, THETA_P)


def default_lottery():
    return LotterySpec.from_relative(
        LOTTERY_TAU, LOTTERY_UNIT, LOTTERY_MULTIPLIERS, LOTTERY_WIN_PROBS
    )


@dataclass(frozen=True)
class AssetGrid:
    a_min: float = 0.01
    a_max: float = 20.0
    n: int = 1000
    spacing: str = "linear"  # "linear" or "log"

    def __post_init__(self):
        if self.a_min < 0:
            raise ModelError("asset grid minimum must be nonnegative")
        if self.n < 2:
            raise ModelError("asset grid needs at least two points")
        if self.a_max <= self.a_min:
            raise ModelError("asset grid maximum must exceed the minimum")
        if self.spacing not in ("linear", "log"):
            raise ModelError(f"unknown spacing {self.spacing!r}")

    def points(self):
        if self.spacing == "linear":
            return np.linspace(self.a_min, self.a_max, self.n)
        # log-spaced distances from a_min, denser near the constraint
        x = np.geomspace(1.0, self.a_max - self.a_min + 1.0, self.n) - 1.0
        return self.a_min + x


@dataclass(frozen=True)
class Numerics:
    """Grid sizes and tolerances for the numerical solution."""

    n_k: int = 1000
    n_n: int = 1000
    k_max: float | None = None  # default (1 + d) * a_max
    n_max_scale: float = 1.25
    vfi_tol: float = 1e-6
    vfi_max_iter: int = 3000
    dist_tol: float = 1e-9
    dist_max_iter: int = 20000
    eq_tol: float = 1e-4
    eq_max_iter: int = 60
    tau_tol: float = 1e-3
    tau_max_iter: int = 40
    tau_damping: float = 0.5
    c_min: float = 1e-6

    def __post_init__(self):
        for name in ("vfi_tol", "dist_tol", "eq_tol", "tau_tol", "c_min"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")
        if self.n_k < 2 or self.n_n < 2:
            raise ModelError("k and n grids need at least two points")
        if not 0 < self.tau_damping <= 1:
            raise ModelError("tau_damping must lie in (0, 1]")


@dataclass(frozen=True)
class ModelConfig:
    preferences: Preferences = field(default_factory=Preferences)
    technology: Technology = field(default_factory=Technology)
    tax: TaxSystem = field(default_factory=TaxSystem)
    credit: CreditSector = field(default_factory=CreditSector)
    lottery: LotterySpec | None = None
    eta_chain: MarkovChain = field(default_factory=default_eta_chain)
    theta_chain: MarkovChain = field(default_factory=default_theta_chain)
    assets: AssetGrid = field(default_factory=AssetGrid)
    numerics: Numerics = field(default_factory=Numerics)
    revenue_share: float = LOTTERY_REVENUE_SHARE
    timing: str = "predetermined"
    name: str = "benchmark"

    def __post_init__(self):
        if not 0 <= self.revenue_share < 1:
            raise ModelError("revenue_share must lie in [0, 1)")
        if self.timing not in ("predetermined", "contemporaneous"):
            raise ModelError(f"unknown occupation timing {self.timing!r}")

    @property
    def has_lottery(self):
        return self.lottery is not None

    @property
    def tau(self):
        return self.lottery.tau if self.lottery is not None else 0.0

    @property
    def prizes(self):
        if self.lottery is None:
            return np.zeros(1)
        return np.asarray(self.lottery.prizes)

    @property
    def prize_probs(self):
        if self.lottery is None:
            return np.ones(1)
        return np.asarray(self.lottery.probs)

    def with_lottery(self, lottery):
        return replace(self, lottery=lottery)

    def replace(self, **kw):
        return replace(self, **kw)


# --------------------------------------------------------------------------
# pure functions


def utility(c, prefs):
    """CRRA period utility; log utility when ``sigma == 1``."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ModelError("utility requires strictly positive consumption")
    if prefs.sigma == 1.0:
        out = np.log(c)
    else:
        out = c ** (1.0 - prefs.sigma) / (1.0 - prefs.sigma)
    return out if out.ndim else float(out)


def entrepreneur_output(k, l, theta, tech):
    k, l, theta = (np.asarray(x, dtype=float) for x in (k, l, theta))
    if np.any(k < 0) or np.any(l < 0) or np.any(theta < 0):
        raise ModelError("entrepreneur_output requires nonnegative inputs")
    out = theta * (k**tech.alpha * l ** (1.0 - tech.alpha)) ** tech.v
    return out if out.ndim else float(out)


def corporate_output(K, L, tech):
    K, L = np.asarray(K, dtype=float), np.asarray(L, dtype=float)
    if np.any(K < 0) or np.any(L < 0):
        raise ModelError("corporate_output requires nonnegative inputs")
    out = tech.A * K**tech.alpha * L ** (1.0 - tech.alpha)
    return out if out.ndim else float(out)


def income_tax(I, tax):
    """Nonlinear income tax plus a proportional component.

    Negative income is clamped to zero, so losses are never taxed and the
    schedule is continuous at the origin with ``T(0) = 0``.
    """
    I = np.maximum(np.asarray(I, dtype=float), 0.0)
    out = np.zeros_like(I)
    pos = I > 0
    Ip = I[pos]
    out[pos] = tax.a0 * (Ip - (Ip ** (-tax.a1) + tax.a2) ** (-1.0 / tax.a1)) + tax.tau_I * Ip
    return out if out.ndim else float(out)


def factor_prices(K_over_L, tech):
    """Interest rate and wage implied by the corporate capital-labour ratio."""
    if not K_over_L > 0:
        raise ModelError(f"capital-labour ratio must be positive, got {K_over_L}")
    r = tech.alpha * tech.A * K_over_L ** (tech.alpha - 1.0) - tech.delta
    w = (1.0 - tech.alpha) * tech.A * K_over_L**tech.alpha
    return float(r), float(w)


def ratio_from_rate(r, tech):
    """Invert the interest-rate condition for K/L."""
    return float(((r + tech.delta) / (tech.alpha * tech.A)) ** (1.0 / (tech.alpha - 1.0)))


def calibrate_tfp(target_wage, K_over_L, tech):
    """TFP level giving ``target_wage`` at the capital-labour ratio ``K_over_L``."""
    A = target_wage / ((1.0 - tech.alpha) * K_over_L**tech.alpha)
    return replace(tech, A=float(A))


def stationary_distribution(chain):
    """Invariant probability vector of a row-stochastic matrix.

    Solved as the null vector of ``(P' - I)`` with the adding-up row
    appended, which is exact for chains with a single recurrent class.
    """
    P = chain.matrix if isinstance(chain, MarkovChain) else np.asarray(chain, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or (P < 0).any() or np.abs(P.sum(axis=1) - 1).max() > 1e-10:
        raise ModelError("stationary_distribution requires a row-stochastic matrix")
    M = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(M, rhs, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def lottery_expected_payout(spec):
    return float(np.dot(spec.probs, spec.prizes))
