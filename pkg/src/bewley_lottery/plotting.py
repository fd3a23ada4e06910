"""
Plot data and PNG renderings of the steady-state figures.

Each ``figN_data`` function returns a tidy DataFrame that is written to CSV
so the numbers behind a figure can be re-plotted with any tool. The
``render_*`` functions draw those same frames with matplotlib's Agg
backend. PNGs are saved without a software tag so reruns are
byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .household import StateGrid  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}
WIDTH = 6.4
GOLDEN = (np.sqrt(5) - 1) / 2


def _mid(n):
    return n // 2


def fig2_data(eq):
    """Ability composition of workers and entrepreneurs."""
    m = eq.distribution.mass
    grid = StateGrid.from_config(eq.config)
    by_occ = m.sum(axis=(1, 3, 4))  # occupation x theta
    tot = by_occ.sum(axis=1, keepdims=True)
    share = np.divide(by_occ, tot, out=np.zeros_like(by_occ), where=tot > 0)
    return pd.DataFrame({"theta": grid.theta, "workers": share[0], "entrepreneurs": share[1]})


def fig3_data(eq):
    """Entrepreneur investment by assets for each ability, median efficiency, no prize."""
    grid = StateGrid.from_config(eq.config)
    k = eq.policies.capital[:, :, _mid(grid.eta.size), 0]
    cols = {"assets": grid.assets}
    for t, theta in enumerate(grid.theta):
        if theta > 0:
            cols[f"k_theta{t}"] = k[:, t]
    return pd.DataFrame(cols)


def fig4_data(eq):
    """Asset density of workers and entrepreneurs."""
    grid = StateGrid.from_config(eq.config)
    m = eq.distribution.mass.sum(axis=(2, 3, 4))  # occupation x assets
    tot = m.sum(axis=1, keepdims=True)
    dens = np.divide(m, tot, out=np.zeros_like(m), where=tot > 0)
    return pd.DataFrame({"assets": grid.assets, "workers": dens[0], "entrepreneurs": dens[1]})


def fig5_data(eq):
    """Worker consumption and savings for winners (averaged over prizes) and non-winners.

    Evaluated at the lowest ability and median efficiency.
    """
    grid = StateGrid.from_config(eq.config)
    pol = eq.policies
    e = _mid(grid.eta.size)
    c = pol.consumption[0, :, 0, e, :]
    s = grid.assets[pol.savings_idx[0, :, 0, e, :]]
    out = {"assets": grid.assets, "c_nonwinner": c[:, 0], "a_next_nonwinner": s[:, 0]}
    if c.shape[1] > 1:
        out["c_winner"] = c[:, 1:].mean(axis=1)
        out["a_next_winner"] = s[:, 1:].mean(axis=1)
    return pd.DataFrame(out)


def fig6_data(eq):
    """Investment of the top-ability entrepreneur across prizes, median efficiency."""
    grid = StateGrid.from_config(eq.config)
    k = eq.policies.capital[:, -1, _mid(grid.eta.size), :]
    cols = {"assets": grid.assets}
    for p, prize in enumerate(grid.prizes):
        cols[f"k_prize{p}"] = k[:, p]
    return pd.DataFrame(cols)


FIGURES = {
    "fig2_ability": fig2_data,
    "fig3_investment": fig3_data,
    "fig4_assets": fig4_data,
    "fig5_winners": fig5_data,
    "fig6_prizes": fig6_data,
}
LOTTERY_ONLY = ("fig5_winners", "fig6_prizes")


def _bar(ax, df):
    x = np.arange(len(df))
    ax.bar(x - 0.2, df["workers"], 0.4, label="workers", color="0.6")
    ax.bar(x + 0.2, df["entrepreneurs"], 0.4, label="entrepreneurs", color="C0")
    ax.set_xticks(x, [f"{t:.3f}" for t in df["theta"]])
    ax.set_xlabel(r"ability $\theta$")
    ax.set_ylabel("share within occupation")
    ax.legend(frameon=False)


def _lines(ax, df, cols, labels, ylabel):
    for col, lab in zip(cols, labels):
        ax.plot(df["assets"], df[col], label=lab)
    ax.set_xlabel("assets $a$")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)


def render(name, df, path, eq=None):
    with plt.rc_context(STYLE):
        if name == "fig5_winners":
            fig, axes = plt.subplots(1, 2, figsize=(WIDTH, WIDTH * GOLDEN * 0.6))
            pairs = [("c", "consumption"), ("a_next", "savings $a'$")]
            for ax, (stem, lab) in zip(axes, pairs):
                cols = [c for c in (f"{stem}_nonwinner", f"{stem}_winner") if c in df]
                _lines(ax, df, cols, ["non-winners", "winners"][:len(cols)], lab)
        elif name == "fig4_assets":
            fig, axes = plt.subplots(1, 2, figsize=(WIDTH, WIDTH * GOLDEN * 0.6), sharey=True)
            for ax, col in zip(axes, ("workers", "entrepreneurs")):
                ax.plot(df["assets"], df[col], color="C0")
                ax.set_title(col)
                ax.set_xlabel("assets $a$")
            axes[0].set_ylabel("density")
        else:
            fig, ax = plt.subplots(figsize=(WIDTH, WIDTH * GOLDEN))
            if name == "fig2_ability":
                _bar(ax, df)
            elif name == "fig3_investment":
                cols = [c for c in df if c.startswith("k_")]
                theta = StateGrid.from_config(eq.config).theta if eq is not None else None
                labels = [rf"$\theta={theta[int(c[7:])]:.3f}$" if theta is not None else c for c in cols]
                _lines(ax, df, cols, labels, "capital $k$")
            elif name == "fig6_prizes":
                cols = [c for c in df if c.startswith("k_")]
                prizes = eq.config.prizes if eq is not None else range(len(cols))
                _lines(ax, df, cols, [rf"$\psi={p:.2f}$" for p in prizes], "capital $k$")
        fig.tight_layout()
        fig.savefig(path, format="png", metadata={"Software": None})
        plt.close(fig)
    return Path(path)


def write_figures(eq, out_dir, prefix="", png=True):
    """Write plot-data CSVs (and PNGs) for every figure that applies to ``eq``."""
    out_dir = Path(out_dir)
    written = []
    for name, fn in FIGURES.items():
        if name in LOTTERY_ONLY and not eq.config.has_lottery:
            continue
        df = fn(eq)
        csv = out_dir / f"{prefix}{name}.csv"
        df.to_csv(csv, index=False, float_format="%.10g")
        written.append(csv)
        if png:
            written.append(render(name, df, out_dir / f"{prefix}{name}.png", eq))
    return written
