"""
Configuration files, equilibrium checkpoints and report writers.

Checkpoints are zip archives of ``.npy`` members written with fixed
timestamps so identical inputs give byte-identical files; ``numpy.load``
reads them like any ``.npz``.
"""

from __future__ import annotations

import hashlib
import io as _io
import json
import zipfile
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .distribution import Distribution
from .equilibrium import Aggregates, Equilibrium
from .household import FirmSolution, PolicySet, Prices, ValueTables
from .model import (AssetGrid, CreditSector, LotterySpec, MarkovChain, ModelConfig, ModelError,
                    Numerics, Preferences, TaxSystem, Technology)

CHECKPOINT_VERSION = 1
PRESETS = ("benchmark", "lottery", "small_prize", "large_prize")


class ConfigError(ModelError):
    pass


# --------------------------------------------------------------------------
# configuration


def _section(raw, name, cls):
    data = raw.get(name) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None
    except ModelError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def _lottery(raw):
    data = raw.get("lottery")
    if data is None:
        return None
    try:
        if "unit" in data:
            spec = LotterySpec.from_relative(data["tau"], data["unit"], data["multipliers"],
                                             data["win_probs"])
        else:
            spec = LotterySpec(tau=data["tau"], prizes=tuple(data["prizes"]),
                               probs=tuple(data["probs"]))
    except KeyError as exc:
        raise ConfigError(f"section 'lottery' is missing field {exc.args[0]!r}") from None
    except ModelError as exc:
        raise ConfigError(f"section 'lottery': {exc}") from None
    tol = float(data.get("balance_tolerance", 5e-4))
    if abs(spec.imbalance()) > tol:
        raise ConfigError(
            f"lottery is unbalanced: expected payout {spec.expected_payout():.6f} vs ticket "
            f"price {spec.tau:.6f} (imbalance {spec.imbalance():+.2e}, tolerance {tol:g})")
    return spec


def _chain(raw, name, default):
    data = raw.get(name)
    if data is None:
        return default
    try:
        try:
            return MarkovChain(grid=tuple(data["grid"]), P=tuple(map(tuple, data["P"])))
        except ModelError:
            # rows printed at finite precision are renormalised
            return MarkovChain.from_rows(data["grid"], data["P"])
    except KeyError as exc:
        raise ConfigError(f"section {name!r} is missing field {exc.args[0]!r}") from None
    except ModelError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of sections")
    known = {"name", "preferences", "technology", "tax", "credit", "lottery", "eta_chain",
             "theta_chain", "assets", "numerics", "revenue_share", "timing"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration sections {sorted(unknown)}")
    base = ModelConfig()
    try:
        return ModelConfig(
            name=str(raw.get("name", "custom")),
            preferences=_section(raw, "preferences", Preferences),
            technology=_section(raw, "technology", Technology),
            tax=_section(raw, "tax", TaxSystem),
            credit=_section(raw, "credit", CreditSector),
            lottery=_lottery(raw),
            eta_chain=_chain(raw, "eta_chain", base.eta_chain),
            theta_chain=_chain(raw, "theta_chain", base.theta_chain),
            assets=_section(raw, "assets", AssetGrid),
            numerics=_section(raw, "numerics", Numerics),
            revenue_share=float(raw.get("revenue_share", base.revenue_share)),
            timing=str(raw.get("timing", base.timing)),
        )
    except ModelError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def config_to_dict(config):
    out = {
        "name": config.name,
        "preferences": asdict(config.preferences),
        "technology": asdict(config.technology),
        "tax": asdict(config.tax),
        "credit": asdict(config.credit),
        "eta_chain": {"grid": list(config.eta_chain.grid), "P": [list(r) for r in config.eta_chain.P]},
        "theta_chain": {"grid": list(config.theta_chain.grid),
                        "P": [list(r) for r in config.theta_chain.P]},
        "assets": asdict(config.assets),
        "numerics": asdict(config.numerics),
        "revenue_share": config.revenue_share,
        "timing": config.timing,
    }
    if config.lottery is not None:
        out["lottery"] = {"tau": config.lottery.tau, "prizes": list(config.lottery.prizes),
                          "probs": list(config.lottery.probs)}
    return out


def config_hash(config):
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def preset_path(name):
    return resources.files("bewley_lottery") / "configs" / f"{name}.yaml"


def load_config(path_or_preset):
    """Read a YAML configuration file or one of the shipped preset names."""
    p = str(path_or_preset)
    if p in PRESETS:
        text = preset_path(p).read_text()
    else:
        path = Path(p)
        if not path.exists():
            raise ConfigError(f"configuration file {p!r} not found (presets: {', '.join(PRESETS)})")
        text = path.read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {p!r}: {exc}") from None
    return config_from_dict(raw)


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# checkpoints


def _write_zip(path, members):
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(members):
            buf = _io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(members[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def _json_array(obj):
    return np.frombuffer(json.dumps(obj, sort_keys=True, default=float).encode(), dtype=np.uint8)


def _from_json_array(arr):
    return json.loads(bytes(np.asarray(arr, dtype=np.uint8)).decode())


def save_checkpoint(eq, path, source_config=None):
    """Write prices, value tables, policies and the distribution to ``path``.

    ``source_config`` is the configuration as read from file, before grid
    overrides and before the ticket price was solved for; its hash lets a
    later command check that a checkpoint belongs to a given config file.
    """
    source_config = source_config or eq.config
    pol, firm = eq.policies, eq.policies.firm
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": config_to_dict(eq.config),
        "config_hash": config_hash(eq.config),
        "source_config": config_to_dict(source_config),
        "source_config_hash": config_hash(source_config),
        "prices": {"r": eq.prices.r, "w": eq.prices.w},
        "K_over_L": eq.K_over_L,
        "gap": eq.gap,
        "timing": pol.timing,
        "infeasible": pol.infeasible,
        "aggregates": eq.aggregates.as_dict(),
        "trace": eq.trace,
        "tau_trace": eq.tau_trace,
    }
    members = {
        "meta": _json_array(meta),
        "VW": eq.values.VW, "VE": eq.values.VE,
        "savings_idx": pol.savings_idx, "consumption": pol.consumption,
        "cash": pol.cash, "income": pol.income, "occ_next": pol.occ_next,
        "k_grid": firm.k_grid, "n_grid": firm.n_grid, "k": firm.k, "n": firm.n,
        "firm_income": firm.income, "pi": firm.pi,
        "mass": eq.distribution.mass,
    }
    if pol.occupation is not None:
        members["occupation"] = pol.occupation
    _write_zip(path, members)


def load_checkpoint(path, with_meta=False):
    """Rebuild an :class:`Equilibrium` from a checkpoint written by :func:`save_checkpoint`."""
    from .equilibrium import compute_moments

    with np.load(path, allow_pickle=False) as z:
        data = {k: z[k] for k in z.files}
    meta = _from_json_array(data["meta"])
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint version {meta.get('version')} is not supported")
    config = config_from_dict(meta["config"])
    if config_hash(config) != meta["config_hash"]:
        raise ConfigError(f"checkpoint {str(path)!r} is corrupt: stored config hash "
                          f"{meta['config_hash'][:12]} vs {config_hash(config)[:12]}")
    firm = FirmSolution(k_grid=data["k_grid"], n_grid=data["n_grid"], k=data["k"], n=data["n"],
                        income=data["firm_income"], pi=data["pi"])
    pol = PolicySet(savings_idx=data["savings_idx"], consumption=data["consumption"],
                    cash=data["cash"], income=data["income"], occ_next=data["occ_next"],
                    occupation=data.get("occupation"), firm=firm, timing=meta["timing"],
                    infeasible=meta["infeasible"])
    agg = dict(meta["aggregates"])
    agg.pop("productive_capital", None)
    eq = Equilibrium(config=config, prices=Prices(**meta["prices"]), K_over_L=meta["K_over_L"],
                     values=ValueTables(VW=data["VW"], VE=data["VE"]), policies=pol,
                     distribution=Distribution(data["mass"]), aggregates=Aggregates(**agg),
                     gap=meta["gap"], trace=meta["trace"], tau_trace=meta["tau_trace"])
    eq.moments = compute_moments(eq)
    return (eq, meta) if with_meta else eq


# --------------------------------------------------------------------------
# tables


def _fmt(x, pct=False, digits=2):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    return f"{100 * x:.{digits}f}%" if pct else f"{x:.{digits}f}"


def _table(headers, rows, title=None):
    cols = list(zip(*([headers] + rows))) if rows else [[h] for h in headers]
    widths = [max(len(str(c)) for c in col) for col in cols]
    rule = "-" * (sum(widths) + 3 * (len(widths) - 1))
    lines = [title] if title else []
    lines += [rule, " | ".join(str(h).ljust(w) for h, w in zip(headers, widths)), rule]
    for row in rows:
        lines.append(" | ".join(str(c).rjust(w) if i else str(c).ljust(w)
                                for i, (c, w) in enumerate(zip(row, widths))))
    lines.append(rule)
    return "\n".join(lines) + "\n"


def _csv(headers, rows):
    def cell(c):
        if isinstance(c, float):
            return repr(c) if np.isfinite(c) else ""
        s = str(c)
        return f'"{s}"' if ("," in s or '"' in s) else s
    return "\n".join([",".join(headers)] + [",".join(cell(c) for c in r) for r in rows]) + "\n"


def moments_csv(eq):
    m = eq.moments
    rows = [(label, float(v)) for label, v, _ in m.summary()]
    rows += [("interest rate", eq.prices.r), ("wage", eq.prices.w), ("K/L corporate", eq.K_over_L),
             ("ticket price", eq.tau),
             ("ticket price/output", eq.tau / m.output)]
    return _csv(["moment", "value"], rows)


def theta_table_csv(moments):
    keys = ["theta", "population_share", "entrepreneur_share", "mean_investment",
            "mean_assets", "mean_leverage"]
    return _csv(keys, [tuple(float(r[k]) for k in keys) for r in moments.theta_table])


def leverage_csv(moments):
    return _csv(["prize", "mean_leverage"],
                [(float(r["prize"]), float(r["mean_leverage"])) for r in moments.leverage_by_prize])


def moments_text(eq, title="Model moments"):
    m = eq.moments
    rows = [(label, _fmt(v, pct)) for label, v, pct in m.summary()]
    rows += [("interest rate", _fmt(eq.prices.r, True)), ("wage", _fmt(eq.prices.w, digits=4))]
    if eq.config.has_lottery:
        rows += [("ticket price", _fmt(eq.tau, digits=4)),
                 ("ticket price/output", _fmt(eq.tau / m.output, True))]
    out = _table(["", "Model"], rows, title)
    t_rows = [(f"{r['theta']:.3f}", _fmt(r["population_share"], True),
               _fmt(r["entrepreneur_share"], True), _fmt(r["mean_investment"]),
               _fmt(r["mean_assets"]), _fmt(r["mean_leverage"], True)) for r in m.theta_table]
    out += "\n" + _table(["theta", "% in pop.", "% entrep.", "avg. investment", "avg. assets",
                          "avg. leverage ratio"], t_rows, "Entrepreneurial activities by ability")
    if len(m.leverage_by_prize) > 1:
        names = ["zero", "small", "medium", "large"]
        heads = ["prize"] + [names[i] if len(m.leverage_by_prize) == 4 else f"{r['prize']:.2f}"
                             for i, r in enumerate(m.leverage_by_prize)]
        out += "\n" + _table(heads, [["ave. leverage"] + [_fmt(r["mean_leverage"], True)
                                                          for r in m.leverage_by_prize]],
                             "Leverage across prizes")
    return out


def compare_csv(deltas):
    return _csv(["moment", "a", "b", "pct_change"],
                [(d["moment"], float(d["a"]), float(d["b"]), float(d["pct_change"])) for d in deltas])


def compare_text(deltas, label_a="Lottery", label_b="Benchmark"):
    rows = [(d["moment"], _fmt(d["a"], d["is_share"]), _fmt(d["b"], d["is_share"]),
             f"{d['pct_change']:+.2f}%") for d in deltas]
    return _table(["", label_a, label_b, "% change"], rows, "Steady state moments")


def regression_csv(results):
    rows = []
    for name, res in results.items():
        for i, var in enumerate(res.names):
            rows.append((name, var, float(res.coef[i]), float(res.se[i]), float(res.tstat[i]),
                         float(res.pvalue[i]), res.stars(var), res.nobs, float(res.r2)))
    return _csv(["regression", "variable", "coef", "se", "t", "p", "stars", "N", "R2"], rows)


def regression_text(results, title="Regression: entrepreneur decision, consumption, and investment"):
    names = list(results)
    labels = {"psi": "prize, psi", "a_lag": "wealth, a", "const": "constant"}
    variables = []
    for res in results.values():
        for v in res.names:
            if v not in variables:
                variables.append(v)
    rows = []
    for v in variables:
        coef_row, se_row = [labels.get(v, v)], [""]
        for n in names:
            res = results[n]
            if v in res.names:
                c, s, _ = res[v]
                coef_row.append(f"{c:.3f}{res.stars(v)}")
                se_row.append(f"({s:.3f})")
            else:
                coef_row += [""]
                se_row += [""]
        rows += [coef_row, se_row]
    rows.append(["N"] + [str(results[n].nobs) for n in names])
    rows.append(["R^2"] + [f"{results[n].r2:.3f}" for n in names])
    out = _table([""] + names, rows, title)
    return out + "Standard errors in parentheses, * p<0.05, ** p<0.01, *** p<0.001\n"


def write_text(path, text):
    Path(path).write_text(text)
    return Path(path)
