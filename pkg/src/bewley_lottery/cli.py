"""
Command-line interface: ``bewley-lottery {solve,simulate,regress,compare,experiment,report}``.

Outputs go to ``--out`` or, if that is not given, to the directory named by
``BEWLEY_LOTTERY_OUT`` (default ``./out``). Exit codes: 0 success,
2 non-convergence, 3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd

from . import __version__
from . import io as bio
from .econometrics import RegressionError, run_paper_regressions
from .equilibrium import BracketError, compare_steady_states, solve
from .household import NonConvergenceError
from .model import AssetGrid, ModelError, Numerics, default_lottery
from .simulate import PANEL_COLUMNS, SimConfig, run_simulation

ENV_OUT = "BEWLEY_LOTTERY_OUT"
EXIT_OK, EXIT_NONCONVERGENCE, EXIT_INVALID = 0, 2, 3
DESK_ASSETS, DESK_FIRM = 200, 300

log = logging.getLogger("bewley_lottery")


class InputError(ValueError):
    pass


# --------------------------------------------------------------------------
# run manifest


def _timestamp():
    # honour SOURCE_DATE_EPOCH so manifests can be made reproducible too
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return t.isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance record written next to every command's outputs.

    ``config_hash`` is the hash of the configuration file as written for
    ``solve`` and ``experiment`` (grid overrides are recorded in ``argv``),
    and the hash of the solved configuration stored in the checkpoint for
    ``simulate`` and ``report``.
    """

    command: str
    argv: list
    config_path: str | None = None
    config_hash: str | None = None
    seed: int | None = None
    started: str = field(default_factory=_timestamp)
    finished: str | None = None
    outputs: dict = field(default_factory=dict)

    def add(self, path):
        path = Path(path)
        self.outputs[path.name] = bio.file_sha256(path)
        return path

    def write(self, out_dir):
        self.finished = _timestamp()
        path = Path(out_dir) / f"manifest_{self.command}.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path


# --------------------------------------------------------------------------
# helpers


def _out_dir(args):
    out = Path(args.out or os.environ.get(ENV_OUT) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(config, args):
    num, assets = config.numerics, config.assets
    if getattr(args, "desk", False):
        assets = AssetGrid(assets.a_min, assets.a_max, DESK_ASSETS, assets.spacing)
        num = Numerics(**{**num.__dict__, "n_k": DESK_FIRM, "n_n": DESK_FIRM})
    if getattr(args, "asset_points", None):
        assets = AssetGrid(assets.a_min, assets.a_max, args.asset_points, assets.spacing)
    if getattr(args, "firm_points", None):
        num = Numerics(**{**num.__dict__, "n_k": args.firm_points, "n_n": args.firm_points})
    if getattr(args, "tolerance", None) is not None:
        num = Numerics(**{**num.__dict__, "eq_tol": args.tolerance})
    return config.replace(assets=assets, numerics=num)


def _load_config(args):
    """Return the config with overrides applied and the config as written."""
    config = source = bio.load_config(args.config)
    economy = getattr(args, "economy", None)
    if economy == "benchmark" and config.has_lottery:
        config = config.replace(lottery=None, name="benchmark")
    elif economy == "lottery" and not config.has_lottery:
        config = config.with_lottery(default_lottery()).replace(name="lottery")
    return _apply_overrides(config, args), source


def _set_threads(n):
    if n is None:
        return
    import numba

    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise InputError(f"--threads must lie in [1, {numba.config.NUMBA_NUM_THREADS}]")
    numba.set_num_threads(n)


def _load_checkpoint(path, config_path=None):
    path = Path(path)
    if not path.exists():
        raise InputError(f"checkpoint {str(path)!r} not found")
    eq, meta = bio.load_checkpoint(path, with_meta=True)
    if config_path is not None:
        source = bio.load_config(config_path)
        want, have = bio.config_hash(source), meta.get("source_config_hash")
        if want != have:
            diff = _config_diff(bio.config_to_dict(source), meta.get("source_config", {}))
            raise InputError(f"checkpoint was solved from config {str(have)[:12]}, but "
                             f"{config_path} hashes to {want[:12]}; differing fields: "
                             f"{', '.join(diff) or 'none'}")
    return eq


def _config_diff(a, b, prefix=""):
    out = []
    for key in sorted(set(a) | set(b)):
        va, vb = a.get(key), b.get(key)
        if isinstance(va, dict) and isinstance(vb, dict):
            out += _config_diff(va, vb, f"{prefix}{key}.")
        elif va != vb:
            out.append(f"{prefix}{key}")
    return out


def _write_equilibrium(eq, out, manifest, source, prefix=""):
    ck = out / f"{prefix}equilibrium.npz"
    bio.save_checkpoint(eq, ck, source_config=source)
    manifest.add(ck)
    manifest.add(bio.write_text(out / f"{prefix}moments.csv", bio.moments_csv(eq)))
    manifest.add(bio.write_text(out / f"{prefix}theta_table.csv", bio.theta_table_csv(eq.moments)))
    if eq.config.has_lottery:
        manifest.add(bio.write_text(out / f"{prefix}leverage_by_prize.csv",
                                    bio.leverage_csv(eq.moments)))
    title = f"Model moments ({eq.config.name})"
    manifest.add(bio.write_text(out / f"{prefix}moments.txt", bio.moments_text(eq, title)))
    return ck


def _write_panel(panel, eq, out, manifest, prefix=""):
    path = out / f"{prefix}panel.csv"
    panel.records.loc[:, list(PANEL_COLUMNS)].to_csv(path, index=False, float_format="%.12g")
    manifest.add(path)
    summ = out / f"{prefix}panel_summary.csv"
    panel.summary.to_csv(summ, index=False, float_format="%.12g")
    manifest.add(summ)
    meta = {"seed": panel.sim.seed, "n_households": panel.sim.n_households,
            "n_periods": panel.sim.n_periods, "config_hash": bio.config_hash(eq.config),
            "columns": list(PANEL_COLUMNS), "version": __version__}
    meta_path = out / f"{prefix}panel_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    manifest.add(meta_path)
    return path


def _write_regressions(results, out, manifest, prefix="", title=None):
    manifest.add(bio.write_text(out / f"{prefix}regression.csv", bio.regression_csv(results)))
    kw = {"title": title} if title else {}
    manifest.add(bio.write_text(out / f"{prefix}regression.txt", bio.regression_text(results, **kw)))


def _read_panel(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"panel {str(path)!r} not found")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise InputError(f"panel {str(path)!r} is empty") from None
    if len(df) == 0:
        raise InputError(f"panel {str(path)!r} has no rows")
    missing = [c for c in ("t", "a_lag", "psi", "occupation", "c", "k") if c not in df.columns]
    if missing:
        raise InputError(f"panel {str(path)!r} is missing columns {missing}")
    return df


# --------------------------------------------------------------------------
# commands


def _solve(config, args, out, manifest, prefix=""):
    """Solve, writing a resumable checkpoint after every lottery iteration."""
    if not config.has_lottery:
        return solve(config)
    progress = out / f"{prefix}progress.npz"
    bracket = None
    if getattr(args, "resume", None):
        prev = _load_checkpoint(args.resume)
        if prev.config.lottery is None or prev.config.replace(lottery=None) != config.replace(lottery=None):
            raise InputError(f"cannot resume from {args.resume}: it was solved with a different "
                             "configuration")
        config = config.with_lottery(prev.config.lottery)
        bracket = (0.97 * prev.K_over_L, 1.03 * prev.K_over_L)

    def save(eq):
        bio.save_checkpoint(eq, progress)

    eq = solve(config, bracket=bracket, callback=save)
    manifest.add(progress)
    return eq


def cmd_solve(args):
    config, source = _load_config(args)
    out = _out_dir(args)
    m = RunManifest("solve", sys.argv[1:], str(args.config), bio.config_hash(source))
    t0 = time.perf_counter()
    eq = _solve(config, args, out, m)
    _write_equilibrium(eq, out, m, source)
    m.write(out)
    print(bio.moments_text(eq, f"Model moments ({config.name})"), end="")
    print(f"solved in {time.perf_counter() - t0:.1f}s; outputs in {out}")
    return EXIT_OK


def cmd_simulate(args):
    eq = _load_checkpoint(args.checkpoint, args.config)
    out = _out_dir(args)
    sim = SimConfig(n_households=args.households, n_periods=args.periods, seed=args.seed)
    m = RunManifest("simulate", sys.argv[1:], args.config, bio.config_hash(eq.config), args.seed)
    panel = run_simulation(sim, eq)
    _write_panel(panel, eq, out, m)
    m.write(out)
    last = panel.summary.iloc[-1]
    print(f"simulated {sim.n_households} households for {sim.n_periods} periods; "
          f"mean assets {last['mean_assets']:.4f}, "
          f"entrepreneurs {100 * last['entrepreneur_fraction']:.2f}%")
    return EXIT_OK


def cmd_regress(args):
    df = _read_panel(args.panel)
    out = _out_dir(args)
    m = RunManifest("regress", sys.argv[1:])
    results = run_paper_regressions(df, include_intercept=args.intercept)
    _write_regressions(results, out, m)
    m.write(out)
    print(bio.regression_text(results), end="")
    return EXIT_OK


def cmd_compare(args):
    a = _load_checkpoint(args.checkpoint_a)
    b = _load_checkpoint(args.checkpoint_b)
    ga, gb = a.distribution.mass.shape[:4], b.distribution.mass.shape[:4]
    if ga != gb or a.config.assets != b.config.assets:
        raise InputError(f"checkpoints have incompatible grids: {ga} with {a.config.assets} "
                         f"vs {gb} with {b.config.assets}")
    out = _out_dir(args)
    m = RunManifest("compare", sys.argv[1:])
    deltas = compare_steady_states(a, b)
    m.add(bio.write_text(out / "compare.csv", bio.compare_csv(deltas)))
    text = bio.compare_text(deltas, a.config.name, b.config.name)
    m.add(bio.write_text(out / "compare.txt", text))
    m.write(out)
    print(text, end="")
    return EXIT_OK


def cmd_experiment(args):
    """Solve, simulate and regress one (alternative) lottery structure."""
    config, source = _load_config(args)
    if not config.has_lottery:
        raise InputError("experiment needs a configuration with a lottery section")
    out = _out_dir(args)
    m = RunManifest("experiment", sys.argv[1:], str(args.config), bio.config_hash(source), args.seed)
    eq = _solve(config, args, out, m)
    _write_equilibrium(eq, out, m, source)
    print(bio.moments_text(eq, f"Model moments ({config.name})"), end="")
    for rep in range(args.replications):
        seed = args.seed + rep
        prefix = f"seed{seed}_" if args.replications > 1 else ""
        panel = run_simulation(SimConfig(args.households, args.periods, seed), eq)
        _write_panel(panel, eq, out, m, prefix)
        results = run_paper_regressions(panel)
        title = f"Regression with {config.name} prizes (seed {seed})"
        _write_regressions(results, out, m, prefix, title)
        print(bio.regression_text(results, title), end="")
    m.write(out)
    return EXIT_OK


def cmd_report(args):
    from .plotting import write_figures

    eq = _load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    m = RunManifest("report", sys.argv[1:], None, bio.config_hash(eq.config))
    text = bio.moments_text(eq, f"Model moments ({eq.config.name})")
    m.add(bio.write_text(out / "report.txt", text))
    m.add(bio.write_text(out / "moments.csv", bio.moments_csv(eq)))
    m.add(bio.write_text(out / "theta_table.csv", bio.theta_table_csv(eq.moments)))
    for path in write_figures(eq, out, png=not args.no_png):
        m.add(path)
    m.write(out)
    print(text, end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p, threads=True):
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./out)")
    if threads:
        p.add_argument("--threads", type=int, help="number of worker threads")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _scale(p):
    p.add_argument("--tolerance", type=float, help="relative tolerance on the K/L fixed point")
    p.add_argument("--desk", action="store_true",
                   help=f"reduced grids ({DESK_ASSETS} asset points, {DESK_FIRM}-point k/n grids)")
    p.add_argument("--asset-points", type=int, help="override the number of asset grid points")
    p.add_argument("--firm-points", type=int, help="override the k and n grid sizes")


def _panel_opts(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--households", type=int, default=400_000)
    p.add_argument("--periods", type=int, default=200)


def build_parser():
    parser = argparse.ArgumentParser(prog="bewley-lottery", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a stationary equilibrium")
    p.add_argument("config", help=f"YAML file or preset ({', '.join(bio.PRESETS)})")
    p.add_argument("--economy", choices=("benchmark", "lottery"),
                   help="drop or add the lottery (default: as configured)")
    p.add_argument("--resume", metavar="CHECKPOINT",
                   help="continue the ticket-price iteration from a progress checkpoint")
    _common(p)
    _scale(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="simulate a household panel from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="refuse to run unless the checkpoint was solved with this config")
    _panel_opts(p)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("regress", help="run the occupation, consumption and investment regressions")
    p.add_argument("panel")
    p.add_argument("--intercept", action="store_true", help="add a constant to each regression")
    _common(p, threads=False)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("compare", help="percentage changes in moments between two checkpoints")
    p.add_argument("checkpoint_a")
    p.add_argument("checkpoint_b")
    _common(p, threads=False)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("experiment", help="solve, simulate and regress one lottery structure")
    p.add_argument("config")
    _panel_opts(p)
    p.add_argument("--replications", type=int, default=1,
                   help="number of panels, with seeds seed, seed+1, ...")
    _common(p)
    _scale(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="tables, plot-data CSVs and figures from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--no-png", action="store_true", help="write plot data only")
    _common(p, threads=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
    try:
        _set_threads(getattr(args, "threads", None))
        return args.func(args)
    except (NonConvergenceError, BracketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", None)
        if trace:
            print(f"last residuals: {json.dumps(trace[-5:], default=float)}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ModelError, RegressionError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
