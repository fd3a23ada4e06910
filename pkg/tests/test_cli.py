import json

import numpy as np
import pandas as pd
import pytest
import yaml

from bewley_lottery import io as bio
from bewley_lottery.cli import ENV_OUT, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_OK, main

SMALL = ["--asset-points", "40", "--firm-points", "40", "--tolerance", "1e-2"]


def _dump(cfg_dict, path):
    path.write_text(yaml.safe_dump(cfg_dict, sort_keys=False))
    return str(path)


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """Small-grid lottery and benchmark solves shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["solve", "lottery", *SMALL, "--out", str(root / "lot")]) == EXIT_OK
    assert main(["solve", "lottery", "--economy", "benchmark", *SMALL,
                 "--out", str(root / "bench")]) == EXIT_OK
    assert main(["simulate", str(root / "lot" / "equilibrium.npz"), "--households", "20000",
                 "--periods", "20", "--seed", "4", "--out", str(root / "sim")]) == EXIT_OK
    return root


class TestSolve:
    def test_outputs(self, runs):
        names = {p.name for p in (runs / "lot").iterdir()}
        assert {"equilibrium.npz", "moments.csv", "theta_table.csv", "leverage_by_prize.csv",
                "moments.txt", "progress.npz", "manifest_solve.json"} <= names
        assert "leverage_by_prize.csv" not in {p.name for p in (runs / "bench").iterdir()}

    def test_manifest_hashes_outputs(self, runs):
        man = json.loads((runs / "lot" / "manifest_solve.json").read_text())
        for name, digest in man["outputs"].items():
            assert bio.file_sha256(runs / "lot" / name) == digest
        assert man["config_hash"] == bio.config_hash(bio.load_config("lottery"))

    def test_checkpoint_round_trip(self, runs):
        eq = bio.load_checkpoint(runs / "lot" / "equilibrium.npz")
        assert eq.config.has_lottery and eq.config.assets.n == 40
        assert eq.distribution.total == pytest.approx(1.0, abs=1e-9)

    def test_rerun_is_byte_identical(self, runs, tmp_path):
        assert main(["solve", "lottery", "--economy", "benchmark", *SMALL,
                     "--out", str(tmp_path)]) == EXIT_OK
        for name in ("equilibrium.npz", "moments.csv", "theta_table.csv", "moments.txt"):
            assert (tmp_path / name).read_bytes() == (runs / "bench" / name).read_bytes(), name

    def test_resume_from_progress(self, runs, tmp_path):
        prog = runs / "lot" / "progress.npz"
        assert main(["solve", "lottery", *SMALL, "--resume", str(prog),
                     "--out", str(tmp_path)]) == EXIT_OK
        a = bio.load_checkpoint(tmp_path / "equilibrium.npz")
        b = bio.load_checkpoint(runs / "lot" / "equilibrium.npz")
        assert a.tau == pytest.approx(b.tau, rel=2e-2)

    def test_env_var_sets_output_directory(self, monkeypatch, tmp_path):
        monkeypatch.setenv(ENV_OUT, str(tmp_path / "env"))
        assert main(["solve", "benchmark", *SMALL]) == EXIT_OK
        assert (tmp_path / "env" / "equilibrium.npz").exists()


class TestExitCodes:
    def test_unknown_config_field(self, tmp_path, capsys):
        d = bio.config_to_dict(bio.load_config("benchmark"))
        d["tax"]["tau_x"] = 0.1
        rc = main(["solve", _dump(d, tmp_path / "bad.yaml"), "--out", str(tmp_path)])
        assert rc == EXIT_INVALID
        assert "tau_x" in capsys.readouterr().err

    def test_unbalanced_lottery(self, tmp_path, capsys):
        d = bio.config_to_dict(bio.load_config("small_prize"))
        d["lottery"] = {"tau": 0.0292, "prizes": [0.0, 10.0], "probs": [0.995, 0.005]}
        rc = main(["solve", _dump(d, tmp_path / "unbal.yaml"), "--out", str(tmp_path)])
        assert rc == EXIT_INVALID
        assert "balance" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_nonconvergence(self, tmp_path, capsys):
        d = bio.config_to_dict(bio.load_config("benchmark"))
        d["numerics"]["vfi_max_iter"] = 1
        rc = main(["solve", _dump(d, tmp_path / "nc.yaml"), *SMALL, "--out", str(tmp_path)])
        assert rc == EXIT_NONCONVERGENCE
        assert "error" in capsys.readouterr().err

    def test_bisection_cap(self, tmp_path, capsys):
        d = bio.config_to_dict(bio.load_config("benchmark"))
        d["numerics"]["eq_max_iter"] = 2
        rc = main(["solve", _dump(d, tmp_path / "cap.yaml"), "--asset-points", "40",
                   "--firm-points", "40", "--tolerance", "1e-12", "--out", str(tmp_path)])
        assert rc == EXIT_NONCONVERGENCE
        assert "last residuals" in capsys.readouterr().err

    def test_empty_panel(self, tmp_path):
        (tmp_path / "empty.csv").write_text("")
        assert main(["regress", str(tmp_path / "empty.csv"), "--out", str(tmp_path)]) == EXIT_INVALID
        (tmp_path / "header.csv").write_text("t,a_lag,psi,occupation,c,k\n")
        assert main(["regress", str(tmp_path / "header.csv"), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_panel_missing_columns(self, runs, tmp_path, capsys):
        df = pd.read_csv(runs / "sim" / "panel.csv").drop(columns=["k"])
        df.to_csv(tmp_path / "p.csv", index=False)
        assert main(["regress", str(tmp_path / "p.csv"), "--out", str(tmp_path)]) == EXIT_INVALID
        assert "'k'" in capsys.readouterr().err

    def test_rank_deficient_panel(self, runs, tmp_path, capsys):
        df = pd.read_csv(runs / "sim" / "panel.csv").assign(psi=0.0)
        df.to_csv(tmp_path / "p.csv", index=False)
        assert main(["regress", str(tmp_path / "p.csv"), "--out", str(tmp_path)]) == EXIT_INVALID
        assert "psi" in capsys.readouterr().err

    def test_bad_thread_count(self, tmp_path):
        assert main(["solve", "benchmark", "--threads", "0", "--out", str(tmp_path)]) == EXIT_INVALID

    def test_missing_checkpoint(self, tmp_path):
        assert main(["report", str(tmp_path / "none.npz"), "--out", str(tmp_path)]) == EXIT_INVALID


class TestSimulate:
    def test_panel_files(self, runs):
        df = pd.read_csv(runs / "sim" / "panel.csv")
        meta = json.loads((runs / "sim" / "panel_meta.json").read_text())
        assert list(df.columns) == meta["columns"] and meta["seed"] == 4
        # full records are kept for the last two periods only
        assert len(df) == 20000 * 2 and set(df["t"]) == {19, 20}
        summ = pd.read_csv(runs / "sim" / "panel_summary.csv")
        assert len(summ) == 20

    def test_same_seed_same_bytes(self, runs, tmp_path):
        assert main(["simulate", str(runs / "lot" / "equilibrium.npz"), "--households", "20000",
                     "--periods", "20", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
        for name in ("panel.csv", "panel_summary.csv", "panel_meta.json"):
            assert (tmp_path / name).read_bytes() == (runs / "sim" / name).read_bytes()

    def test_config_mismatch_is_refused(self, runs, tmp_path, capsys):
        d = bio.config_to_dict(bio.load_config("lottery"))
        d["preferences"]["beta"] = 0.95
        rc = main(["simulate", str(runs / "lot" / "equilibrium.npz"), "--config",
                   _dump(d, tmp_path / "other.yaml"), "--households", "10", "--periods", "2",
                   "--out", str(tmp_path)])
        assert rc == EXIT_INVALID
        assert "preferences.beta" in capsys.readouterr().err

    def test_matching_config_is_accepted(self, runs, tmp_path):
        assert main(["simulate", str(runs / "lot" / "equilibrium.npz"), "--config", "lottery",
                     "--households", "10", "--periods", "2", "--out", str(tmp_path)]) == EXIT_OK


class TestRegressCompareReport:
    def test_regress(self, runs, tmp_path, capsys):
        assert main(["regress", str(runs / "sim" / "panel.csv"), "--out", str(tmp_path)]) == EXIT_OK
        table = pd.read_csv(tmp_path / "regression.csv")
        assert set(table["regression"]) == {"Entrepreneur", "Consumption", "Investment"}
        assert "Standard errors in parentheses" in capsys.readouterr().out

    def test_regress_with_intercept(self, runs, tmp_path):
        assert main(["regress", str(runs / "sim" / "panel.csv"), "--intercept",
                     "--out", str(tmp_path)]) == EXIT_OK
        assert "const" in (tmp_path / "regression.csv").read_text()

    def test_self_compare_is_zero(self, runs, tmp_path):
        ck = str(runs / "lot" / "equilibrium.npz")
        assert main(["compare", ck, ck, "--out", str(tmp_path)]) == EXIT_OK
        df = pd.read_csv(tmp_path / "compare.csv")
        assert np.all(df["pct_change"] == 0)

    def test_compare_economies(self, runs, tmp_path):
        assert main(["compare", str(runs / "lot" / "equilibrium.npz"),
                     str(runs / "bench" / "equilibrium.npz"), "--out", str(tmp_path)]) == EXIT_OK
        assert len(pd.read_csv(tmp_path / "compare.csv")) >= 4

    def test_compare_incompatible_grids(self, runs, tmp_path, capsys):
        assert main(["solve", "benchmark", "--asset-points", "30", "--firm-points", "40",
                     "--tolerance", "1e-2", "--out", str(tmp_path / "b30")]) == EXIT_OK
        rc = main(["compare", str(runs / "bench" / "equilibrium.npz"),
                   str(tmp_path / "b30" / "equilibrium.npz"), "--out", str(tmp_path)])
        assert rc == EXIT_INVALID
        assert "incompatible" in capsys.readouterr().err

    def test_report_writes_tables_and_figures(self, runs, tmp_path):
        assert main(["report", str(runs / "lot" / "equilibrium.npz"), "--out", str(tmp_path)]) == EXIT_OK
        csvs = sorted(p.stem for p in tmp_path.glob("fig*.csv"))
        pngs = sorted(p.stem for p in tmp_path.glob("fig*.png"))
        assert csvs == pngs and len(csvs) == 5
        assert (tmp_path / "report.txt").exists()

    def test_report_is_byte_identical(self, runs, tmp_path):
        for sub in ("a", "b"):
            assert main(["report", str(runs / "lot" / "equilibrium.npz"),
                         "--out", str(tmp_path / sub)]) == EXIT_OK
        for p in (tmp_path / "a").iterdir():
            if p.name.startswith("manifest"):
                continue
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name

    def test_benchmark_report_skips_lottery_figures(self, runs, tmp_path):
        assert main(["report", str(runs / "bench" / "equilibrium.npz"), "--no-png",
                     "--out", str(tmp_path)]) == EXIT_OK
        assert len(list(tmp_path.glob("fig*.csv"))) == 3
        assert not list(tmp_path.glob("*.png"))


@pytest.mark.parametrize("preset", ["lottery", "small_prize", "large_prize"])
def test_presets_pass_balance_check(preset):
    spec = bio.load_config(preset).lottery
    assert abs(spec.expected_payout() - spec.tau) <= 5e-4 * spec.tau
