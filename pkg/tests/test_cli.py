import json
import shutil

import numpy as np
import pytest

import oracles
from conftest import make_blobs
from mkclust.cli import main
from mkclust.io import load_kernel


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    """Small three-blob dataset on disk: features.csv + labels.csv."""
    d = tmp_path_factory.mktemp("dataset")
    rows, truth = make_blobs(seed=3)
    keep = np.r_[0:8, 50:58, 100:108]
    np.savetxt(d / "features.csv", rows[keep], delimiter=",", fmt="%.17g")
    (d / "labels.csv").write_text("".join(f"{t}\n" for t in truth[keep]))
    return d


@pytest.fixture(scope="module")
def bank_dir(dataset_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("bank")
    code = main(
        [
            "kernels",
            "build",
            "--features",
            str(dataset_dir / "features.csv"),
            "--out",
            str(d),
        ]
    )
    assert code == 0
    return d


def write_config(path, **fields):
    path.write_text(json.dumps(fields))
    return str(path)


def kcd_config(dataset_dir, out_dir, **overrides):
    fields = dict(
        k=3,
        algorithms=["kcd-mkkm"],
        features=str(dataset_dir / "features.csv"),
        labels=str(dataset_dir / "labels.csv"),
        alpha_grid=[0.1],
        beta_grid=[0.03125],
        repetitions=3,
        master_seed=0,
        out_dir=str(out_dir),
        dataset_name="blobs",
    )
    fields.update(overrides)
    return fields


def stdout_value(captured, prefix):
    for line in captured.splitlines():
        if line.startswith(prefix):
            return line[len(prefix) :].strip()
    raise AssertionError(f"no line starting with {prefix!r} in:\n{captured}")


class TestHelp:
    @pytest.mark.parametrize(
        "argv",
        [
            ["--help"],
            ["kernels", "--help"],
            ["kernels", "build", "--help"],
            ["run", "--help"],
            ["bench", "--help"],
            ["stats", "--help"],
            ["stats", "friedman", "--help"],
        ],
    )
    def test_help_exits_zero(self, argv, capsys):
        assert main(argv) == 0
        assert "usage" in capsys.readouterr().out.lower()

    def test_missing_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2


class TestKernelsBuild:
    def test_writes_bank_and_manifest(self, dataset_dir, bank_dir, capsys):
        files = sorted(p.name for p in bank_dir.iterdir())
        assert files == sorted(
            [f"k{i:02d}.mkk" for i in range(1, 13)] + ["bank_manifest.json"]
        )
        manifest = json.loads((bank_dir / "bank_manifest.json").read_text())
        assert manifest["format"] == "MKK1"
        assert manifest["n"] == 24
        labels = [e["label"] for e in manifest["kernels"]]
        assert labels[0] == "gaussian(c=0.01)"
        assert labels[7] == "polynomial(a=0, b=2)"
        assert labels[11] == "cosine"
        gram = load_kernel(bank_dir / "k04.mkk")
        assert gram.values.shape == (24, 24)

    def test_stdout_is_manifest_path(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "bank"
        code = main(
            [
                "kernels",
                "build",
                "--features",
                str(dataset_dir / "features.csv"),
                "--out",
                str(out),
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        assert captured.out.strip() == str(out / "bank_manifest.json")
        assert "wrote" in captured.err

    def test_rebuild_byte_identical(self, dataset_dir, bank_dir, tmp_path, capsys):
        out = tmp_path / "bank2"
        assert (
            main(
                [
                    "kernels",
                    "build",
                    "--features",
                    str(dataset_dir / "features.csv"),
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        for i in range(1, 13):
            name = f"k{i:02d}.mkk"
            assert (out / name).read_bytes() == (bank_dir / name).read_bytes()

    def test_missing_features_file(self, tmp_path, capsys):
        code = main(
            [
                "kernels",
                "build",
                "--features",
                str(tmp_path / "nope.csv"),
                "--out",
                str(tmp_path / "bank"),
            ]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_no_normalize_no_scale_recorded(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "raw_bank"
        code = main(
            [
                "kernels",
                "build",
                "--features",
                str(dataset_dir / "features.csv"),
                "--out",
                str(out),
                "--no-normalize",
                "--no-scale",
            ]
        )
        assert code == 0
        manifest = json.loads((out / "bank_manifest.json").read_text())
        assert manifest["normalize"] is False and manifest["scale"] is False


class TestRun:
    def test_kcd_run_reports_and_persists(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "cfg.json", **kcd_config(dataset_dir, out))
        code = main(["run", "--config", cfg])
        captured = capsys.readouterr()
        assert code == 0

        assert stdout_value(captured.out, "algorithm:") == "kcd-mkkm"
        assert stdout_value(captured.out, "params:") == "alpha=0.10000000000000001;beta=0.03125"
        assert stdout_value(captured.out, "converged:") == "True"

        weights = [float(w) for w in stdout_value(captured.out, "weights:").split()]
        assert len(weights) == 12
        assert sum(weights) == pytest.approx(1.0, abs=1e-9)
        assert min(weights) >= -1e-12

        trace = [
            float(v) for v in stdout_value(captured.out, "objective_trace:").split()
        ]
        assert len(trace) >= 2
        for a, b in zip(trace, trace[1:]):
            assert b <= a + 1e-9

        for metric in ("acc", "nmi", "pur", "ari"):
            value = float(stdout_value(captured.out, f"{metric} ="))
            assert -1.0 <= value <= 1.0

        assert (out / "summary.csv").exists()
        assert (out / "objective_trace.csv").exists()
        assert (out / "weights.csv").exists()
        assert (out / "figures" / "objective_trace.png").exists()
        assert (out / "figures" / "kernel_weights.png").exists()

    def test_grid_override_flags(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(
                dataset_dir,
                out,
                alpha_grid=[0.1 * i for i in range(1, 10)],
                beta_grid=[2.0**-p for p in range(14, 4, -1)],
            ),
        )
        assert main(["run", "--config", cfg, "--no-figures"]) == 2
        assert "single alpha" in capsys.readouterr().err
        assert (
            main(
                [
                    "run",
                    "--config",
                    cfg,
                    "--alpha",
                    "0.1",
                    "--beta",
                    "0.03125",
                    "--no-figures",
                ]
            )
            == 0
        )
        captured = capsys.readouterr()
        assert stdout_value(captured.out, "params:") == "alpha=0.10000000000000001;beta=0.03125"

    def test_mkkm_mr_lambda_override(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, out, algorithms=["mkkm-mr"]),
        )
        code = main(["run", "--config", cfg, "--lambda", "0.5", "--no-figures"])
        captured = capsys.readouterr()
        assert code == 0
        assert stdout_value(captured.out, "params:") == "lambda=0.5"

    def test_kkm_single_kernel(self, dataset_dir, bank_dir, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(
                dataset_dir,
                out,
                algorithms=["kkm"],
                features=None,
                kernels=[str(bank_dir / "k04.mkk")],
            ),
        )
        code = main(["run", "--config", cfg, "--no-figures"])
        captured = capsys.readouterr()
        assert code == 0
        assert stdout_value(captured.out, "algorithm:") == "kkm"
        acc = float(stdout_value(captured.out, "acc ="))
        assert acc == 1.0

    def test_kkm_rejects_multi_kernel_bank(self, dataset_dir, bank_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(
                dataset_dir,
                tmp_path / "out",
                algorithms=["kkm"],
                features=None,
                kernels=[str(bank_dir / f"k{i:02d}.mkk") for i in range(1, 13)],
            ),
        )
        assert main(["run", "--config", cfg, "--no-figures"]) == 2
        assert "single kernel" in capsys.readouterr().err

    def test_two_algorithms_rejected(self, dataset_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, tmp_path / "out", algorithms=["mkkm", "kkm"]),
        )
        assert main(["run", "--config", cfg, "--no-figures"]) == 2
        assert "exactly one algorithm" in capsys.readouterr().err

    def test_unknown_algorithm_rejected(self, dataset_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, tmp_path / "out", algorithms=["kmeans"]),
        )
        assert main(["run", "--config", cfg, "--no-figures"]) == 2
        assert "unknown algorithm" in capsys.readouterr().err

    def test_metrics_flag_requires_labels(self, dataset_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, tmp_path / "out", labels=None),
        )
        assert main(["run", "--config", cfg, "--metrics", "--no-figures"]) == 2
        assert "no labels path" in capsys.readouterr().err

    def test_label_count_mismatch(self, dataset_dir, tmp_path, capsys):
        bad = tmp_path / "short_labels.csv"
        bad.write_text("0\n1\n2\n")
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, tmp_path / "out", labels=str(bad)),
        )
        assert main(["run", "--config", cfg, "--no-figures"]) == 2
        assert "3 labels for 24 samples" in capsys.readouterr().err


class TestBench:
    def bench_config(self, dataset_dir, out_dir):
        return kcd_config(
            dataset_dir,
            out_dir,
            algorithms=["mkkm", "kcd-mkkm"],
            repetitions=3,
        )

    def test_sweep_and_replay_byte_identical(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "results"
        cfg = write_config(
            tmp_path / "cfg.json", **self.bench_config(dataset_dir, out)
        )
        code = main(["bench", "--config", cfg, "--no-figures"])
        captured = capsys.readouterr()
        assert code == 0
        manifest_path = captured.out.strip().splitlines()[-1]
        assert manifest_path == str(out / "manifest.json")

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["cells"] == 2
        assert manifest["failures"] == []

        reps = (out / "repetitions.csv").read_text().splitlines()
        assert len(reps) == 1 + 2 * 3

        # Replay from the manifest itself: same out_dir, so move the
        # first run aside and compare directories byte for byte.
        first = tmp_path / "first_run"
        shutil.move(str(out), str(first))
        assert (
            main(["bench", "--config", str(first / "manifest.json"), "--no-figures"])
            == 0
        )
        capsys.readouterr()
        names = sorted(p.name for p in out.iterdir())
        assert names == sorted(p.name for p in first.iterdir())
        for name in names:
            assert (out / name).read_bytes() == (first / name).read_bytes(), name

    def test_parallel_jobs_identical_tables(self, dataset_dir, tmp_path, capsys):
        out1, out2 = tmp_path / "serial", tmp_path / "parallel"
        cfg1 = write_config(
            tmp_path / "cfg1.json", **self.bench_config(dataset_dir, out1)
        )
        cfg2 = write_config(
            tmp_path / "cfg2.json", **self.bench_config(dataset_dir, out2)
        )
        assert main(["bench", "--config", cfg1, "--no-figures"]) == 0
        assert main(["bench", "--config", cfg2, "--jobs", "2", "--no-figures"]) == 0
        capsys.readouterr()
        for name in ("repetitions.csv", "summary.csv", "table_blobs_acc.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_requires_labels(self, dataset_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, tmp_path / "out", labels=None),
        )
        assert main(["bench", "--config", cfg, "--no-figures"]) == 2
        assert "require config.labels" in capsys.readouterr().err

    def test_failing_cell_recorded_and_exit_one(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "results"
        cfg = write_config(
            tmp_path / "cfg.json",
            **kcd_config(dataset_dir, out, algorithms=["mkkm"], k=30),
        )
        code = main(["bench", "--config", cfg, "--no-figures"])
        captured = capsys.readouterr()
        assert code == 1
        assert "failed cell" in captured.err
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["cells"] == 0
        assert len(manifest["failures"]) == 1
        assert manifest["failures"][0]["algorithm"] == "mkkm"

    def test_bad_jobs_value(self, dataset_dir, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", **self.bench_config(dataset_dir, tmp_path / "o")
        )
        assert main(["bench", "--config", cfg, "--jobs", "0", "--no-figures"]) == 2

    def test_bench_figures_rendered(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "results"
        cfg = write_config(
            tmp_path / "cfg.json", **self.bench_config(dataset_dir, out)
        )
        assert main(["bench", "--config", cfg]) == 0
        capsys.readouterr()
        figures = {p.name for p in (out / "figures").iterdir()}
        assert "kernel_weights_blobs.png" in figures
        assert "objective_trace_blobs_kcd-mkkm.png" in figures


class TestStatsFriedman:
    def test_eight_algorithms_ten_datasets_cd(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        scores = rng.random((10, 8))
        p = tmp_path / "scores.csv"
        np.savetxt(p, scores, delimiter=",", fmt="%.17g")
        code = main(["stats", "friedman", "--scores", str(p)])
        captured = capsys.readouterr()
        assert code == 0
        assert "datasets: 10  algorithms: 8" in captured.out
        assert "CD = 3.3203 (q = 3.031)" in captured.out

    def test_outputs_match_oracle(self, tmp_path, capsys):
        rng = np.random.default_rng(8)
        scores = rng.random((3, 3))
        p = tmp_path / "scores.csv"
        np.savetxt(p, scores, delimiter=",", fmt="%.17g")
        out = tmp_path / "stats"
        code = main(
            [
                "stats",
                "friedman",
                "--scores",
                str(p),
                "--out",
                str(out),
                "--no-figures",
            ]
        )
        capsys.readouterr()
        assert code == 0

        rows = dict(
            line.split(",")
            for line in (out / "friedman.csv").read_text().splitlines()[1:]
        )
        mean_ranks = [
            oracles.rank_by_sort(row, True) for row in scores
        ]
        mean_ranks = np.mean(mean_ranks, axis=0)
        ref_chi2, ref_f = oracles.friedman_direct(mean_ranks, 3)
        assert float(rows["tau_chi2"]) == pytest.approx(ref_chi2, rel=1e-10)
        assert float(rows["tau_F"]) == pytest.approx(ref_f, rel=1e-10)
        assert (out / "ranks.csv").exists()
        assert (out / "mean_ranks.csv").exists()
        assert not (out / "cd_diagram.png").exists()

    def test_cd_diagram_rendered(self, tmp_path, capsys):
        p = tmp_path / "scores.csv"
        p.write_text("0.9,0.5,0.1\n0.8,0.6,0.2\n0.7,0.4,0.6\n")
        out = tmp_path / "stats"
        assert (
            main(["stats", "friedman", "--scores", str(p), "--out", str(out)]) == 0
        )
        capsys.readouterr()
        assert (out / "cd_diagram.png").exists()

    def test_identical_columns_zero_statistics(self, tmp_path, capsys):
        p = tmp_path / "scores.csv"
        p.write_text("0.5,0.5\n0.7,0.7\n0.9,0.9\n")
        code = main(["stats", "friedman", "--scores", str(p)])
        captured = capsys.readouterr()
        assert code == 0
        assert "tau_chi2 = 0.0000" in captured.out
        assert "tau_F = 0.0000" in captured.out
        assert "no significant pairs" in captured.out

    def test_perfect_agreement_degenerate_exit_one(self, tmp_path, capsys):
        p = tmp_path / "scores.csv"
        p.write_text("0.9,0.1\n0.8,0.2\n")
        code = main(["stats", "friedman", "--scores", str(p)])
        captured = capsys.readouterr()
        assert code == 1
        assert "degenerate F statistic" in captured.err

    def test_lower_is_better_flips_ranks(self, tmp_path, capsys):
        p = tmp_path / "scores.csv"
        p.write_text("1.0,2.0,3.0\n1.0,2.0,3.0\n3.0,2.0,1.0\n")
        out = tmp_path / "stats"
        assert (
            main(
                [
                    "stats",
                    "friedman",
                    "--scores",
                    str(p),
                    "--no-higher-better",
                    "--out",
                    str(out),
                    "--no-figures",
                ]
            )
            == 0
        )
        capsys.readouterr()
        lines = (out / "ranks.csv").read_text().splitlines()
        assert lines[1].split(",")[1:] == ["1", "2", "3"]

    def test_malformed_scores_exit_two(self, tmp_path, capsys):
        p = tmp_path / "scores.csv"
        p.write_text("a,b\n0.5\n")
        assert main(["stats", "friedman", "--scores", str(p)]) == 2
        assert "error:" in capsys.readouterr().err
