"""Command-line interface.

Subcommands: `kernels build` constructs the 12-kernel bank from a
features CSV; `run` executes one algorithm at one parameter point;
`bench` sweeps algorithm/parameter grids with repeated seeded runs;
`stats friedman` ranks a score table and reports the Friedman and
Nemenyi statistics.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error.  Progress goes to stderr; machine-readable output
goes to stdout and files only.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .cluster import (
    KcdConfig,
    average_kernel,
    bank_embeddings,
    discretize,
    kcd_mkkm,
    mkkm,
    mkkm_mr,
    sb_kkm,
)
from .kernels import KernelBank, standard_bank
from .metrics import aggregate, evaluate
from .relations import correlation_matrix, relation_matrices
from .spectral import Embedding, top_k_eigs
from .stats import friedman, nemenyi_cd, rank_table, significant_pairs

RUNTIME_ERRORS = (
    ArithmeticError,
    RuntimeError,
    np.linalg.LinAlgError,
    MemoryError,
)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mkclust",
        description="Multiple-kernel k-means clustering toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    kernels_p = sub.add_parser("kernels", help="kernel bank construction")
    ksub = kernels_p.add_subparsers(dest="kernels_command", required=True)
    build = ksub.add_parser(
        "build", help="build the 12-kernel standard bank from a features CSV"
    )
    build.add_argument("--features", required=True, help="samples-by-features CSV")
    build.add_argument("--out", required=True, help="output directory")
    build.add_argument(
        "--normalize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="divide by sqrt(K_ii K_jj) (default on)",
    )
    build.add_argument(
        "--scale",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="min-max scale entries to [0, 1] (default on)",
    )
    build.set_defaults(func=cmd_kernels_build)

    run_p = sub.add_parser(
        "run", help="run one algorithm at one parameter point"
    )
    run_p.add_argument("--config", required=True, help="config JSON (or manifest)")
    run_p.add_argument("--alpha", type=float, help="override the alpha grid")
    run_p.add_argument("--beta", type=float, help="override the beta grid")
    run_p.add_argument(
        "--lambda", dest="lam", type=float, help="override the lambda grid"
    )
    run_p.add_argument(
        "--metrics",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="require metric output (needs labels); default: compute when labels exist",
    )
    run_p.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render objective/weight figures (default on)",
    )
    run_p.set_defaults(func=cmd_run)

    bench_p = sub.add_parser(
        "bench", help="full benchmark sweep over algorithms and grids"
    )
    bench_p.add_argument("--config", required=True, help="config JSON (or manifest)")
    bench_p.add_argument(
        "--jobs", type=int, default=1, help="parallel grid cells (default 1)"
    )
    bench_p.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render report figures (default on)",
    )
    bench_p.set_defaults(func=cmd_bench)

    stats_p = sub.add_parser("stats", help="rank statistics over score tables")
    ssub = stats_p.add_subparsers(dest="stats_command", required=True)
    fried = ssub.add_parser(
        "friedman", help="Friedman test and Nemenyi critical difference"
    )
    fried.add_argument(
        "--scores", required=True, help="datasets-by-algorithms score CSV"
    )
    fried.add_argument(
        "--higher-better",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="rank 1 goes to the highest score (default on)",
    )
    fried.add_argument(
        "--q", type=float, default=3.031, help="studentized-range quantile q_gamma"
    )
    fried.add_argument("--out", help="directory for rank CSVs and the CD diagram")
    fried.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="render the CD diagram when --out is given (default on)",
    )
    fried.set_defaults(func=cmd_stats_friedman)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


# ---------------------------------------------------------------- kernels


def cmd_kernels_build(args) -> int:
    try:
        features = io.load_features(args.features)
        bank = standard_bank(features, normalize=args.normalize, scale=args.scale)
    except (ValueError, OSError) as exc:
        return _fail(str(exc), 2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, gram in enumerate(bank):
        name = f"k{i + 1:02d}.mkk"
        io.save_kernel(gram, out / name)
        entries.append({"file": name, "label": gram.label()})
        _log(f"wrote {out / name} ({gram.label()})")
    manifest = {
        "format": "MKK1",
        "n": bank.n,
        "kernels": entries,
        "normalize": bool(args.normalize),
        "scale": bool(args.scale),
    }
    manifest_path = out / "bank_manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(manifest_path)
    return 0


# ------------------------------------------------------------- run / bench


@dataclass
class _CellFit:
    """Seed-independent part of one (algorithm, params) cell."""

    algorithm: str
    params: dict[str, float]
    embedding: Embedding | None = None
    embeddings: list[Embedding] | None = None
    weights: tuple[float, ...] | None = None
    trace: tuple[float, ...] = ()
    iterations: int = 0
    converged: bool = True
    clamped_steps: tuple[int, ...] = ()


class _Shared:
    """Lazily computed inputs reused across grid cells."""

    def __init__(self, bank: KernelBank, cfg: io.RunConfig):
        self.bank = bank
        self.cfg = cfg
        self._relations = None
        self._correlation = None

    @property
    def relations(self):
        if self._relations is None:
            _log("computing kernel relation matrices")
            self._relations = relation_matrices(self.bank)
        return self._relations

    @property
    def correlation(self):
        if self._relations is not None:
            return self._relations.correlation
        if self._correlation is None:
            self._correlation = correlation_matrix(self.bank)
        return self._correlation


def _fit_cell(algorithm: str, params: dict[str, float], shared: _Shared) -> _CellFit:
    bank, cfg = shared.bank, shared.cfg
    if algorithm == "kkm":
        return _CellFit(
            algorithm, params, embedding=top_k_eigs(bank[0].values, cfg.k)
        )
    if algorithm == "a-mkkm":
        return _CellFit(
            algorithm, params, embedding=top_k_eigs(average_kernel(bank), cfg.k)
        )
    if algorithm == "sb-kkm":
        return _CellFit(algorithm, params, embeddings=bank_embeddings(bank, cfg.k))
    if algorithm == "mkkm":
        res = mkkm(bank, cfg.k)
    elif algorithm == "mkkm-mr":
        res = mkkm_mr(bank, cfg.k, params["lambda"], M=shared.correlation)
    elif algorithm == "kcd-mkkm":
        res = kcd_mkkm(
            bank,
            shared.relations,
            KcdConfig(
                k=cfg.k,
                alpha=params["alpha"],
                beta=params["beta"],
                row_normalize=cfg.row_normalize,
            ),
        )
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return _CellFit(
        algorithm,
        params,
        embedding=res.embedding,
        weights=tuple(float(w) for w in res.weights),
        trace=res.objective_trace,
        iterations=res.iterations,
        converged=res.converged,
        clamped_steps=res.clamped_steps,
    )


def _cell_partition(fit: _CellFit, seed: int, shared: _Shared, labels):
    cfg = shared.cfg
    if fit.algorithm == "sb-kkm":
        part, _ = sb_kkm(
            shared.bank,
            cfg.k,
            labels,
            seed,
            cfg.row_normalize,
            embeddings=fit.embeddings,
        )
        return part
    return discretize(fit.embedding, cfg.k, seed, cfg.row_normalize)


def _run_cell(
    algorithm: str,
    params: dict[str, float],
    shared: _Shared,
    seeds: list[int],
    labels,
) -> io.ResultRecord:
    cfg = shared.cfg
    start = time.perf_counter()
    try:
        fit = _fit_cell(algorithm, params, shared)
        reports = []
        for seed in seeds:
            part = _cell_partition(fit, seed, shared, labels)
            if labels is not None:
                reports.append(evaluate(part.labels, labels))
        summary = aggregate(reports) if reports else None
        return io.ResultRecord(
            dataset=cfg.dataset_name,
            algorithm=algorithm,
            params=params,
            reports=tuple(reports),
            summary=summary,
            duration_s=time.perf_counter() - start,
            convergence={
                "iterations": fit.iterations,
                "converged": fit.converged,
                "clamped_steps": list(fit.clamped_steps),
                "trace": list(fit.trace),
            },
            weights=fit.weights,
        )
    except Exception as exc:
        return io.ResultRecord(
            dataset=cfg.dataset_name,
            algorithm=algorithm,
            params=params,
            reports=(),
            summary=None,
            duration_s=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )


def _load_inputs(cfg: io.RunConfig) -> tuple[KernelBank, np.ndarray | None]:
    if cfg.features is not None:
        features = io.load_features(cfg.features)
        bank = standard_bank(features, normalize=cfg.normalize, scale=cfg.scale)
    else:
        grams = [io.load_kernel(p) for p in cfg.kernels]
        bank = KernelBank(tuple(grams))
    labels = None
    if cfg.labels is not None:
        labels = io.load_labels(cfg.labels)
        if labels.shape[0] != bank.n:
            raise ValueError(
                f"{cfg.labels}: {labels.shape[0]} labels for {bank.n} samples"
            )
    if "kkm" in cfg.algorithms and len(bank) != 1:
        raise ValueError(
            f"kkm runs on a single kernel; the config provides {len(bank)}"
        )
    return bank, labels


def _single_point(grid: tuple[float, ...], override, name: str) -> float:
    if override is not None:
        return float(override)
    if len(grid) != 1:
        raise ValueError(
            f"run needs a single {name}: pass --{name} or shrink config.{name}_grid "
            f"(currently {len(grid)} values)"
        )
    return float(grid[0])


def _params_for_run(cfg: io.RunConfig, algorithm: str, args) -> dict[str, float]:
    if algorithm == "kcd-mkkm":
        return {
            "alpha": _single_point(cfg.alpha_grid, args.alpha, "alpha"),
            "beta": _single_point(cfg.beta_grid, args.beta, "beta"),
        }
    if algorithm == "mkkm-mr":
        return {"lambda": _single_point(cfg.lambda_grid, args.lam, "lambda")}
    return {}


def cmd_run(args) -> int:
    try:
        cfg = io.load_config(args.config)
        if len(cfg.algorithms) != 1:
            raise ValueError(
                "run executes exactly one algorithm; "
                f"config.algorithms lists {len(cfg.algorithms)}"
            )
        algorithm = cfg.algorithms[0]
        params = _params_for_run(cfg, algorithm, args)
        if args.metrics and cfg.labels is None:
            raise ValueError("metrics requested but the config has no labels path")
        bank, labels = _load_inputs(cfg)
    except (ValueError, OSError) as exc:
        return _fail(str(exc), 2)

    shared = _Shared(bank, cfg)
    seeds = io.expand_seeds(cfg.master_seed, 1)
    _log(f"running {algorithm} on {cfg.dataset_name} (n={bank.n}, m={len(bank)})")
    record = _run_cell(algorithm, params, shared, seeds, labels)
    if record.error is not None:
        code = 2 if record.error.startswith("ValueError") else 1
        return _fail(record.error, code)

    print(f"algorithm: {algorithm}")
    if record.params:
        print(f"params: {record.param_label()}")
    if record.convergence.get("iterations"):
        print(f"iterations: {record.convergence['iterations']}")
        print(f"converged: {record.convergence['converged']}")
    fit_weights = record.weights
    if fit_weights is not None:
        print("weights: " + " ".join(io.fmt(w) for w in fit_weights))
    trace = _cell_trace(record)
    if trace:
        print("objective_trace: " + " ".join(io.fmt(v) for v in trace))
    if record.summary is not None:
        for m in io.METRIC_NAMES:
            print(f"{m} = {io.fmt(getattr(record.summary, m))}")

    out = Path(cfg.out_dir)
    try:
        io.persist_results([record], out, cfg)
        if trace:
            with open(out / "objective_trace.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["iteration", "objective"])
                for i, v in enumerate(trace, 1):
                    writer.writerow([str(i), io.fmt(v)])
        if fit_weights is not None:
            with open(out / "weights.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([f"w{i+1}" for i in range(len(fit_weights))])
                writer.writerow([io.fmt(w) for w in fit_weights])
        if args.figures:
            _render_run_figures(out, algorithm, trace, fit_weights)
    except OSError as exc:
        return _fail(f"writing results: {exc}", 1)
    _log(f"results in {out}")
    return 0


def _cell_trace(record: io.ResultRecord) -> tuple[float, ...]:
    return tuple(record.convergence.get("trace", ()))


def _render_run_figures(out: Path, algorithm: str, trace, weights) -> None:
    from . import figures

    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    if trace:
        p = figures.save_objective_trace(
            trace, figdir / "objective_trace.png", title=algorithm
        )
        _log(f"figure {p}")
    if weights is not None:
        p = figures.save_kernel_weights(
            {algorithm: weights}, figdir / "kernel_weights.png"
        )
        _log(f"figure {p}")


def _grid_cells(cfg: io.RunConfig) -> list[tuple[str, dict[str, float]]]:
    cells: list[tuple[str, dict[str, float]]] = []
    for algorithm in cfg.algorithms:
        if algorithm == "kcd-mkkm":
            for alpha in cfg.alpha_grid:
                for beta in cfg.beta_grid:
                    cells.append((algorithm, {"alpha": alpha, "beta": beta}))
        elif algorithm == "mkkm-mr":
            for lam in cfg.lambda_grid:
                cells.append((algorithm, {"lambda": lam}))
        else:
            cells.append((algorithm, {}))
    return cells


def cmd_bench(args) -> int:
    try:
        cfg = io.load_config(args.config)
        if cfg.labels is None:
            raise ValueError("benchmark tables require config.labels")
        if args.jobs < 1:
            raise ValueError("--jobs must be at least 1")
        bank, labels = _load_inputs(cfg)
    except (ValueError, OSError) as exc:
        return _fail(str(exc), 2)

    shared = _Shared(bank, cfg)
    seeds = io.expand_seeds(cfg.master_seed, cfg.repetitions)
    cells = _grid_cells(cfg)
    _log(
        f"bench: {len(cells)} cells x {cfg.repetitions} repetitions "
        f"on {cfg.dataset_name} (n={bank.n}, m={len(bank)}, jobs={args.jobs})"
    )
    if "kcd-mkkm" in cfg.algorithms:
        shared.relations  # compute before threading so cells share one copy

    def work(cell):
        algorithm, params = cell
        record = _run_cell(algorithm, params, shared, seeds, labels)
        status = "failed" if record.error else "ok"
        _log(
            f"  {algorithm} {record.param_label()} [{status}] "
            f"{record.duration_s:.2f}s"
        )
        return record

    if args.jobs == 1:
        records = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(work, cells))

    try:
        manifest = io.persist_results(records, cfg.out_dir, cfg)
        if args.figures:
            _render_bench_figures(records, Path(cfg.out_dir))
    except OSError as exc:
        return _fail(f"writing results: {exc}", 1)
    print(manifest)

    failures = [r for r in records if r.error is not None]
    for r in failures:
        _log(f"failed cell {r.algorithm} {r.param_label()}: {r.error}")
    return 1 if failures else 0


def _render_bench_figures(records: list[io.ResultRecord], out: Path) -> None:
    from . import figures

    ok = [r for r in records if r.summary is not None]
    if not ok:
        return
    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    best = io.best_by_metric(ok, "acc")
    for ds in sorted({r.dataset for r in ok}):
        weight_map = {}
        for algo in io.ALGORITHMS:
            rec = best.get((ds, algo))
            if rec is not None and rec.weights is not None:
                weight_map[algo] = rec.weights
        if weight_map:
            p = figures.save_kernel_weights(
                weight_map,
                figdir / f"kernel_weights_{ds}.png",
                title=f"learned kernel weights: {ds}",
            )
            _log(f"figure {p}")
        for algo in ("mkkm", "mkkm-mr", "kcd-mkkm"):
            rec = best.get((ds, algo))
            if rec is None:
                continue
            trace = rec.convergence.get("trace", ())
            if trace:
                p = figures.save_objective_trace(
                    trace,
                    figdir / f"objective_trace_{ds}_{algo}.png",
                    title=f"{algo}: {ds} {rec.param_label()}",
                )
                _log(f"figure {p}")


# ------------------------------------------------------------------ stats


def cmd_stats_friedman(args) -> int:
    try:
        datasets, algorithms, scores = io.load_score_table(args.scores)
        table = rank_table(scores, higher_is_better=args.higher_better)
    except (ValueError, OSError) as exc:
        return _fail(str(exc), 2)

    try:
        tau_chi2, tau_f = friedman(table)
    except ValueError as exc:
        return _fail(str(exc), 1)
    cd = nemenyi_cd(table.k_algorithms, table.n_datasets, args.q)
    mean_ranks = table.mean_ranks

    print(f"datasets: {table.n_datasets}  algorithms: {table.k_algorithms}")
    print("mean ranks:")
    for name, rank in zip(algorithms, mean_ranks):
        print(f"  {name}: {rank:.4f}")
    print(f"tau_chi2 = {tau_chi2:.4f}")
    print(f"tau_F = {tau_f:.4f}")
    print(f"CD = {cd:.4f} (q = {args.q:g})")
    pairs = significant_pairs(mean_ranks, cd)
    if pairs:
        print("significant pairs (mean-rank gap > CD):")
        for i, j, gap in pairs:
            print(f"  {algorithms[i]} vs {algorithms[j]}: {gap:.4f}")
    else:
        print("no significant pairs")

    if args.out:
        try:
            _write_stats_outputs(
                Path(args.out),
                datasets,
                algorithms,
                table,
                tau_chi2,
                tau_f,
                cd,
                args.q,
                args.figures,
            )
        except OSError as exc:
            return _fail(f"writing stats outputs: {exc}", 1)
    return 0


def _write_stats_outputs(
    out: Path, datasets, algorithms, table, tau_chi2, tau_f, cd, q, render
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ranks.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset"] + list(algorithms))
        for name, row in zip(datasets, table.ranks):
            writer.writerow([name] + [io.fmt(v) for v in row])
    with open(out / "mean_ranks.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "mean_rank"])
        for name, rank in zip(algorithms, table.mean_ranks):
            writer.writerow([name, io.fmt(rank)])
    with open(out / "friedman.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["statistic", "value"])
        writer.writerow(["tau_chi2", io.fmt(tau_chi2)])
        writer.writerow(["tau_F", io.fmt(tau_f)])
        writer.writerow(["cd", io.fmt(cd)])
        writer.writerow(["q", io.fmt(q)])
        writer.writerow(["n_datasets", str(table.n_datasets)])
        writer.writerow(["k_algorithms", str(table.k_algorithms)])
    _log(f"stats tables in {out}")
    if render:
        from . import figures

        p = figures.save_cd_diagram(
            list(algorithms), table.mean_ranks, cd, out / "cd_diagram.png"
        )
        _log(f"figure {p}")


if __name__ == "__main__":
    entrypoint()
