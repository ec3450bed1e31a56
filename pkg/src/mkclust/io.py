"""File formats, run configuration, and result persistence.

Features and labels travel as CSV (rows are samples).  Kernels travel
as CSV or as the MKK1 binary format: 4-byte magic "MKK1", little-endian
uint32 n, then n*n float64 values row-major.  All persisted floats use
17 significant digits so written tables replay bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import FeatureMatrix, GramMatrix
from .metrics import STD_DIVISOR, MetricsReport

Array = np.ndarray

MKK1_MAGIC = b"MKK1"

ALGORITHMS = ("kkm", "a-mkkm", "sb-kkm", "mkkm", "mkkm-mr", "kcd-mkkm")

DEFAULT_ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_BETA_GRID = tuple(2.0 ** -p for p in range(14, 4, -1))
DEFAULT_LAMBDA_GRID = tuple(2.0 ** p for p in range(-15, 16, 2))

METRIC_NAMES = ("acc", "nmi", "pur", "ari")


def fmt(x: float) -> str:
    """Full-precision float formatting used in every CSV we write."""
    return "%.17g" % float(x)


def _parse_cell(text: str, row: int, col: int, path: Path) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(
            f"{path}: row {row}, column {col}: could not parse {text!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise ValueError(f"{path}: row {row}, column {col}: non-finite value {text!r}")
    return value


def _read_numeric_csv(path: Path) -> list[list[float]]:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for i, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise ValueError(
                    f"{path}: row {i} has {len(record)} fields, expected {width}"
                )
            rows.append(
                [_parse_cell(c.strip(), i, j, path) for j, c in enumerate(record, 1)]
            )
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def load_features(path) -> FeatureMatrix:
    """Read a samples-by-features CSV."""
    return FeatureMatrix.from_rows(np.array(_read_numeric_csv(Path(path))))


def save_features(matrix: FeatureMatrix, path) -> None:
    """Write features back out, one sample per row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix.values.T:
            writer.writerow([fmt(v) for v in row])


def load_labels(path) -> Array:
    """Read ground-truth labels: integers separated by newlines or
    commas."""
    path = Path(path)
    tokens: list[tuple[int, int, str]] = []
    with open(path, newline="") as fh:
        for i, record in enumerate(csv.reader(fh), start=1):
            for j, cell in enumerate(record, start=1):
                if cell.strip():
                    tokens.append((i, j, cell.strip()))
    if not tokens:
        raise ValueError(f"{path}: no labels found")
    values = []
    for i, j, text in tokens:
        try:
            values.append(int(text))
        except ValueError:
            raise ValueError(
                f"{path}: row {i}, column {j}: could not parse {text!r} as an integer"
            ) from None
    return np.asarray(values, dtype=np.int64)


def save_kernel(gram: GramMatrix | Array, path, fmt_name: str = "binary") -> None:
    """Write a kernel matrix as MKK1 binary or CSV."""
    values = gram.values if isinstance(gram, GramMatrix) else np.asarray(gram)
    values = np.ascontiguousarray(values, dtype=np.float64)
    n = values.shape[0]
    if fmt_name == "binary":
        with open(path, "wb") as fh:
            fh.write(MKK1_MAGIC)
            fh.write(struct.pack("<I", n))
            fh.write(values.astype("<f8").tobytes(order="C"))
    elif fmt_name == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in values:
                writer.writerow([fmt(v) for v in row])
    else:
        raise ValueError(f"unknown kernel format {fmt_name!r}")


def _load_kernel_binary(path: Path, raw: bytes) -> Array:
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated MKK1 file")
    (n,) = struct.unpack("<I", raw[4:8])
    expected = 8 + 8 * n * n
    if len(raw) != expected:
        raise ValueError(
            f"{path}: MKK1 payload is {len(raw)} bytes, expected {expected} for n={n}"
        )
    values = np.frombuffer(raw, dtype="<f8", offset=8).reshape(n, n)
    return values.astype(np.float64)


def load_kernel(path) -> GramMatrix:
    """Read a precomputed kernel (MKK1 binary or CSV) and validate it.

    Asymmetry up to 1e-8 is silently symmetrized; beyond that the file
    is rejected with the largest deviation reported.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] == MKK1_MAGIC:
        values = _load_kernel_binary(path, raw)
    else:
        try:
            raw.decode("ascii")
        except UnicodeDecodeError:
            raise ValueError(
                f"{path}: not an MKK1 file (magic {raw[:4]!r}) and not text CSV"
            ) from None
        rows = _read_numeric_csv(path)
        values = np.array(rows, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"{path}: kernel matrix must be square, got {values.shape}")
    deviation = float(np.max(np.abs(values - values.T))) if values.size else 0.0
    if deviation > 1e-8:
        raise ValueError(
            f"{path}: kernel asymmetric, max deviation {deviation:.3e} exceeds 1e-08"
        )
    return GramMatrix((values + values.T) / 2.0)


_M64 = (1 << 64) - 1


def expand_seeds(master_seed: int, count: int) -> list[int]:
    """Derive independent per-repetition seeds from one master seed
    (splitmix64 stream)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    state = master_seed & _M64
    seeds = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _M64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        seeds.append(z ^ (z >> 31))
    return seeds


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a run/bench config JSON file."""

    k: int
    algorithms: tuple[str, ...]
    features: str | None = None
    kernels: tuple[str, ...] | None = None
    labels: str | None = None
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    beta_grid: tuple[float, ...] = DEFAULT_BETA_GRID
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    repetitions: int = 50
    master_seed: int = 0
    out_dir: str = "results"
    normalize: bool = True
    scale: bool = True
    row_normalize: bool = False
    dataset_name: str = "dataset"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("config.k: must be a positive integer")
        if not self.algorithms:
            raise ValueError("config.algorithms: must be a nonempty list")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise ValueError(
                    f"config.algorithms: unknown algorithm {name!r}; "
                    f"choose from {', '.join(ALGORITHMS)}"
                )
        if (self.features is None) == (self.kernels is None):
            raise ValueError(
                "config: exactly one of 'features' and 'kernels' must be given"
            )
        if self.kernels is not None and not self.kernels:
            raise ValueError("config.kernels: must be a nonempty list of paths")
        if self.repetitions < 1:
            raise ValueError("config.repetitions: must be at least 1")
        if self.master_seed < 0:
            raise ValueError("config.master_seed: must be nonnegative")
        if "kcd-mkkm" in self.algorithms:
            if not self.alpha_grid:
                raise ValueError("config.alpha_grid: empty but kcd-mkkm selected")
            if not self.beta_grid:
                raise ValueError("config.beta_grid: empty but kcd-mkkm selected")
        if "mkkm-mr" in self.algorithms and not self.lambda_grid:
            raise ValueError("config.lambda_grid: empty but mkkm-mr selected")
        if "sb-kkm" in self.algorithms and self.labels is None:
            raise ValueError("config.labels: required by sb-kkm (selects by accuracy)")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "algorithms": list(self.algorithms),
            "features": self.features,
            "kernels": list(self.kernels) if self.kernels is not None else None,
            "labels": self.labels,
            "alpha_grid": list(self.alpha_grid),
            "beta_grid": list(self.beta_grid),
            "lambda_grid": list(self.lambda_grid),
            "repetitions": self.repetitions,
            "master_seed": self.master_seed,
            "out_dir": self.out_dir,
            "normalize": self.normalize,
            "scale": self.scale,
            "row_normalize": self.row_normalize,
            "dataset_name": self.dataset_name,
        }


_CONFIG_TYPES = {
    "k": int,
    "algorithms": list,
    "features": str,
    "kernels": list,
    "labels": str,
    "alpha_grid": list,
    "beta_grid": list,
    "lambda_grid": list,
    "repetitions": int,
    "master_seed": int,
    "out_dir": str,
    "normalize": bool,
    "scale": bool,
    "row_normalize": bool,
    "dataset_name": str,
}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValueError("config: top level must be a JSON object")
    for key, value in data.items():
        if key not in _CONFIG_TYPES:
            raise ValueError(f"config.{key}: unknown key")
        if value is None:
            continue
        expected = _CONFIG_TYPES[key]
        if expected is int and isinstance(value, bool):
            raise ValueError(f"config.{key}: expected an integer, got a boolean")
        if not isinstance(value, expected):
            raise ValueError(
                f"config.{key}: expected {expected.__name__}, got {type(value).__name__}"
            )
    kwargs = dict(data)
    for grid in ("alpha_grid", "beta_grid", "lambda_grid"):
        if kwargs.get(grid) is not None:
            vals = kwargs[grid]
            for i, v in enumerate(vals):
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise ValueError(f"config.{grid}[{i}]: expected a number")
            kwargs[grid] = tuple(float(v) for v in vals)
    if kwargs.get("algorithms") is not None:
        kwargs["algorithms"] = tuple(str(a) for a in kwargs["algorithms"])
    if kwargs.get("kernels") is not None:
        kwargs["kernels"] = tuple(str(p) for p in kwargs["kernels"])
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    if "k" not in kwargs:
        raise ValueError("config.k: required")
    if "algorithms" not in kwargs:
        raise ValueError("config.algorithms: required")
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Parse and validate a config JSON file.

    A result manifest is also accepted: its embedded "config" object is
    used, which makes replaying a finished run a one-flag operation.
    """
    path = Path(path)
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict) and "config" in data and "manifest_version" in data:
        data = data["config"]
    return config_from_dict(data)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class ResultRecord:
    """Outcome of one (dataset, algorithm, parameter point) cell."""

    dataset: str
    algorithm: str
    params: dict[str, float]
    reports: tuple[MetricsReport, ...]
    summary: MetricsReport | None
    duration_s: float
    convergence: dict = field(default_factory=dict)
    weights: tuple[float, ...] | None = None
    error: str | None = None

    def param_label(self) -> str:
        if not self.params:
            return "-"
        return ";".join(f"{k}={fmt(v)}" for k, v in sorted(self.params.items()))


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _summary_rows(records: list[ResultRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        if r.summary is None:
            continue
        s = r.summary
        rows.append(
            [r.dataset, r.algorithm, r.param_label(), str(s.repetitions)]
            + [fmt(getattr(s, m)) for m in METRIC_NAMES]
            + [fmt(getattr(s, m + "_std")) for m in METRIC_NAMES]
        )
    return rows


def best_by_metric(
    records: list[ResultRecord], metric: str
) -> dict[tuple[str, str], ResultRecord]:
    """Highest-mean record per (dataset, algorithm); earlier grid order
    wins ties."""
    best: dict[tuple[str, str], ResultRecord] = {}
    for r in records:
        if r.summary is None:
            continue
        key = (r.dataset, r.algorithm)
        if key not in best or getattr(r.summary, metric) > getattr(
            best[key].summary, metric
        ):
            best[key] = r
    return best


def persist_results(records: list[ResultRecord], out_dir, cfg: RunConfig) -> Path:
    """Write result tables and the replay manifest; returns the manifest
    path.

    Emits repetitions.csv (raw per-repetition scores), summary.csv
    (per-cell mean/std), one best-parameter table per (dataset, metric),
    kernel_weights.csv, and manifest.json.  Wall-clock durations are
    deliberately kept out of the CSVs so reruns are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok = [r for r in records if r.summary is not None]

    table_files = []
    if ok:
        rep_rows = []
        for r in ok:
            for i, rep in enumerate(r.reports):
                rep_rows.append(
                    [r.dataset, r.algorithm, r.param_label(), str(i)]
                    + [fmt(getattr(rep, m)) for m in METRIC_NAMES]
                )
        _write_csv(
            out / "repetitions.csv",
            ["dataset", "algorithm", "params", "repetition"] + list(METRIC_NAMES),
            rep_rows,
        )
        table_files.append("repetitions.csv")

        _write_csv(
            out / "summary.csv",
            ["dataset", "algorithm", "params", "repetitions"]
            + [f"{m}_mean" for m in METRIC_NAMES]
            + [f"{m}_std" for m in METRIC_NAMES],
            _summary_rows(ok),
        )
        table_files.append("summary.csv")

        datasets = sorted({r.dataset for r in ok})
        for metric in METRIC_NAMES:
            best = best_by_metric(ok, metric)
            for ds in datasets:
                rows = []
                for algo in ALGORITHMS:
                    rec = best.get((ds, algo))
                    if rec is None:
                        continue
                    rows.append(
                        [
                            algo,
                            fmt(getattr(rec.summary, metric)),
                            fmt(getattr(rec.summary, metric + "_std")),
                            rec.param_label(),
                        ]
                    )
                if rows:
                    name = f"table_{ds}_{metric}.csv"
                    _write_csv(
                        out / name, ["algorithm", "mean", "std", "params"], rows
                    )
                    table_files.append(name)

        weight_rows = []
        acc_best = best_by_metric(ok, "acc")
        for (ds, algo), rec in sorted(acc_best.items()):
            if rec.weights is not None:
                weight_rows.append(
                    [ds, algo, rec.param_label()] + [fmt(w) for w in rec.weights]
                )
        if weight_rows:
            m = max(len(row) - 3 for row in weight_rows)
            _write_csv(
                out / "kernel_weights.csv",
                ["dataset", "algorithm", "params"] + [f"w{i+1}" for i in range(m)],
                weight_rows,
            )
            table_files.append("kernel_weights.csv")

    failures = [
        {"dataset": r.dataset, "algorithm": r.algorithm, "params": r.params,
         "error": r.error}
        for r in records
        if r.error is not None
    ]
    manifest = {
        "manifest_version": 1,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "seeds": expand_seeds(cfg.master_seed, cfg.repetitions),
        "std_divisor": STD_DIVISOR,
        "tables": table_files,
        "cells": len(ok),
        "failures": failures,
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_score_table(path) -> tuple[list[str], list[str], Array]:
    """Read a datasets-by-algorithms score table for the rank tests.

    Fully numeric CSVs get generated names; otherwise the first row is
    the header (first cell ignored) and the first column holds dataset
    names.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty score table")

    def all_numeric(row: list[str]) -> bool:
        try:
            [float(c) for c in row]
            return True
        except ValueError:
            return False

    if all(all_numeric(r) for r in rows):
        scores = np.array(
            [[_parse_cell(c.strip(), i, j, path) for j, c in enumerate(r, 1)]
             for i, r in enumerate(rows, 1)]
        )
        datasets = [f"ds{i+1}" for i in range(scores.shape[0])]
        algorithms = [f"alg{j+1}" for j in range(scores.shape[1])]
        return datasets, algorithms, scores

    header, *body = rows
    algorithms = [c.strip() for c in header[1:]]
    if not algorithms or not body:
        raise ValueError(f"{path}: need a header row and at least one data row")
    datasets = []
    values = []
    for i, row in enumerate(body, 2):
        if len(row) != len(header):
            raise ValueError(
                f"{path}: row {i} has {len(row)} fields, expected {len(header)}"
            )
        datasets.append(row[0].strip())
        values.append(
            [_parse_cell(c.strip(), i, j, path) for j, c in enumerate(row[1:], 2)]
        )
    return datasets, algorithms, np.array(values)
