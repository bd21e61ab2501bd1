"""Experiment orchestration: datasets, training or grid search, metrics and reports."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import DEFAULT_GRIDS, KINDS, BaselineSpec, default_iters, grid_search
from .context import CHEB, EVD
from .data import Dataset, degrade_dataset, generate_dataset, load_csv_dataset, load_dataset
from .denoiser import EN, TV, DauParams, ParamError, param_count
from .restorer import NestParams, params_from_dict
from .training import HISTORY_FIELDS, TrainConfig, forward, mean_rmse, predict, train

log = logging.getLogger(__name__)

LEARNED = ("graphdau", "nestdau")
TASKS = ("denoise", "interpolate")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    task: str = "denoise"
    model: str = "graphdau"
    variant: str = TV
    accel: str = EVD
    L: int = 10
    K: Optional[int] = 10
    P: int = 8
    data: dict = field(default_factory=lambda: {"source": "synthetic"})
    sigma: float = 0.5
    missing_rate: float = 0.0
    seed: int = 0
    train: dict = field(default_factory=dict)
    grid: Optional[dict] = None
    iters: Optional[int] = None
    out: str = "runs/experiment"
    max_evd_nodes: int = 5000

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.model not in LEARNED + KINDS:
            raise ConfigError(f"model must be one of {LEARNED + KINDS}, got {self.model!r}")
        if self.variant not in (TV, EN):
            raise ConfigError(f"variant must be 'tv' or 'en', got {self.variant!r}")
        if self.accel not in (EVD, CHEB):
            raise ConfigError(f"accel must be 'evd' or 'cheb', got {self.accel!r}")
        if self.accel == CHEB and self.model in LEARNED and not (isinstance(self.K, int) and self.K >= 1):
            raise ConfigError("cheb acceleration requires an integer K >= 1")
        if self.task == "interpolate" and not 0 < self.missing_rate < 1:
            raise ConfigError("interpolate task requires a missing_rate in (0, 1)")
        if self.task == "denoise" and self.missing_rate != 0:
            raise ConfigError("denoise task must have missing_rate 0")
        if self.model == "graphdau" and self.task != "denoise":
            raise ConfigError("graphdau is a denoiser; use nestdau for interpolation")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.L < 1 or self.P < 0:
            raise ConfigError("L must be >= 1 and P >= 0")
        src = self.data.get("source", "synthetic")
        if src not in ("synthetic", "csv", "bundle"):
            raise ConfigError(f"data.source must be synthetic, csv or bundle, got {src!r}")
        if src == "csv" and not ("nodes" in self.data and "signals" in self.data):
            raise ConfigError("csv data source needs 'nodes' and 'signals' paths")
        if src == "bundle" and "path" not in self.data:
            raise ConfigError("bundle data source needs 'path'")
        try:
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid train section: {exc}") from exc

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{"seed": self.seed, **self.train})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def dataset_label(self) -> str:
        d = self.data
        src = d.get("source", "synthetic")
        if src == "synthetic":
            tag = f"{d.get('graph', 'community')}-{d.get('signal', 'pwc')}-n{d.get('n', 250)}"
            return tag + ("-perturbed" if d.get("perturbed") else "")
        if src == "csv":
            return f"csv:{Path(d['signals']).stem}"
        return f"bundle:{Path(d['path']).name}"

    @property
    def model_label(self) -> str:
        return model_label(self.model, self.variant, self.accel)


def model_label(model: str, variant: str = TV, accel: str = EVD) -> str:
    if model in LEARNED:
        head = "GraphDAU" if model == "graphdau" else "NestDAU"
        return f"{head}-{variant.upper()}-{'E' if accel == EVD else 'C'}"
    return model


SYNTH_KEYS = ("graph", "n", "signal", "splits", "perturbed", "n_clusters", "k", "partition_k", "graph_seed")


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    src = d.get("source", "synthetic")
    try:
        if src == "synthetic":
            kw = {k: d[k] for k in SYNTH_KEYS if k in d}
            return generate_dataset(sigma=cfg.sigma, missing_rate=cfg.missing_rate, seed=cfg.seed, **kw)
        if src == "csv":
            _, ds = load_csv_dataset(d["nodes"], d["signals"], k=d.get("k", 8), sigma=d.get("sigma_kernel"),
                                     splits=d.get("splits"))
            return degrade_dataset(ds, cfg.sigma, cfg.missing_rate, cfg.seed)
        return load_dataset(d["path"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid data section: {exc}") from exc


def init_model(cfg: ExperimentConfig):
    K = cfg.K if cfg.accel == CHEB else None
    if cfg.model == "graphdau":
        return DauParams.init(cfg.variant, cfg.accel, cfg.L, K)
    return NestParams.init(cfg.variant, cfg.accel, cfg.L, K, cfg.P)


@dataclass
class MetricsRow:
    experiment_id: str
    task: str
    dataset: str
    model: str
    variant: str
    sigma: float
    missing_rate: float
    split: str
    mean_rmse: float
    std_rmse: float
    param_count: int
    hyperparams: str = ""
    wall_time: float = 0.0


# wall time lives in timing.json so that metrics.csv is reproducible byte for byte
CSV_FIELDS = [f.name for f in fields(MetricsRow) if f.name != "wall_time"]


def write_metrics(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in rows:
            d = asdict(r)
            d.pop("wall_time")
            d["mean_rmse"] = repr(float(r.mean_rmse))
            d["std_rmse"] = repr(float(r.std_rmse))
            w.writerow(d)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for h in history:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in h.items()})


def _row(cfg, split, model, variant, rmse_pair, count, hyper=""):
    return MetricsRow(cfg.name, cfg.task, cfg.dataset_label, model, variant, float(cfg.sigma),
                      float(cfg.missing_rate), split, rmse_pair[0], rmse_pair[1], int(count), hyper)


def _save_outputs(out: Path, samples, restored) -> None:
    np.savez(out / "test_outputs.npz",
             clean=np.array([s.clean for s in samples]),
             degraded=np.array([s.degraded for s in samples]),
             restored=np.array(restored))


def run_experiment(cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> list[MetricsRow]:
    """Generate or load data, fit the model, evaluate on the test split and write artifacts.

    Artifacts in ``cfg.out``: ``config.json``, ``params.json``,
    ``metrics.csv``, ``timing.json``, ``test_outputs.npz`` and, for the
    unrolled models, ``history.csv``.
    """
    t0 = time.perf_counter()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    ds = dataset if dataset is not None else build_dataset(cfg)
    test = ds.split("test")
    valid = ds.split("valid")
    if not test:
        raise ConfigError("dataset has an empty test split")
    rows = [_row(cfg, "test", "noisy", "-", mean_rmse([s.degraded for s in test], test), 0)]

    if cfg.model in LEARNED:
        model = init_model(cfg)
        best, history = train(model, ds, cfg.train_config())
        write_history(out / "history.csv", history)
        (out / "params.json").write_text(json.dumps(best.to_dict(), indent=2))
        restored = predict(lambda Y, H, ctx: forward(best, Y, H, ctx)[0], test, ds)
        rows.append(_row(cfg, "test", cfg.model_label, cfg.variant, mean_rmse(restored, test), param_count(best)))
    else:
        iters = cfg.iters or default_iters(cfg.model)
        template = BaselineSpec(cfg.model, {}, iters)
        grid = cfg.grid or DEFAULT_GRIDS[cfg.model]
        if not valid:
            raise ConfigError("grid search needs a nonempty validation split")
        spec, _, _ = grid_search(template, grid, valid, ds)
        (out / "params.json").write_text(json.dumps(spec.to_dict(), indent=2))
        restored = predict(spec.run, test, ds)
        rows.append(_row(cfg, "test", cfg.model, cfg.model, mean_rmse(restored, test), 0,
                         json.dumps(spec.hyper, sort_keys=True)))

    _save_outputs(out, test, restored)
    wall = time.perf_counter() - t0
    for r in rows:
        r.wall_time = wall
    write_metrics(out / "metrics.csv", rows)
    (out / "timing.json").write_text(json.dumps({"wall_time": wall}))
    return rows


def load_params(path):
    """Load unrolled-model parameters or a baseline spec from JSON."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParamError(f"cannot read parameter file {path}: {exc}") from exc
    if isinstance(d, dict) and "kind" in d:
        try:
            return BaselineSpec(d["kind"], d.get("hyper", {}), d.get("iters", 1))
        except TypeError as exc:
            raise ParamError(f"invalid baseline spec: {exc}") from exc
    return params_from_dict(d)


def evaluate_params(params, cfg: ExperimentConfig, dataset: Optional[Dataset] = None,
                    write: bool = True, tag: str = "eval") -> MetricsRow:
    """Inference-only evaluation of stored parameters on ``cfg``'s test split.

    Rows are labelled ``<name>-<tag>`` so reports can tell them apart from
    the training run that produced the parameters.
    """
    t0 = time.perf_counter()
    if tag:
        cfg = replace(cfg, name=f"{cfg.name}-{tag}")
    ds = dataset if dataset is not None else build_dataset(cfg)
    test = ds.split("test")
    if not test:
        raise ConfigError("dataset has an empty test split")
    if isinstance(params, BaselineSpec):
        fn, label, variant, count = params.run, params.kind, params.kind, 0
        hyper = json.dumps(params.hyper, sort_keys=True)
    else:
        if isinstance(params, DauParams) and any(s.mask is not None for s in test):
            raise ConfigError("GraphDAU parameters cannot restore masked observations")
        accel = params.accel
        if accel == EVD:
            too_big = [gid for gid in {s.graph_id for s in test} if ds.graphs[gid].n_nodes > cfg.max_evd_nodes]
            if too_big:
                raise ConfigError(
                    f"EVD parameters need a full eigendecomposition of a graph with "
                    f"{ds.graphs[too_big[0]].n_nodes} nodes (limit max_evd_nodes={cfg.max_evd_nodes}); "
                    "use Chebyshev-trained parameters instead")
        fn = lambda Y, H, ctx: forward(params, Y, H, ctx)[0]  # noqa: E731
        kind = "graphdau" if isinstance(params, DauParams) else "nestdau"
        label, variant, count, hyper = model_label(kind, params.variant, accel), params.variant, param_count(params), ""
    restored = predict(fn, test, ds)
    row = _row(cfg, "test", label, variant, mean_rmse(restored, test), count, hyper)
    row.wall_time = time.perf_counter() - t0
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        noisy = _row(cfg, "test", "noisy", "-", mean_rmse([s.degraded for s in test], test), 0)
        write_metrics(out / "metrics.csv", [noisy, row])
        (out / "timing.json").write_text(json.dumps({"wall_time": row.wall_time}))
        _save_outputs(out, test, restored)
    return row


def transfer_eval(params_file, cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> MetricsRow:
    """Apply trained parameters unchanged to a (possibly differently sized) target dataset."""
    return evaluate_params(load_params(params_file), cfg, dataset, tag="transfer")


def run_many(configs: list[ExperimentConfig], threads: int = 1) -> list[MetricsRow]:
    if threads <= 1 or len(configs) <= 1:
        return [r for c in configs for r in run_experiment(c)]
    with ThreadPoolExecutor(threads) as pool:
        return [r for rows in pool.map(run_experiment, configs) for r in rows]


# ------------------------------------------------------------------ report

def _model_rank(model: str) -> int:
    if model == "noisy":
        return 0
    if model.startswith("GraphDAU"):
        return 2
    if model.startswith("NestDAU"):
        return 3
    return 1


def emit_report(metrics_dir) -> list[dict]:
    """Collect every ``metrics.csv`` below ``metrics_dir`` into summary tables.

    Writes ``summary.csv`` and ``summary.md`` sorted by task, dataset,
    noise level / missing rate and model, plus ``plotdata_<id>.csv`` for
    each experiment that saved test outputs (first test sample); ``<id>`` is
    the run directory relative to ``metrics_dir`` with ``/`` replaced by ``_``.
    """
    root = Path(metrics_dir)
    files = sorted(p for p in root.rglob("metrics.csv"))
    if not files:
        raise FileNotFoundError(f"no metrics.csv found under {root}")
    rows = [r for p in files for r in read_metrics(p)]
    rows.sort(key=lambda r: (r["task"], r["dataset"], float(r["sigma"]), float(r["missing_rate"]),
                             _model_rank(r["model"]), r["model"], r["experiment_id"]))
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        w.writerows(rows)
    cols = ["task", "dataset", "sigma", "missing_rate", "model", "param_count", "mean_rmse", "std_rmse",
            "experiment_id"]
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        vals = [r[c] for c in cols]
        vals[6] = f"{float(r['mean_rmse']):.4f}"
        vals[7] = f"{float(r['std_rmse']):.4f}"
        lines.append("| " + " | ".join(str(v) for v in vals) + " |")
    (root / "summary.md").write_text("\n".join(lines) + "\n")

    for p in files:
        npz = p.parent / "test_outputs.npz"
        if not npz.exists():
            continue
        rel = p.parent.relative_to(root)
        exp_id = "_".join(rel.parts) if rel.parts else (read_metrics(p) or [{"experiment_id": "run"}])[0]["experiment_id"]
        with np.load(npz) as z:
            clean, degraded, restored = z["clean"][0], z["degraded"][0], z["restored"][0]
        with open(root / f"plotdata_{exp_id}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "clean", "degraded", "restored", "abs_error"])
            for i in range(clean.shape[0]):
                w.writerow([i, repr(float(clean[i])), repr(float(degraded[i])), repr(float(restored[i])),
                            repr(float(abs(restored[i] - clean[i])))])
    return rows
