"""Signal synthesis, degradation, dataset splits and CSV/bundle I/O."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .context import GraphContext
from .graph import (
    Graph,
    Partition,
    extract_subgraph,
    graph_operators,
    knn_graph,
    load_graph,
    partition,
    save_graph,
    synth_graph,
)
from .restorer import DegradationOp
from .spectral import eigendecompose

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DataError(ValueError):
    pass


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_signal(kind: str, g: Graph, part: Optional[Partition] = None, seed=None,
               coeffs: Optional[np.ndarray] = None, decomp=None) -> np.ndarray:
    """Synthesize a clean graph signal.

    kind
        ``"pwc"``: one uniform integer in 1..6 per cluster.
        ``"pws"``: per cluster, the first three eigenvectors of the induced
        subgraph Laplacian with coefficients uniform in [0, 5].
        ``"gs"``: first five whole-graph eigenvectors, coefficients in [0, 5].
    coeffs
        Overrides the random expansion coefficients of ``"gs"``.
    """
    rng = _rng(seed)
    n = g.n_nodes
    if kind in ("pwc", "pws"):
        if part is None:
            raise DataError(f"signal kind {kind!r} needs a partition")
        if part.labels.shape != (n,):
            raise DataError("partition does not match graph size")
        clusters = part.clusters()
        if any(c.size == 0 for c in clusters):
            raise DataError("partition has an empty cluster")
        if kind == "pwc":
            values = rng.integers(1, 7, size=part.k)
            return values[part.labels].astype(float)
        x = np.zeros(n)
        for nodes in clusters:
            sub, idx = extract_subgraph(g, nodes)
            U = eigendecompose(graph_operators(sub)[0]).eigenvectors
            m = min(3, sub.n_nodes)
            x[idx] = U[:, :m] @ rng.uniform(0.0, 5.0, size=m)
        return x
    if kind == "gs":
        U = (decomp if decomp is not None else eigendecompose(graph_operators(g)[0])).eigenvectors
        m = min(5, n)
        d = rng.uniform(0.0, 5.0, size=m) if coeffs is None else np.asarray(coeffs, dtype=float)
        return U[:, : d.shape[0]] @ d
    raise DataError(f"unknown signal kind {kind!r}")


def add_awgn(x, sigma: float, seed=None) -> np.ndarray:
    if sigma < 0:
        raise DataError(f"sigma must be nonnegative, got {sigma}")
    x = np.asarray(x, dtype=float)
    if sigma == 0:
        return x.copy()
    return x + _rng(seed).normal(0.0, sigma, size=x.shape)


def make_mask(n: int, missing_rate: float, seed=None) -> DegradationOp:
    """Binary diagonal mask with exactly ``round(rate * n)`` missing nodes."""
    if not 0 <= missing_rate < 1:
        raise DataError(f"missing rate must be in [0, 1), got {missing_rate}")
    n_missing = int(round(missing_rate * n))
    if n_missing == 0:
        return DegradationOp.identity()
    mask = np.ones(n)
    mask[_rng(seed).choice(n, n_missing, replace=False)] = 0.0
    return DegradationOp.from_mask(mask)


@dataclass
class Sample:
    graph_id: str
    clean: np.ndarray
    degraded: np.ndarray
    mask: Optional[np.ndarray] = None

    @property
    def H(self) -> DegradationOp:
        return DegradationOp.identity() if self.mask is None else DegradationOp(self.mask)


@dataclass
class Dataset:
    graphs: dict
    samples: list
    splits: dict
    meta: dict = field(default_factory=dict)
    _contexts: dict = field(default_factory=dict, repr=False)

    def split(self, name: str) -> list[Sample]:
        return [self.samples[i] for i in self.splits.get(name, [])]

    def context(self, graph_id: str) -> GraphContext:
        if graph_id not in self._contexts:
            self._contexts[graph_id] = GraphContext(self.graphs[graph_id])
        return self._contexts[graph_id]

    def validate(self) -> None:
        seen: set = set()
        for name, idx in self.splits.items():
            idx = set(int(i) for i in idx)
            if seen & idx:
                raise DataError(f"split {name!r} overlaps another split")
            seen |= idx
        if seen != set(range(len(self.samples))):
            raise DataError("splits must cover every sample exactly once")
        for i, s in enumerate(self.samples):
            n = self.graphs[s.graph_id].n_nodes
            if s.clean.shape != (n,) or s.degraded.shape != (n,):
                raise DataError(f"sample {i}: signal length does not match graph {s.graph_id!r} (n={n})")
            if s.mask is not None and s.mask.shape != (n,):
                raise DataError(f"sample {i}: mask length does not match graph")


def contiguous_splits(sizes: Sequence[int]) -> dict:
    if len(sizes) != 3 or any(int(s) < 0 for s in sizes):
        raise DataError(f"splits must be three nonnegative sizes, got {sizes}")
    bounds = np.cumsum([0] + [int(s) for s in sizes])
    return {name: list(range(bounds[i], bounds[i + 1])) for i, name in enumerate(SPLITS)}


def degrade(clean: np.ndarray, sigma: float, missing_rate: float, rng) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Observation ``H (x + n)``: missing nodes are set to zero."""
    noisy = add_awgn(clean, sigma, rng)
    H = make_mask(clean.shape[0], missing_rate, rng)
    return H.apply(noisy), H.mask


DEFAULT_PARTITION_K = {"pwc": 8, "pws": 8, "gs": 0}


def generate_dataset(graph: str = "community", n: int = 250, signal: str = "pwc",
                     sigma: float = 0.5, missing_rate: float = 0.0,
                     splits: Sequence[int] = (500, 50, 50), seed: int = 0,
                     graph_seed: Optional[int] = None, perturbed: bool = False,
                     n_clusters: int = 3, k: int = 6, partition_k: Optional[int] = None) -> Dataset:
    """Synthetic clean/degraded pairs on a fixed or per-sample graph.

    Sample ``i`` draws its signal, noise and mask from ``default_rng(seed + i)``.
    With ``perturbed=True`` every sample gets its own graph generated from
    ``graph_seed + i``; otherwise a single graph from ``graph_seed`` is shared.
    """
    graph_seed = seed if graph_seed is None else graph_seed
    total = int(sum(splits))
    if total == 0:
        raise DataError("dataset must contain at least one sample")
    pk = partition_k if partition_k is not None else DEFAULT_PARTITION_K.get(signal, 0)

    def make_graph(gseed):
        g = synth_graph(graph, n, gseed, n_clusters=n_clusters, k=k)
        part = None
        if signal in ("pwc", "pws"):
            if graph == "community" and g.labels is not None and partition_k is None:
                part = Partition(g.labels, int(g.labels.max()) + 1)
            else:
                part = partition(g, pk, seed=gseed)
        decomp = eigendecompose(graph_operators(g)[0]) if signal == "gs" else None
        return g, part, decomp

    graphs: dict = {}
    samples = []
    shared = None if perturbed else make_graph(graph_seed)
    for i in range(total):
        if perturbed:
            gid = f"g{i}"
            g, part, decomp = make_graph(graph_seed + i)
        else:
            gid = "g0"
            g, part, decomp = shared
        graphs[gid] = g
        rng = np.random.default_rng(seed + i)
        clean = gen_signal(signal, g, part, rng, decomp=decomp)
        degraded, mask = degrade(clean, sigma, missing_rate, rng)
        samples.append(Sample(gid, clean, degraded, mask))
    meta = {
        "source": "synthetic", "graph": graph, "n": n, "signal": signal, "sigma": sigma,
        "missing_rate": missing_rate, "seed": seed, "graph_seed": graph_seed,
        "perturbed": perturbed, "n_clusters": n_clusters, "k": k, "partition_k": partition_k,
        "splits": [int(s) for s in splits],
    }
    ds = Dataset(graphs, samples, contiguous_splits(splits), meta)
    ds.validate()
    return ds


# ---------------------------------------------------------------- CSV ingest

def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if row]


def _parse_float(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{where}: non-numeric value {cell!r}") from None
    if not np.isfinite(v):
        raise DataError(f"{where}: missing or non-finite value {cell!r}")
    return v


def read_nodes_csv(path) -> tuple[list[str], np.ndarray]:
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty nodes file")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["id", "x", "y"] or len(header) not in (3, 4) or (len(header) == 4 and header[3] != "z"):
        raise DataError(f"{path}: header must be id,x,y[,z], got {','.join(header)}")
    ids, coords = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path} row {r}: expected {len(header)} columns, got {len(row)}")
        ids.append(row[0].strip())
        coords.append([_parse_float(c, f"{path} row {r}") for c in row[1:]])
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate node ids")
    return ids, np.array(coords)


def read_signals_csv(path, node_ids: Optional[Sequence[str]] = None) -> tuple[list[str], np.ndarray]:
    """Wide signal matrix: header ``sample_id,<node ids...>``, one row per sample.

    When ``node_ids`` is given the columns are reordered to match it.
    """
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty signals file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "sample_id":
        raise DataError(f"{path}: first column must be sample_id")
    cols = header[1:]
    if node_ids is not None:
        if set(cols) != set(node_ids) or len(cols) != len(node_ids):
            missing = sorted(set(node_ids) - set(cols))
            extra = sorted(set(cols) - set(node_ids))
            raise DataError(f"{path}: node id mismatch (missing {missing[:5]}, unknown {extra[:5]})")
        order = [cols.index(i) for i in node_ids]
    else:
        order = list(range(len(cols)))
    sample_ids, values = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path} row {r}: expected {len(header)} columns, got {len(row)}")
        sample_ids.append(row[0])
        vals = [_parse_float(c, f"{path} row {r}") for c in row[1:]]
        values.append([vals[j] for j in order])
    return sample_ids, np.array(values, dtype=float).reshape(len(values), len(cols))


def write_signals_csv(path, node_ids: Sequence, sample_ids: Sequence, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id"] + [str(i) for i in node_ids])
        for sid, row in zip(sample_ids, np.asarray(matrix, dtype=float).tolist()):
            w.writerow([sid] + [repr(v) for v in row])


def load_csv_dataset(nodes_csv, signals_csv, k: int = 8, sigma: Optional[float] = None,
                     splits: Optional[Sequence[int]] = None) -> tuple[Graph, Dataset]:
    """Build a k-NN graph from node coordinates and bind each signal row to it.

    Degraded signals equal the clean ones here; noise and masks are applied
    afterwards with :func:`degrade_dataset`. Without ``splits`` every row is
    a test sample.
    """
    ids, coords = read_nodes_csv(nodes_csv)
    sample_ids, X = read_signals_csv(signals_csv, ids)
    n = len(ids)
    if k >= n:
        log.warning("k=%d too large for %d nodes; using k=%d", k, n, n - 1)
        k = n - 1
    g = knn_graph(coords, k, sigma)
    samples = [Sample("g0", row.copy(), row.copy(), None) for row in X]
    if splits is None:
        splits = (0, 0, len(samples))
    if sum(splits) != len(samples):
        raise DataError(f"splits {list(splits)} do not sum to the {len(samples)} signal rows")
    meta = {"source": "csv", "nodes": str(nodes_csv), "signals": str(signals_csv), "k": k,
            "node_ids": ids, "sample_ids": sample_ids, "splits": [int(s) for s in splits]}
    ds = Dataset({"g0": g}, samples, contiguous_splits(splits), meta)
    ds.validate()
    return g, ds


def degrade_dataset(ds: Dataset, sigma: float, missing_rate: float = 0.0, seed: int = 0) -> Dataset:
    samples = []
    for i, s in enumerate(ds.samples):
        rng = np.random.default_rng(seed + i)
        degraded, mask = degrade(s.clean, sigma, missing_rate, rng)
        samples.append(Sample(s.graph_id, s.clean, degraded, mask))
    meta = dict(ds.meta, sigma=sigma, missing_rate=missing_rate, seed=seed)
    return Dataset(ds.graphs, samples, ds.splits, meta)


# ------------------------------------------------------------- bundle on disk

def save_dataset(ds: Dataset, directory) -> Path:
    """Write ``graph_*.json``, ``signals.csv``, ``degraded.csv``, ``masks.csv``, ``meta.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for gid, g in ds.graphs.items():
        save_graph(g, d / f"graph_{gid}.json")
    n = ds.samples[0].clean.shape[0]
    node_ids = ds.meta.get("node_ids") or list(range(n))
    sids = list(range(len(ds.samples)))
    write_signals_csv(d / "signals.csv", node_ids, sids, np.array([s.clean for s in ds.samples]))
    write_signals_csv(d / "degraded.csv", node_ids, sids, np.array([s.degraded for s in ds.samples]))
    if any(s.mask is not None for s in ds.samples):
        masks = np.array([np.ones(n) if s.mask is None else s.mask for s in ds.samples])
        write_signals_csv(d / "masks.csv", node_ids, sids, masks)
    meta = dict(ds.meta)
    meta["split_indices"] = {k: list(map(int, v)) for k, v in ds.splits.items()}
    meta["graph_ids"] = [s.graph_id for s in ds.samples]
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    gids = meta.pop("graph_ids")
    splits = meta.pop("split_indices")
    graphs = {gid: load_graph(d / f"graph_{gid}.json") for gid in dict.fromkeys(gids)}
    _, clean = read_signals_csv(d / "signals.csv")
    _, degraded = read_signals_csv(d / "degraded.csv")
    masks = read_signals_csv(d / "masks.csv")[1] if (d / "masks.csv").exists() else None
    samples = []
    for i, gid in enumerate(gids):
        m = None
        if masks is not None and not np.all(masks[i] == 1):
            m = masks[i]
        samples.append(Sample(gid, clean[i], degraded[i], m))
    ds = Dataset(graphs, samples, {k: list(v) for k, v in splits.items()}, meta)
    ds.validate()
    return ds
