"""Graph bundles on disk and experiment result files.

A bundle directory holds ``edges.tsv``, ``nodes.csv``, one or more split
files (``splits.json`` or ``splits_<i>.json``) and ``meta.json``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import (Graph, GraphError, edge_homophily, from_edge_list,
                    read_edge_list, read_node_table, write_edge_list, write_node_table)
from .synth import SplitAssignment

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("dataset", "h", "variant", "split", "seed", "train_acc", "val_acc",
                  "test_acc", "epochs", "wall_ms")


@dataclass
class GraphBundle:
    graph: Graph
    splits: list[SplitAssignment]
    name: str
    measured_h: float
    meta: dict = field(default_factory=dict)


def make_bundle(graph: Graph, splits, name: str, meta: dict | None = None) -> GraphBundle:
    h = edge_homophily(graph) if graph.num_edges else float("nan")
    return GraphBundle(graph, list(splits), name, h, dict(meta or {}))


def degree_stats(graph: Graph) -> dict:
    d = graph.degrees
    return {"min": int(d.min()), "max": int(d.max()), "mean": float(d.mean())}


def write_bundle(bundle: GraphBundle, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    write_edge_list(g, directory / "edges.tsv")
    write_node_table(g, directory / "nodes.csv")
    if len(bundle.splits) == 1:
        names = ["splits.json"]
    else:
        names = [f"splits_{i}.json" for i in range(len(bundle.splits))]
    for fname, split in zip(names, bundle.splits):
        _dump_json(split.to_dict(), directory / fname, indent=None)
    meta = dict(bundle.meta)
    meta.update({
        "name": bundle.name,
        "n": g.n,
        "num_edges": g.num_edges,
        "num_classes": g.num_classes,
        "feature_dim": g.feature_dim,
        "measured_h": bundle.measured_h,
        "degree": degree_stats(g),
    })
    _dump_json(meta, directory / "meta.json")
    return directory


def _split_files(directory: Path) -> list[Path]:
    files = [p for p in directory.glob("splits*.json") if re.fullmatch(r"splits(_\d+)?\.json", p.name)]

    def key(p):
        m = re.search(r"_(\d+)", p.name)
        return int(m.group(1)) if m else -1

    return sorted(files, key=key)


def load_bundle(directory) -> GraphBundle:
    directory = Path(directory)
    for fname in ("edges.tsv", "nodes.csv"):
        if not (directory / fname).exists():
            raise FileNotFoundError(f"bundle {directory} is missing {fname}")
    labels, features = read_node_table(directory / "nodes.csv")
    n = len(labels)
    edges = read_edge_list(directory / "edges.tsv")
    meta = {}
    if (directory / "meta.json").exists():
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    k = meta.get("num_classes")
    graph = from_edge_list(edges, n, labels, features, num_classes=k)
    stats = graph.meta["ingest"]
    if stats["self_loops"] or stats["duplicates"]:
        log.info("%s: dropped %d self-loops, merged %d duplicate edges",
                 directory.name, stats["self_loops"], stats["duplicates"])
    log.info("%s: symmetrized %d one-directional edge lines", directory.name, stats["one_way_pairs"])

    files = _split_files(directory)
    if not files:
        raise FileNotFoundError(f"bundle {directory} has no split file")
    splits = []
    for p in files:
        try:
            splits.append(SplitAssignment.from_dict(json.loads(p.read_text(encoding="utf-8")), n))
        except GraphError as exc:
            raise GraphError(f"{p.name}: {exc}") from None
    name = meta.get("name", directory.name)
    for key in ("name", "n", "num_edges", "num_classes", "feature_dim", "measured_h", "degree"):
        meta.pop(key, None)
    return make_bundle(graph, splits, name, meta)


def _dump_json(obj, path, indent=2) -> None:
    text = json.dumps(obj, indent=indent, sort_keys=True, default=_json_default)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# --- results --------------------------------------------------------------

@dataclass
class RunRecord:
    dataset: str
    h: float
    variant: str
    split: int
    seed: int
    train_acc: float
    val_acc: float
    test_acc: float
    epochs: int
    wall_ms: float


def mean_stdev(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    values = list(values)
    mean = statistics.fmean(values)
    return mean, statistics.stdev(values) if len(values) > 1 else 0.0


def summarize(records) -> dict:
    """Mean and stdev of test accuracy per (dataset, variant) and per (h, variant)."""
    by_dataset: dict = {}
    by_h: dict = {}
    for r in records:
        by_dataset.setdefault((r.dataset, r.variant), []).append(r)
        by_h.setdefault((round(r.h, 6), r.variant), []).append(r)

    def block(groups, key_names):
        out = []
        for key, rs in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
            entry = dict(zip(key_names, key))
            for metric in ("test_acc", "val_acc", "train_acc"):
                m, s = mean_stdev(getattr(r, metric) for r in rs)
                entry[f"{metric}_mean"] = m
                entry[f"{metric}_stdev"] = s
            entry["runs"] = len(rs)
            out.append(entry)
        return out

    return {
        "by_dataset": block(by_dataset, ("dataset", "variant")),
        "by_h": block(by_h, ("h", "variant")),
    }


def write_results(records, path, summary_path=None, extra: dict | None = None) -> dict:
    """Write ``results.csv`` plus a JSON summary next to it."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            row = asdict(r)
            w.writerow([_cell(row[c]) for c in RESULT_COLUMNS])
    summary = summarize(records)
    if extra:
        summary.update(extra)
    _dump_json(summary, summary_path or path.with_name("summary.json"))
    return summary


def _cell(x):
    if isinstance(x, float):
        return repr(x)
    return x


def read_results(path) -> list[RunRecord]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as f:
        rows = csv.reader(f)
        header = next(rows, None)
        if tuple(header or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        out = []
        for lineno, row in enumerate(rows, 2):
            try:
                out.append(RunRecord(row[0], float(row[1]), row[2], int(row[3]), int(row[4]),
                                     float(row[5]), float(row[6]), float(row[7]), int(row[8]),
                                     float(row[9])))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed result row") from None
    return out


def is_finite_record(r: RunRecord) -> bool:
    return all(math.isfinite(x) for x in (r.train_acc, r.val_acc, r.test_acc))
