"""Orchestration behind the command line: bundle grids, run sweeps, ablation
tables, analysis reports and result merging.

Every random choice is seeded from the base seed XOR a stable hash of the
run's identity, so outputs depend only on (config, seed).
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import (ABLATION_SETS, AnalyzeCfg, GenerateCfg, ReportCfg, _RunCfg,
                     bundle_name, derive_seed)
from .dataio import (GraphBundle, RunRecord, _dump_json, load_bundle, make_bundle, mean_stdev,
                     read_results, write_bundle, write_results)
from .graph import unnormalized_laplacian
from .model import build_operators, get_variant, predict, forward, save_params
from .synth import (CorpusFeatures, GenConfig, SyntheticFeatures, attach_features, generate_graph,
                    make_splits)
from .train import TrainConfig, TrainingDiverged, train

log = logging.getLogger(__name__)

# ablation codes that name the same architecture; the alias reuses the target's run
ALIASES = {"N2": "S1"}


# --- generate -----------------------------------------------------------------

@dataclass(frozen=True)
class PlannedBundle:
    name: str
    target_h: float
    replicate: int
    seed: int


def plan_bundles(cfg: GenerateCfg, base_seed: int) -> list[PlannedBundle]:
    return [PlannedBundle(bundle_name(cfg.name_prefix, h, r), h, r, derive_seed(base_seed, "generate", f"{h:.6f}", r))
            for h in cfg.h_grid for r in range(cfg.replicates)]


def _feature_mode(cfg: GenerateCfg):
    f = cfg.features
    if f.kind == "synthetic":
        return SyntheticFeatures(f.dim, f.signal_strength, f.p_signal, f.p_noise)
    return CorpusFeatures(f.path, f.class_map)


def build_bundle(cfg: GenerateCfg, plan: PlannedBundle) -> GraphBundle:
    gen = GenConfig(n=cfg.n, num_classes=cfg.num_classes, target_h=plan.target_h,
                    compatibility=None if cfg.compatibility is None else np.asarray(cfg.compatibility),
                    edges_per_node=cfg.edges_per_node, seed=plan.seed)
    g = generate_graph(gen)
    g = attach_features(g, _feature_mode(cfg), seed=derive_seed(plan.seed, "features"))
    splits = [make_splits(g, cfg.splits.fractions, seed=derive_seed(plan.seed, "split", i))
              for i in range(cfg.splits.count)]
    meta = {
        "target_h": plan.target_h,
        "replicate": plan.replicate,
        "seed": plan.seed,
        "generator": {"edges_per_node": cfg.edges_per_node, "compatibility": cfg.compatibility},
        "features": cfg.features.model_dump(),
        "split_fractions": list(cfg.splits.fractions),
    }
    return make_bundle(g, splits, plan.name, meta)


def generate_bundles(cfg: GenerateCfg, base_seed: int, out: Path) -> list[dict]:
    rows = []
    for plan in plan_bundles(cfg, base_seed):
        bundle = build_bundle(cfg, plan)
        write_bundle(bundle, out / plan.name)
        rows.append({"name": plan.name, "target_h": plan.target_h, "measured_h": bundle.measured_h,
                     "num_edges": bundle.graph.num_edges})
        log.info("wrote %s (measured h %.4f)", plan.name, bundle.measured_h)
    _dump_json({"bundles": rows}, out / "generate.json")
    return rows


# --- train / ablate -------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    bundle_dir: str
    dataset: str
    h: float
    variant: str
    split: int
    seed_index: int
    seed: int


@dataclass
class RunOutcome:
    spec: RunSpec
    record: RunRecord | None
    status: str = "ok"
    error: str | None = None
    buckets: list = field(default_factory=list)


def bundle_dirs(cfg: _RunCfg) -> list[Path]:
    dirs = [Path(b) for b in cfg.bundles]
    if cfg.bundle_root is not None:
        root = Path(cfg.bundle_root)
        if not root.is_dir():
            raise FileNotFoundError(f"bundle_root {root} is not a directory")
        dirs += sorted(p for p in root.iterdir() if (p / "edges.tsv").exists())
    if not dirs:
        raise FileNotFoundError("no bundles found")
    return dirs


def _bundle_header(directory: Path) -> tuple[str, float, int]:
    meta_path = directory / "meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    splits = len(list(directory.glob("splits*.json")))
    h = meta.get("target_h")
    if h is None:
        h = meta.get("measured_h", float("nan"))
    return meta.get("name", directory.name), float(h), splits


def plan_runs(cfg: _RunCfg, variants, base_seed: int) -> list[RunSpec]:
    runs = []
    for d in bundle_dirs(cfg):
        name, h, nsplits = _bundle_header(d)
        if nsplits == 0:
            raise FileNotFoundError(f"bundle {d} has no split file")
        split_ids = cfg.splits if cfg.splits is not None else range(nsplits)
        for variant in variants:
            for s in split_ids:
                if not 0 <= s < nsplits:
                    raise IndexError(f"bundle {name} has {nsplits} splits, split {s} requested")
                for i in range(cfg.num_seeds):
                    parts = (name, variant, s) if i == 0 else (name, variant, s, i)
                    runs.append(RunSpec(str(d), name, h, variant, s, i, derive_seed(base_seed, *parts)))
    return runs


_BUNDLES: dict[str, GraphBundle] = {}
_OPS: dict = {}


def _bundle(path: str) -> GraphBundle:
    if path not in _BUNDLES:
        _BUNDLES[path] = load_bundle(path)
    return _BUNDLES[path]


def _variant(spec: RunSpec, cfg: _RunCfg):
    overrides = {}
    if cfg.settings.dropout is not None:
        overrides["dropout_rate"] = cfg.settings.dropout
    if cfg.settings.embed_nonlinearity is not None:
        overrides["embed_nonlinearity"] = cfg.settings.embed_nonlinearity
    return get_variant(ALIASES.get(spec.variant, spec.variant), **overrides)


def execute_run(spec: RunSpec, cfg: _RunCfg, out: Path | None = None) -> RunOutcome:
    bundle = _bundle(spec.bundle_dir)
    variant = _variant(spec, cfg)
    key = (spec.bundle_dir, variant.separate_embeddings, variant.hops)
    if key not in _OPS:
        _OPS[key] = build_operators(bundle.graph, variant)
    s = cfg.settings
    tc = TrainConfig(learning_rate=s.learning_rate, l2=s.l2, max_epochs=s.max_epochs, patience=s.patience,
                     seed=spec.seed, hidden_dim=s.hidden_dim)
    split = bundle.splits[spec.split]
    try:
        res = train(bundle, split, variant, tc, operators=_OPS[key])
    except TrainingDiverged as exc:
        return RunOutcome(spec, None, "failed", str(exc))
    record = RunRecord(spec.dataset, spec.h, spec.variant, spec.split, spec.seed, res.train_acc,
                       res.val_acc, res.test_acc, res.epochs,
                       round(res.wall_ms, 3) if cfg.record_timing else 0.0)
    outcome = RunOutcome(spec, record)
    tag = f"{spec.dataset}_{spec.variant}_s{spec.split}_{spec.seed_index}"
    if cfg.degree_buckets is not None:
        g = bundle.graph
        bounds = cfg.degree_buckets.boundaries or analysis.quantile_boundaries(g.degrees, cfg.degree_buckets.quantiles)
        logits, _ = forward(res.params, g, _OPS[key], variant, "eval")
        outcome.buckets = analysis.degree_bucket_accuracy(predict(logits), g.labels, g, bounds, split.test)
    if out is not None and cfg.save_history:
        (out / "history").mkdir(parents=True, exist_ok=True)
        res.history.write_csv(out / "history" / f"{tag}.csv")
    if out is not None and cfg.save_checkpoints:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        save_params(res.params, out / "checkpoints" / f"{tag}.bin")
    return outcome


def _execute_star(args):
    return execute_run(*args)


def run_all(runs: list[RunSpec], cfg: _RunCfg, out: Path, jobs: int = 1) -> list[RunOutcome]:
    """Execute ``runs`` (in parallel when ``jobs > 1``); results keep plan order."""
    primary, aliased = [], []
    executed = {(r.dataset, r.variant, r.split, r.seed_index) for r in runs}
    for r in runs:
        target = ALIASES.get(r.variant)
        if target is not None and (r.dataset, target, r.split, r.seed_index) in executed:
            aliased.append(r)
        else:
            primary.append(r)
    args = [(r, cfg, out) for r in primary]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_execute_star, args))
    else:
        outcomes = []
        for i, a in enumerate(args, 1):
            outcomes.append(execute_run(*a))
            log.info("run %d/%d %s %s split %d: %s", i, len(args), a[0].dataset, a[0].variant,
                     a[0].split, outcomes[-1].status)
    done = {(o.spec.dataset, o.spec.variant, o.spec.split, o.spec.seed_index): o for o in outcomes}
    for r in aliased:
        src = done[(r.dataset, ALIASES[r.variant], r.split, r.seed_index)]
        rec = None if src.record is None else replace(src.record, variant=r.variant)
        done[(r.dataset, r.variant, r.split, r.seed_index)] = RunOutcome(r, rec, src.status, src.error, src.buckets)
    return [done[(r.dataset, r.variant, r.split, r.seed_index)] for r in runs]


def write_run_outputs(outcomes: list[RunOutcome], out: Path, extra: dict | None = None) -> dict:
    records = [o.record for o in outcomes if o.record is not None]
    statuses = [{"dataset": o.spec.dataset, "variant": o.spec.variant, "split": o.spec.split,
                 "seed": o.spec.seed, "status": o.status, **({"error": o.error} if o.error else {})}
                for o in outcomes]
    failed = sum(o.status != "ok" for o in outcomes)
    info = {"runs": statuses, "failed": failed, **(extra or {})}
    if records:
        summary = write_results(records, out / "results.csv", out / "summary.json", extra=info)
    else:
        summary = info
        _dump_json(info, out / "summary.json")
    if any(o.buckets for o in outcomes):
        analysis.write_bucket_csv(
            [(f"{o.spec.dataset}:{o.spec.variant}:{o.spec.split}:{o.spec.seed_index}", b)
             for o in outcomes for b in o.buckets],
            out / "degree_buckets.csv")
    return summary


# --- ablation tables ----------------------------------------------------------------

def ablation_tables(records: list[RunRecord], axes=("D1", "D2", "D3"), metric: str = "test_acc") -> dict:
    """Per axis: ``{h: {variant: (mean, stdev, runs)}}`` over the bundles at each h."""
    tables = {}
    for axis in axes:
        table: dict = {}
        for v in ABLATION_SETS[axis]:
            by_h: dict = {}
            for r in records:
                if r.variant == v:
                    by_h.setdefault(r.h, []).append(getattr(r, metric))
            for h, vals in by_h.items():
                m, s = mean_stdev(vals)
                table.setdefault(h, {})[v] = (m, s, len(vals))
        tables[axis] = dict(sorted(table.items()))
    return tables


def _fmt_cell(entry) -> str:
    if entry is None:
        return "n/a"
    m, s, _ = entry
    return f"{100 * m:.2f} ± {100 * s:.2f}"


def render_table(table: dict, variants, title: str = "") -> str:
    lines = [f"### {title}", ""] if title else []
    lines.append("| h | " + " | ".join(variants) + " |")
    lines.append("|---" * (len(variants) + 1) + "|")
    for h, row in table.items():
        lines.append(f"| {h:.2f} | " + " | ".join(_fmt_cell(row.get(v)) for v in variants) + " |")
    return "\n".join(lines) + "\n"


def write_ablation(records: list[RunRecord], axes, out: Path) -> dict:
    tables = ablation_tables(records, axes)
    for axis, table in tables.items():
        variants = ABLATION_SETS[axis]
        (out / f"ablation_{axis}.md").write_text(render_table(table, variants, axis), encoding="utf-8")
        with open(out / f"ablation_{axis}.csv", "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["h", "variant", "mean", "stdev", "runs"])
            for h, row in table.items():
                for v in variants:
                    if v in row:
                        m, s, k = row[v]
                        w.writerow([repr(h), v, repr(m), repr(s), k])
    return tables


# --- analyze ----------------------------------------------------------------------

def run_analyze(cfg: AnalyzeCfg, base_seed: int, out: Path) -> dict:
    written = {}
    if cfg.thresholds is not None:
        reports, residuals = [], []
        for k in cfg.thresholds.num_classes:
            for d in cfg.thresholds.d:
                for h in cfg.thresholds.h:
                    rep = analysis.gcn_perturbation_thresholds(h, d, k)
                    reports.append(rep)
                    try:
                        res = analysis.verify_optimal_weight(h, d, k).max_residual
                    except analysis.SingularConfiguration:
                        res = None
                    residuals.append(res)
        analysis.write_threshold_csv(reports, out / "thresholds.csv")
        finite = [r for r in residuals if r is not None]
        analysis.write_json({"configurations": len(reports),
                             "singular": sum(r is None for r in residuals),
                             "max_inverse_residual": max(finite) if finite else None},
                            out / "thresholds.json")
        written["thresholds"] = len(reports)
    if cfg.two_hop is not None:
        with open(out / "two_hop.csv", "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["h", "num_classes", "margin", "expected"])
            worst = 0.0
            for k in cfg.two_hop.num_classes:
                for h in cfg.two_hop.h:
                    _, margin = analysis.two_hop_compatibility(h, k)
                    expected = (h - (1 - h) / (k - 1)) ** 2
                    worst = max(worst, abs(margin - expected))
                    w.writerow([repr(h), k, repr(margin), repr(expected)])
        analysis.write_json({"max_abs_deviation": worst}, out / "two_hop.json")
        written["two_hop"] = worst
    if cfg.spectral is not None:
        bundle = load_bundle(cfg.spectral.bundle)
        g = bundle.graph
        if cfg.spectral.signals == "labels":
            signals = np.stack([(g.labels == c).astype(np.float64) for c in range(g.num_classes)])
            names = [f"class{c}" for c in range(g.num_classes)]
        else:
            rng = np.random.default_rng(derive_seed(base_seed, "spectral", bundle.name))
            signals = rng.integers(0, 2, size=(cfg.spectral.num_random, g.n)).astype(np.float64)
            names = [f"random{i}" for i in range(cfg.spectral.num_random)]
        rep = analysis.spectral_energy(unnormalized_laplacian(g), signals, solver=cfg.spectral.solver)
        summary = rep.summary()
        summary["bundle"] = bundle.name
        summary["signals"] = names
        analysis.write_json(summary, out / "spectral.json")
        analysis.write_tail_energy_csv(rep, out / "tail_energy.csv", names)
        written["spectral"] = summary
    return written


# --- report -----------------------------------------------------------------------

class DuplicateRuns(ValueError):
    pass


def _results_path(p: str) -> Path:
    path = Path(p)
    return path / "results.csv" if path.is_dir() else path


def merge_results(paths) -> list[RunRecord]:
    merged, seen, clashes = [], {}, []
    for p in paths:
        for r in read_results(_results_path(p)):
            key = (r.dataset, r.variant, r.split, r.seed)
            if key in seen:
                clashes.append(key)
            else:
                seen[key] = r
                merged.append(r)
    if clashes:
        listing = ", ".join(f"({d}, {v}, split {s}, seed {sd})" for d, v, s, sd in clashes)
        raise DuplicateRuns(f"duplicate runs: {listing}")
    return merged


def curves(records: list[RunRecord], metric: str = "test_acc") -> dict:
    """``{variant: [(h, mean, stdev, runs), ...]}`` sorted by h."""
    groups: dict = {}
    for r in records:
        groups.setdefault(r.variant, {}).setdefault(r.h, []).append(getattr(r, metric))
    out = {}
    for v, by_h in sorted(groups.items()):
        out[v] = [(h, *mean_stdev(vals), len(vals)) for h, vals in sorted(by_h.items())]
    return out


def run_report(cfg: ReportCfg, out: Path) -> dict:
    records = merge_results(cfg.inputs)
    cv = curves(records, cfg.metric)
    variants = list(cv)
    table = {}
    for v, pts in cv.items():
        for h, m, s, k in pts:
            table.setdefault(h, {})[v] = (m, s, k)
    table = dict(sorted(table.items()))
    text = "# Accuracy by homophily\n\n" + render_table(table, variants)
    (out / "report.md").write_text(text, encoding="utf-8")
    with open(out / "curves.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variant", "h", "mean", "stdev", "runs"])
        for v, pts in cv.items():
            for h, m, s, k in pts:
                w.writerow([v, repr(h), repr(m), repr(s), k])
    write_results(records, out / "results.csv", out / "summary.json")
    return {"records": len(records), "variants": variants}
