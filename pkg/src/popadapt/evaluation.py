"""Mann-Whitney AUC, experiment sweeps and result tables."""

from __future__ import annotations

import io
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import mean, stdev
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .baselines import MethodId, run_method, seal_dataset
from .data import DataError, Dataset, SplitSpec, SymptomVocabulary, split_labelled
from .mapfit import ModelConfig


def auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney AUC with midrank tie handling.

    Equals the fraction of (positive, negative) pairs ranked correctly,
    counting ties as one half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels length mismatch")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ExperimentSpec:
    target_dataset_id: str
    methods: tuple[MethodId, ...]
    proportions: tuple[float, ...]
    seeds: tuple[int, ...]
    config: ModelConfig

    def __post_init__(self):
        if not self.seeds:
            raise DataError("need at least one seed")
        for p in self.proportions:
            if not 0.0 < p < 1.0:
                raise DataError(f"proportion {p} outside (0, 1)")


@dataclass(frozen=True)
class ResultRow:
    target: str
    method: MethodId
    proportion: float
    seed: int
    auc: Optional[float]
    error: Optional[str] = None


@dataclass(frozen=True)
class Aggregate:
    target: str
    method: MethodId
    proportion: float
    mean_auc: float
    sd_auc: float
    n_seeds: int


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def ok_rows(self) -> list[ResultRow]:
        return [r for r in self.rows if r.auc is not None]

    def aggregates(self) -> list[Aggregate]:
        cells: dict[tuple, list[float]] = {}
        for r in self.ok_rows():
            cells.setdefault((r.target, r.method, r.proportion), []).append(r.auc)
        out = []
        for (target, method, proportion), aucs in sorted(
            cells.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2])
        ):
            sd = stdev(aucs) if len(aucs) > 1 else 0.0
            out.append(Aggregate(target, method, proportion, mean(aucs), sd, len(aucs)))
        return out

    def cell_aucs(self, target: str, method: MethodId, proportion: float) -> dict[int, float]:
        return {
            r.seed: r.auc
            for r in self.ok_rows()
            if r.target == target and r.method == method and abs(r.proportion - proportion) < 1e-12
        }

    def extend(self, other: "ResultTable") -> None:
        self.rows.extend(other.rows)


def _run_cell(args) -> ResultRow:
    spec, datasets, vocab, method, proportion, seed = args
    target = next(d for d in datasets if d.dataset_id == spec.target_dataset_id)
    sources = [d for d in datasets if d.dataset_id != spec.target_dataset_id]
    try:
        labelled, heldout = split_labelled(target, SplitSpec(proportion, seed))
        sealed, key = seal_dataset(heldout)
        scored = run_method(method, sources, labelled, sealed, spec.config, vocab)
        score_by_id = dict(scored)
        scores = [score_by_id[o.obs_id] for o in sealed.observations]
        labels = sealed.reveal_labels(key)
        value = auc(scores, labels)
        return ResultRow(spec.target_dataset_id, method, proportion, seed, value)
    except Exception as exc:  # error isolation per cell
        return ResultRow(
            spec.target_dataset_id, method, proportion, seed, None, str(exc)
        )


def run_experiment(
    spec: ExperimentSpec,
    datasets: Sequence[Dataset],
    vocab: Optional[SymptomVocabulary] = None,
    jobs: int = 1,
) -> ResultTable:
    """Run every (proportion, seed, method) cell for one target.

    Cells are independent; with jobs > 1 they run in a process pool. Results
    are gathered by cell key and ordered canonically, so the output does not
    depend on the degree of parallelism.
    """
    ids = {d.dataset_id for d in datasets}
    if spec.target_dataset_id not in ids:
        raise DataError(f"target {spec.target_dataset_id!r} not among datasets")
    if len(ids) < 2:
        raise DataError("need at least one source dataset besides the target")

    tasks = [
        (spec, tuple(datasets), vocab, method, proportion, seed)
        for proportion in spec.proportions
        for seed in spec.seeds
        for method in spec.methods
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    rows.sort(key=lambda r: (r.target, r.method.value, r.proportion, r.seed))
    return ResultTable(rows)


def run_experiments(
    targets: Sequence[str],
    methods: Sequence[MethodId],
    proportions: Sequence[float],
    seeds: Sequence[int],
    config: ModelConfig,
    datasets: Sequence[Dataset],
    vocab: Optional[SymptomVocabulary] = None,
    jobs: int = 1,
) -> ResultTable:
    """Run one experiment per target and merge the tables."""
    table = ResultTable()
    for target in targets:
        spec = ExperimentSpec(
            target, tuple(methods), tuple(proportions), tuple(seeds), config
        )
        table.extend(run_experiment(spec, datasets, vocab, jobs=jobs))
    return table


def compare_methods(
    table: ResultTable, a: MethodId, b: MethodId, proportion: float
) -> dict[str, tuple[float, list[float]]]:
    """Per-target mean AUC difference a - b with paired-by-seed differences."""
    targets = sorted({r.target for r in table.ok_rows()})
    out = {}
    for target in targets:
        cell_a = table.cell_aucs(target, a, proportion)
        cell_b = table.cell_aucs(target, b, proportion)
        common = sorted(set(cell_a) & set(cell_b))
        if not common:
            raise DataError(
                f"no paired cells for {a.value} vs {b.value} at {proportion} on {target}"
            )
        diffs = [cell_a[s] - cell_b[s] for s in common]
        out[target] = (mean(diffs), diffs)
    return out


_METHOD_LABELS = {
    MethodId.TARGET_ONLY: "Target Only",
    MethodId.POOLED_LR: "Logistic Regression",
    MethodId.FEDA: "FEDA (Only symptoms)",
    MethodId.FEDA_P: "FEDA+p (With demographics)",
    MethodId.HIER: "Hierarchical (Only symptoms)",
    MethodId.HIER_P: "Hierarchical+p (With demographics)",
}

_TABLE1_METHOD_ORDER = (
    MethodId.TARGET_ONLY,
    MethodId.POOLED_LR,
    MethodId.FEDA,
    MethodId.FEDA_P,
    MethodId.HIER,
    MethodId.HIER_P,
)


def rows_csv(table: ResultTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["target", "method", "proportion", "seed", "auc", "error"])
    for r in table.rows:
        writer.writerow([
            r.target, r.method.value, f"{r.proportion:g}", r.seed,
            "" if r.auc is None else f"{r.auc:.6f}", r.error or "",
        ])
    return out.getvalue()


def aggregates_csv(table: ResultTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["target", "method", "proportion", "mean_auc", "sd_auc", "n_seeds"])
    for a in table.aggregates():
        writer.writerow([
            a.target, a.method.value, f"{a.proportion:g}",
            f"{a.mean_auc:.6f}", f"{a.sd_auc:.6f}", a.n_seeds,
        ])
    return out.getvalue()


def scores_csv(scored: Sequence[tuple[str, float]], method: MethodId) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["obs_id", "method", "score"])
    for obs_id, score in scored:
        writer.writerow([obs_id, method.value, f"{score:.6f}"])
    return out.getvalue()


def methods_by_target_markdown(table: ResultTable, proportion: float) -> str:
    """Markdown grid shaped like the methods-by-targets comparison table."""
    targets = sorted({r.target for r in table.ok_rows()})
    methods = [m for m in _TABLE1_METHOD_ORDER
               if any(r.method == m for r in table.ok_rows())]
    agg = {(a.target, a.method): a for a in table.aggregates()
           if abs(a.proportion - proportion) < 1e-12}
    lines = [
        "| Method | " + " | ".join(targets) + " |",
        "| --- | " + " | ".join("---" for _ in targets) + " |",
    ]
    for m in methods:
        cells = []
        for t in targets:
            a = agg.get((t, m))
            cells.append(f"{a.mean_auc:.3f}" if a else "n/a")
        lines.append(f"| {_METHOD_LABELS[m]} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def proportion_sweep_markdown(
    table: ResultTable, methods: Sequence[MethodId]
) -> str:
    """Markdown grid: one row per target, method columns per proportion."""
    targets = sorted({r.target for r in table.ok_rows()})
    proportions = sorted({r.proportion for r in table.ok_rows()})
    agg = {(a.target, a.method, a.proportion): a for a in table.aggregates()}
    header = ["Dataset"]
    for p in proportions:
        for m in methods:
            header.append(f"{_METHOD_LABELS[m].split(' (')[0]} {p * 100:g}%")
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for t in targets:
        cells = [t]
        for p in proportions:
            for m in methods:
                a = agg.get((t, m, p))
                cells.append(f"{a.mean_auc:.3f}" if a else "n/a")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
