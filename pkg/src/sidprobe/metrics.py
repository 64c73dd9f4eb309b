"""Ranking and threshold metrics for the synthetic-vs-real task.

Average precision uses non-interpolated step integration with tied
scores grouped into a single prefix, so the value is independent of the
input order. Per-generator evaluation scores each synthetic generator
against all real records of the same set and averages the APs into mAP.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datastore import REAL_TAG, EmbeddingRecord

DEFAULT_THRESHOLD = 0.5


def _prepare(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels disagree in length: {s.shape} vs {y.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite score")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise ValueError("both classes must be present")
    return s, y


def average_precision(scores, labels) -> float:
    """AP of ranking synthetic (label 1) above real, ties grouped."""
    s, y = _prepare(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # indices of the last element of each tied-score group
    ends = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.append(ends, s_sorted.size - 1)
    tp_cum = np.cumsum(y_sorted)
    n_pos = int(tp_cum[-1])
    total = 0.0
    tp_prev = 0
    for e in ends:
        tp = int(tp_cum[e])
        rank = int(e) + 1  # tp + fp up to and including this group
        total += (tp - tp_prev) * tp / rank
        tp_prev = tp
    return total / n_pos


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score+ > score-) + 0.5 * P(tie)."""
    s, y = _prepare(scores, labels)
    ranks = _average_ranks(s)
    n_pos = int(np.sum(y))
    n_neg = y.size - n_pos
    u = float(np.sum(ranks[y == 1])) - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def _average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks, tied values sharing the mean rank of their run."""
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def optimal_balanced_threshold(scores, labels) -> tuple[float, float]:
    """Threshold maximizing (TPR + TNR) / 2 under `score >= t`.

    Candidates are the midpoints between consecutive distinct scores
    plus one value below the minimum (everything positive) and one above
    the maximum (everything negative). Ties resolve to the smallest
    candidate.
    """
    s, y = _prepare(scores, labels)
    uniq = np.unique(s)
    candidates = [uniq[0] - 0.5]
    candidates.extend((uniq[:-1] + uniq[1:]) / 2)
    candidates.append(uniq[-1] + 0.5)
    n_pos = int(np.sum(y))
    n_neg = y.size - n_pos
    best_t = candidates[0]
    best = -1.0
    for t in candidates:
        pred = s >= t
        tp = int(np.sum(pred & (y == 1)))
        tn = int(np.sum(~pred & (y == 0)))
        bacc = (tp / n_pos + tn / n_neg) / 2
        if bacc > best:
            best = bacc
            best_t = float(t)
    return best_t, best


@dataclass(frozen=True)
class GeneratorRow:
    generator: str
    ap: float
    accuracy: float


@dataclass
class EvalReport:
    rows: list[GeneratorRow]
    map: float
    threshold: float
    n_real: int
    n_synthetic: int

    def row(self, generator: str) -> GeneratorRow:
        for r in self.rows:
            if r.generator == generator:
                return r
        raise KeyError(generator)


def evaluate_per_generator(
    scores,
    records: Sequence[EmbeddingRecord],
    threshold: float = DEFAULT_THRESHOLD,
) -> EvalReport:
    """Per-generator AP/accuracy over {real records} + {that generator}.

    Scores must be probabilities in [0, 1]; accuracy thresholds them at
    `threshold` (predict synthetic when score >= threshold).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size != len(records):
        raise ValueError(f"{s.size} scores for {len(records)} records")
    if s.size and (s.min() < 0.0 or s.max() > 1.0):
        raise ValueError("scores must be probabilities in [0, 1]")
    labels = np.array([r.label for r in records], dtype=np.int64)
    generators = np.array([r.generator for r in records])
    real_mask = generators == REAL_TAG
    tags = sorted(set(generators[~real_mask]))
    if not tags:
        raise ValueError("no synthetic records to evaluate")
    if not real_mask.any():
        raise ValueError("no real records to evaluate against")
    rows = []
    for tag in tags:
        mask = real_mask | (generators == tag)
        sub_s = s[mask]
        sub_y = labels[mask]
        pred = (sub_s >= threshold).astype(np.int64)
        rows.append(
            GeneratorRow(
                generator=tag,
                ap=average_precision(sub_s, sub_y),
                accuracy=float(np.mean(pred == sub_y)),
            )
        )
    return EvalReport(
        rows=rows,
        map=float(np.mean([r.ap for r in rows])),
        threshold=float(threshold),
        n_real=int(real_mask.sum()),
        n_synthetic=int((~real_mask).sum()),
    )


def write_eval_csv(report: EvalReport, path: str | Path) -> None:
    """Per-generator rows in table order: generator, ACC, AP."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generator", "acc", "ap"])
        for row in report.rows:
            writer.writerow([row.generator, f"{row.accuracy:.6f}", f"{row.ap:.6f}"])


def write_eval_summary(
    report: EvalReport, path: str | Path, *, train_dataset: str, test_dataset: str, model_kind: str
) -> None:
    summary = {
        "train_dataset": train_dataset,
        "test_dataset": test_dataset,
        "model_kind": model_kind,
        "map": round(report.map, 6),
        "threshold": report.threshold,
        "n_real": report.n_real,
        "n_synthetic": report.n_synthetic,
        "generators": {r.generator: {"ap": round(r.ap, 6), "acc": round(r.accuracy, 6)} for r in report.rows},
    }
    Path(path).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
