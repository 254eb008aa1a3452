"""Ranking metrics, evaluation reports and corpus statistics."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from repotopics.textprep import SOURCES, ProcessedDoc
from repotopics.topicnorm import coverage_curve

logger = logging.getLogger(__name__)

DEFAULT_N_VALUES = (1, 3, 5, 8, 10)


def _check(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.ndim != 2 or scores.shape != truth.shape:
        raise ValueError(f"scores {scores.shape} and truth {truth.shape} must be 2-D of equal shape")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    empty = np.flatnonzero(truth.sum(axis=1) == 0)
    if empty.size:
        raise ValueError(f"truth rows {empty[:10].tolist()} have no positive topic")
    return scores, truth.astype(bool)


def rank_topics(scores: np.ndarray, topics: Optional[Sequence[str]] = None) -> np.ndarray:
    """Column order per row: descending score, ties by topic name (or column index)."""
    scores = np.asarray(scores, dtype=np.float64)
    n_cols = scores.shape[1]
    if topics is None:
        tiebreak = np.arange(n_cols)
    else:
        tiebreak = np.empty(n_cols, dtype=np.int64)
        tiebreak[sorted(range(n_cols), key=lambda i: topics[i])] = np.arange(n_cols)
    keys = np.broadcast_to(tiebreak, scores.shape)
    return np.lexsort((keys, -scores), axis=-1)


@dataclass(frozen=True)
class AtN:
    n: int
    precision: float
    recall: float
    f1: float
    success: float


def metrics_at_n(scores, truth, n: int, topics: Optional[Sequence[str]] = None) -> AtN:
    """Precision, recall, F1 and success rate of the top-n lists.

    P and R are averaged over repositories; F1 is the harmonic mean of those
    two averages.
    """
    scores, truth = _check(scores, truth)
    if not 1 <= n <= scores.shape[1]:
        raise ValueError(f"n must lie in [1, {scores.shape[1]}]")
    top = rank_topics(scores, topics)[:, :n]
    hits = np.take_along_axis(truth, top, axis=1).sum(axis=1)
    p = float(np.mean(hits / n))
    r = float(np.mean(hits / truth.sum(axis=1)))
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    s = float(np.mean(hits > 0))
    return AtN(n, p, r, f1, s)


def lrap(scores, truth) -> float:
    """Label ranking average precision.

    For each true topic j of a row: (# true topics scoring >= s_j) /
    (# topics scoring >= s_j); averaged over the row's true topics, then rows.
    """
    scores, truth = _check(scores, truth)
    total = 0.0
    for s, y in zip(scores, truth):
        true_scores = s[y]
        at_or_above = s[None, :] >= true_scores[:, None]
        rank = at_or_above.sum(axis=1)
        hits = (at_or_above & y[None, :]).sum(axis=1)
        total += float(np.mean(hits / rank))
    return total / scores.shape[0]


@dataclass
class MetricsReport:
    at_n: list
    lrap: float
    per_topic: list
    coverage_curve: list
    n_rows: int
    n_excluded: int = 0
    train_seconds: Optional[float] = field(default=None, compare=False)
    predict_seconds_per_row: Optional[float] = field(default=None, compare=False)

    def row(self, n: int) -> AtN:
        for r in self.at_n:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_json(self) -> dict:
        out = asdict(self)
        out["at_n"] = [asdict(r) for r in self.at_n]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        obj = dict(obj)
        obj["at_n"] = [AtN(**r) for r in obj["at_n"]]
        obj["coverage_curve"] = [tuple(c) for c in obj["coverage_curve"]]
        return cls(**obj)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def to_text(self) -> str:
        lines = [f"{'n':>4} {'P@n':>8} {'R@n':>8} {'F1@n':>8} {'S@n':>8}"]
        for r in self.at_n:
            lines.append(f"{r.n:>4} {r.precision:>8.4f} {r.recall:>8.4f} {r.f1:>8.4f} {r.success:>8.4f}")
        lines.append(f"LRAP {self.lrap:.4f}  rows {self.n_rows}  excluded {self.n_excluded}")
        if self.train_seconds is not None:
            lines.append(f"train {self.train_seconds:.3f}s")
        if self.predict_seconds_per_row is not None:
            lines.append(f"predict {1000 * self.predict_seconds_per_row:.3f}ms/row")
        return "\n".join(lines)


def per_topic_scores(scores, truth, topics: Sequence[str], n: int = 5) -> list[dict]:
    """Precision, recall and support of each topic within the top-n lists."""
    scores, truth = np.asarray(scores, dtype=np.float64), np.asarray(truth).astype(bool)
    n = min(n, scores.shape[1])
    top = rank_topics(scores, topics)[:, :n]
    recommended = np.zeros_like(truth)
    np.put_along_axis(recommended, top, True, axis=1)
    out = []
    for j, topic in enumerate(topics):
        rec, true = recommended[:, j], truth[:, j]
        hits = int((rec & true).sum())
        out.append({
            "topic": topic,
            "precision": hits / int(rec.sum()) if rec.any() else 0.0,
            "recall": hits / int(true.sum()) if true.any() else 0.0,
            "support": int(true.sum()),
        })
    return out


def report_from_scores(scores, truth, topics: Sequence[str], n_values: Sequence[int] = DEFAULT_N_VALUES,
                       per_topic_n: int = 5) -> MetricsReport:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    keep = truth.sum(axis=1) > 0
    excluded = int((~keep).sum())
    if excluded:
        logger.warning("excluding %d rows without ground-truth topics from the metrics", excluded)
    scores, truth = scores[keep], truth[keep]
    if scores.shape[0] == 0:
        raise ValueError("no rows with ground-truth topics to evaluate")
    usable = [n for n in n_values if n <= scores.shape[1]]
    if len(usable) < len(n_values):
        logger.warning("skipping n values larger than the %d topics", scores.shape[1])
    freqs = truth.sum(axis=0)
    curve = coverage_curve(freqs) if freqs.sum() > 0 else []
    return MetricsReport(
        at_n=[metrics_at_n(scores, truth, n, topics) for n in usable],
        lrap=lrap(scores, truth),
        per_topic=per_topic_scores(scores, truth, topics, per_topic_n),
        coverage_curve=curve,
        n_rows=int(scores.shape[0]),
        n_excluded=excluded,
    )


def evaluate(model, docs: Sequence[ProcessedDoc], truth, n_values: Sequence[int] = DEFAULT_N_VALUES,
             per_topic_n: int = 5, timing_samples: int = 1000) -> MetricsReport:
    """Score the held-out documents with a fitted TopicRecommender and report.

    Timing figures (training wall-clock from the model, mean single-document
    prediction time over ``timing_samples`` calls) are excluded from report
    equality.
    """
    docs = list(docs)
    if not docs:
        raise ValueError("cannot evaluate on an empty test split")
    scores = model.predict_proba(docs)
    report = report_from_scores(scores, truth, model.topics_, n_values, per_topic_n)
    report.train_seconds = getattr(model, "fit_seconds_", None)
    if timing_samples:
        start = time.perf_counter()
        for i in range(timing_samples):
            model.predict_proba([docs[i % len(docs)]])
        report.predict_seconds_per_row = (time.perf_counter() - start) / timing_samples
    return report


def corpus_stats(docs: Sequence[ProcessedDoc]) -> dict:
    """min/max/mean/median token counts per source over non-empty lists."""
    docs = list(docs)
    if not docs:
        raise ValueError("corpus_stats needs at least one document")
    out = {}
    for src in SOURCES + ("all",):
        lengths = [len(d.all_tokens) if src == "all" else len(d.source(src)) for d in docs]
        lengths = [n for n in lengths if n > 0]
        if not lengths:
            out[src] = {"count": 0, "min": 0, "max": 0, "mean": 0.0, "median": 0.0}
            continue
        out[src] = {
            "count": len(lengths),
            "min": min(lengths),
            "max": max(lengths),
            "mean": statistics.fmean(lengths),
            "median": float(statistics.median(lengths)),
        }
    return out


def ablation_csv(rows: Sequence[tuple[dict, MetricsReport]], n: int = 5) -> str:
    """One line per configuration: its settings, then R/P/F1/S at n, S@1 and LRAP."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    config_keys = list(rows[0][0]) if rows else []
    writer.writerow(config_keys + [f"R@{n}", f"P@{n}", f"F1@{n}", f"S@{n}", "S@1", "LRAP"])
    for config, report in rows:
        at = report.row(n)
        s1 = report.row(1).success
        cells = [";".join(v) if isinstance(v, (list, tuple)) else v for v in (config[k] for k in config_keys)]
        writer.writerow(cells + [f"{at.recall:.6f}", f"{at.precision:.6f}", f"{at.f1:.6f}",
                                 f"{at.success:.6f}", f"{s1:.6f}", f"{report.lrap:.6f}"])
    return buf.getvalue()
