"""Prepare / train / evaluate / ablate orchestration shared by the CLI and tests."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from repotopics.bundle import ModelBundle
from repotopics.corpus import CorpusSplit, FilterConfig, RepoRecord, filter_corpus, split_corpus
from repotopics.evaluation import DEFAULT_N_VALUES, MetricsReport, corpus_stats, evaluate
from repotopics.model import TopicRecommender
from repotopics.textprep import SOURCES, ProcessedDoc, RepoPreprocessor, TextTables
from repotopics.topicnorm import (
    MappingMode,
    TopicVocabulary,
    filter_by_support,
    map_repo_topics,
    reindex_labels,
    subtopic_mappings,
    write_subtopics_tsv,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    sources: tuple = SOURCES
    min_stars: int = 10
    max_non_english_ratio: float = 0.5
    min_support: Optional[int] = None
    top_k: Optional[int] = None
    min_text_freq: int = 50
    min_name_freq: int = 20
    train_only_counts: bool = True
    max_features: int = 20000
    text_max_features: int = 18000
    name_max_features: int = 2000
    feature_mode: str = "unified"
    mapping_mode: str = "with_heuristics"
    kind: str = "logistic"
    learning_rate: float = 0.1
    max_iters: int = 1000
    l2: float = 1e-4
    tol: float = 1e-6
    use_class_weights: Optional[bool] = None
    alpha: float = 1.0
    n_values: tuple = DEFAULT_N_VALUES
    n_jobs: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        unknown = set(self.sources) - set(SOURCES)
        if unknown or not self.sources:
            raise ValueError(f"sources must be a non-empty subset of {SOURCES}")
        if self.feature_mode not in ("unified", "separate"):
            raise ValueError("feature_mode must be 'unified' or 'separate'")
        MappingMode(self.mapping_mode)
        if self.kind not in ("logistic", "mnb"):
            raise ValueError("kind must be 'logistic' or 'mnb'")
        FilterConfig(self.min_stars, True, self.max_non_english_ratio)
        if self.min_text_freq < 1 or self.min_name_freq < 1:
            raise ValueError("token frequency thresholds must be >= 1")
        if self.learning_rate <= 0 or self.tol <= 0:
            raise ValueError("learning_rate and tol must be > 0")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.min_support is not None and self.min_support < 1:
            raise ValueError("min_support must be >= 1")
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("n_values must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def merged(self, **overrides) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["sources"] = list(self.sources)
        out["n_values"] = list(self.n_values)
        return out

    def recommender(self, topics: Sequence[str]) -> TopicRecommender:
        return TopicRecommender(
            kind=self.kind, topics=tuple(topics), feature_mode=self.feature_mode, sources=self.sources,
            max_features=self.max_features, text_max_features=self.text_max_features,
            name_max_features=self.name_max_features, learning_rate=self.learning_rate,
            max_iters=self.max_iters, l2=self.l2, tol=self.tol, use_class_weights=self.use_class_weights,
            alpha=self.alpha, n_jobs=self.n_jobs,
        )


@dataclass
class PreparedDataset:
    """Processed documents, labels and split of a filtered corpus."""

    full_names: list
    docs: list
    user_topics: list
    labels: np.ndarray
    vocabulary: TopicVocabulary
    split: CorpusSplit
    preprocessor: RepoPreprocessor
    full_vocabulary: Optional[TopicVocabulary] = None
    subtopics: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def rows(self, which: str) -> list[int]:
        if which == "train":
            return list(self.split.train)
        if which == "fit":
            return sorted(self.split.train + self.split.validation)
        return list(getattr(self.split, which))

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "docs.jsonl", "w", encoding="utf-8") as fh:
            for name, doc in zip(self.full_names, self.docs):
                fh.write(json.dumps({"full_name": name, **doc.to_json()}) + "\n")
        with open(out / "labels.jsonl", "w", encoding="utf-8") as fh:
            for row, user in zip(self.labels, self.user_topics):
                fh.write(json.dumps({"topics": self.vocabulary.decode(row), "user_topics": list(user)}) + "\n")
        (out / "splits.json").write_text(json.dumps(self.split.to_json()), encoding="utf-8")
        (out / "topics.json").write_text(json.dumps(self.vocabulary.to_json()), encoding="utf-8")
        if self.full_vocabulary is not None:
            (out / "topics_full.json").write_text(json.dumps(self.full_vocabulary.to_json()), encoding="utf-8")
        write_subtopics_tsv(self.subtopics, out / "subtopics.tsv")
        (out / "stats.json").write_text(json.dumps(self.stats, indent=2), encoding="utf-8")
        pre = self.preprocessor
        (out / "preprocess.json").write_text(json.dumps({
            "min_text_freq": pre.min_text_freq,
            "min_name_freq": pre.min_name_freq,
            "text_vocabulary": sorted(pre.text_vocabulary_),
            "name_vocabulary": sorted(pre.name_vocabulary_),
        }), encoding="utf-8")
        (pre.tables or TextTables.default()).to_dir(out / "tables")

    @classmethod
    def load(cls, directory) -> "PreparedDataset":
        src = Path(directory)
        for name in ("docs.jsonl", "labels.jsonl", "splits.json", "topics.json", "preprocess.json"):
            if not (src / name).is_file():
                raise FileNotFoundError(f"prepared dataset is missing {name}")
        names, docs = [], []
        for line in (src / "docs.jsonl").read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            names.append(obj["full_name"])
            docs.append(ProcessedDoc.from_json(obj))
        vocab = TopicVocabulary.from_json(json.loads((src / "topics.json").read_text(encoding="utf-8")))
        labels, user = [], []
        for line in (src / "labels.jsonl").read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            labels.append(vocab.encode(obj["topics"]))
            user.append(tuple(obj.get("user_topics", ())))
        full = None
        if (src / "topics_full.json").is_file():
            full = TopicVocabulary.from_json(json.loads((src / "topics_full.json").read_text(encoding="utf-8")))
        state = json.loads((src / "preprocess.json").read_text(encoding="utf-8"))
        tables = TextTables.from_dir(src / "tables") if (src / "tables").is_dir() else None
        pre = RepoPreprocessor(tables, state["min_text_freq"], state["min_name_freq"])
        pre.text_vocabulary_ = frozenset(state["text_vocabulary"])
        pre.name_vocabulary_ = frozenset(state["name_vocabulary"])
        stats = json.loads((src / "stats.json").read_text(encoding="utf-8")) if (src / "stats.json").is_file() else {}
        return cls(names, docs, user, np.vstack(labels) if labels else np.zeros((0, len(vocab)), np.uint8),
                   vocab, CorpusSplit.from_json(json.loads((src / "splits.json").read_text(encoding="utf-8"))),
                   pre, full, {}, stats)


def label_matrix(topic_lists: Sequence[Sequence[str]], vocab: TopicVocabulary, mode: str,
                 tables: Optional[TextTables] = None) -> np.ndarray:
    if not topic_lists:
        return np.zeros((0, len(vocab)), dtype=np.uint8)
    return np.vstack([map_repo_topics(t, vocab, mode, tables) for t in topic_lists])


def prepare(records: Sequence[RepoRecord], vocabulary: TopicVocabulary, cfg: RunConfig = RunConfig(),
            tables: Optional[TextTables] = None) -> PreparedDataset:
    """Filter, label, split and preprocess a raw corpus.

    Topic support is counted over the whole filtered corpus; repositories left
    without any supported topic are dropped before splitting. Rare-token
    statistics come from the training portion unless ``train_only_counts`` is off.
    """
    kept = filter_corpus(records, FilterConfig(cfg.min_stars, True, cfg.max_non_english_ratio))
    if not kept:
        raise ValueError("no repository survives filtering")
    labels = label_matrix([r.user_topics for r in kept], vocabulary, cfg.mapping_mode, tables)
    reduced = filter_by_support(labels, vocabulary, cfg.min_support, cfg.top_k)
    labels = reindex_labels(labels, vocabulary, reduced)
    has_topic = labels.sum(axis=1) > 0
    dropped = int((~has_topic).sum())
    if dropped:
        logger.info("dropping %d repositories without supported topics", dropped)
    kept = [r for r, keep in zip(kept, has_topic) if keep]
    labels = labels[has_topic]
    if not kept:
        raise ValueError("no repository carries a supported topic")

    split = split_corpus(kept, cfg.seed)
    pre = RepoPreprocessor(tables, cfg.min_text_freq, cfg.min_name_freq)
    sources = pre.clean(kept)
    count_rows = sorted(split.train + split.validation) if cfg.train_only_counts else range(len(kept))
    pre.fit_from_sources([sources[i] for i in count_rows])
    docs = pre.transform_sources(sources)
    return PreparedDataset(
        full_names=[r.full_name for r in kept],
        docs=docs,
        user_topics=[tuple(r.user_topics) for r in kept],
        labels=labels,
        vocabulary=reduced,
        split=split,
        preprocessor=pre,
        full_vocabulary=vocabulary,
        subtopics=subtopic_mappings([r.user_topics for r in kept], vocabulary, tables),
        stats={"corpus": corpus_stats(docs), "n_repositories": len(kept), "n_topics": len(reduced),
               "n_filtered_out": len(records) - len(kept) - dropped, "n_without_topics": dropped},
    )


def train(dataset: PreparedDataset, cfg: RunConfig = RunConfig(), rows: str = "fit") -> ModelBundle:
    """Fit a recommender on the train (+validation) rows and wrap it in a bundle."""
    idx = dataset.rows(rows)
    if not idx:
        raise ValueError("no training rows")
    model = cfg.recommender(dataset.vocabulary.topics)
    model.fit([dataset.docs[i] for i in idx], dataset.labels[idx])
    manifest = {"seed": cfg.seed, "config": cfg.to_dict(), "n_train": len(idx),
                "train_seconds": model.fit_seconds_}
    return ModelBundle(dataset.vocabulary, dataset.preprocessor, model, manifest)


def evaluate_bundle(bundle: ModelBundle, dataset: PreparedDataset, cfg: RunConfig = RunConfig(),
                    rows: str = "test", timing_samples: int = 1000) -> MetricsReport:
    idx = dataset.rows(rows)
    if not idx:
        raise ValueError(f"the {rows} split is empty")
    if tuple(bundle.topics) != tuple(dataset.vocabulary.topics):
        raise ValueError("model and dataset were built with different topic vocabularies")
    report = evaluate(bundle.recommender, [dataset.docs[i] for i in idx], dataset.labels[idx],
                      cfg.n_values, timing_samples=timing_samples)
    if report.train_seconds is None:
        report.train_seconds = bundle.manifest.get("train_seconds")
    return report


@dataclass(frozen=True)
class AblationRow:
    name: str
    sources: tuple = SOURCES
    top_k: Optional[int] = None
    feature_mode: str = "unified"
    mapping_mode: str = "with_heuristics"
    kind: str = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise ValueError(f"ablation row {self.name!r} selects no sources")


def ablation(dataset: PreparedDataset, plan: Sequence[AblationRow], cfg: RunConfig = RunConfig(),
             timing_samples: int = 0) -> list[tuple[dict, MetricsReport]]:
    """Train and evaluate one configuration per plan row on the dataset's split.

    Mapping-mode rows relabel the raw user topics against the dataset's
    vocabulary; ``top_k`` rows shrink the vocabulary to the k topics most
    frequent on the training rows.
    """
    fit_rows, test_rows = dataset.rows("fit"), dataset.rows("test")
    results = []
    for row in plan:
        vocab = dataset.vocabulary
        if row.mapping_mode == cfg.mapping_mode:
            labels = dataset.labels
        else:
            labels = label_matrix(dataset.user_topics, vocab, row.mapping_mode, dataset.preprocessor.tables)
        if row.top_k is not None:
            reduced = filter_by_support(labels[fit_rows], vocab, top_k=row.top_k)
            labels, vocab = reindex_labels(labels, vocab, reduced), reduced
        run = cfg.merged(sources=row.sources, feature_mode=row.feature_mode, mapping_mode=row.mapping_mode,
                         kind=row.kind)
        train_labels = labels[fit_rows]
        usable = train_labels.sum(axis=0) > 0
        if not usable.all():
            # a topic with no training positive cannot be fitted; drop its column
            vocab = vocab.restrict([t for t, u in zip(vocab.topics, usable) if u])
            labels = labels[:, usable]
        if not any(dataset.docs[i].tokens(row.sources) for i in fit_rows):
            logger.warning("skipping ablation row %r: its sources carry no tokens", row.name)
            continue
        model = run.recommender(vocab.topics)
        model.fit([dataset.docs[i] for i in fit_rows], labels[fit_rows])
        report = evaluate(model, [dataset.docs[i] for i in test_rows], labels[test_rows], run.n_values,
                          timing_samples=timing_samples)
        config = {"name": row.name, "kind": row.kind, "sources": list(row.sources), "n_topics": len(vocab),
                  "feature_mode": row.feature_mode, "mapping_mode": row.mapping_mode}
        results.append((config, report))
    return results


def default_plan() -> list[AblationRow]:
    return [
        AblationRow("wiki", sources=("wiki",)),
        AblationRow("filenames", sources=("filenames",)),
        AblationRow("description", sources=("description",)),
        AblationRow("readme", sources=("readme",)),
        AblationRow("all-but-filenames", sources=("name", "description", "readme", "wiki")),
        AblationRow("all"),
        AblationRow("all-separate", feature_mode="separate"),
        AblationRow("all-exact-topics", mapping_mode="exact_only"),
        AblationRow("mnb-all", kind="mnb"),
        AblationRow("mnb-separate", kind="mnb", feature_mode="separate"),
    ]


def plan_from_json(obj) -> list[AblationRow]:
    return [AblationRow(**row) for row in obj]
