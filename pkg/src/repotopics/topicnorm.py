"""Featured-topic vocabulary and mapping of user topics onto it."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from repotopics.textprep import TextTables, default_tables

_TOPIC_RE = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")
_VERSION_RE = re.compile(r"-v\d+$")
_TRAILING_DIGITS_RE = re.compile(r"\d+$")


class VocabularyError(ValueError):
    pass


class MappingMode(str, enum.Enum):
    EXACT_ONLY = "exact_only"
    WITH_HEURISTICS = "with_heuristics"


@dataclass(frozen=True)
class TopicVocabulary:
    """Ordered featured topics; position in ``topics`` is the label index."""

    topics: tuple
    aliases: Mapping[str, str] = field(default_factory=dict)
    frequent_embedded: frozenset = frozenset()
    protected: frozenset = frozenset()
    min_support: int = 100

    def __post_init__(self):
        topics = tuple(self.topics)
        object.__setattr__(self, "topics", topics)
        object.__setattr__(self, "aliases", dict(self.aliases))
        object.__setattr__(self, "frequent_embedded", frozenset(self.frequent_embedded))
        object.__setattr__(self, "protected", frozenset(self.protected))
        index = {}
        for i, topic in enumerate(topics):
            if not isinstance(topic, str) or not _TOPIC_RE.match(topic):
                raise VocabularyError(f"topic {topic!r} is not lowercase kebab-case")
            if topic in index:
                raise VocabularyError(f"duplicate topic {topic!r}")
            index[topic] = i
        for alias, target in self.aliases.items():
            if target not in index:
                raise VocabularyError(f"alias {alias!r} points to unknown topic {target!r}")
            if alias in index and alias != target:
                raise VocabularyError(f"alias {alias!r} collides with a topic of the same name")
        for token in self.frequent_embedded:
            if token not in index and token not in self.aliases:
                raise VocabularyError(f"frequent_embedded token {token!r} is neither a topic nor an alias")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.topics)

    def index(self, topic: str) -> int:
        return self._index[topic]

    def lookup(self, token: str) -> Optional[str]:
        """Exact topic or alias match, else None."""
        if token in self._index:
            return token
        return self.aliases.get(token)

    def encode(self, topics: Iterable[str]) -> np.ndarray:
        bits = np.zeros(len(self.topics), dtype=np.uint8)
        for t in topics:
            bits[self._index[t]] = 1
        return bits

    def decode(self, bits) -> list[str]:
        bits = np.asarray(bits)
        if bits.shape != (len(self.topics),):
            raise ValueError(f"label vector has shape {bits.shape}, expected ({len(self.topics)},)")
        return [self.topics[i] for i in np.flatnonzero(bits)]

    def restrict(self, topics: Sequence[str]) -> "TopicVocabulary":
        keep = set(topics)
        return TopicVocabulary(
            topics=tuple(topics),
            aliases={a: t for a, t in self.aliases.items() if t in keep and a not in keep},
            frequent_embedded=frozenset(e for e in self.frequent_embedded if self.lookup(e) in keep),
            protected=self.protected,
            min_support=self.min_support,
        )

    def to_json(self) -> dict:
        by_topic: dict[str, list[str]] = {t: [] for t in self.topics}
        for alias, target in sorted(self.aliases.items()):
            by_topic[target].append(alias)
        return {
            "topics": [{"topic": t, "aliases": by_topic[t]} for t in self.topics],
            "frequent_embedded": sorted(self.frequent_embedded),
            "protected": sorted(self.protected),
            "min_support": self.min_support,
        }

    @classmethod
    def from_json(cls, obj) -> "TopicVocabulary":
        if isinstance(obj, list):
            obj = {"topics": obj}
        if not isinstance(obj, dict) or not isinstance(obj.get("topics"), list):
            raise VocabularyError("vocabulary must be a JSON array of topic entries or an object with 'topics'")
        topics, aliases = [], {}
        for i, entry in enumerate(obj["topics"]):
            if isinstance(entry, str):
                entry = {"topic": entry}
            if not isinstance(entry, dict) or not isinstance(entry.get("topic"), str):
                raise VocabularyError(f"entry {i}: expected an object with a string 'topic'")
            topic = entry["topic"]
            if topic in topics:
                raise VocabularyError(f"entry {i}: duplicate topic {topic!r}")
            topics.append(topic)
            for alias in entry.get("aliases") or []:
                alias = str(alias).strip().lower()
                if alias in aliases and aliases[alias] != topic:
                    raise VocabularyError(f"entry {i}: alias {alias!r} already maps to {aliases[alias]!r}")
                if alias != topic:
                    aliases[alias] = topic
        try:
            return cls(
                topics=tuple(topics),
                aliases=aliases,
                frequent_embedded=frozenset(obj.get("frequent_embedded") or ()),
                protected=frozenset(obj.get("protected") or ()),
                min_support=int(obj.get("min_support", 100)),
            )
        except VocabularyError:
            raise
        except (TypeError, ValueError) as exc:
            raise VocabularyError(str(exc)) from None


def load_vocabulary(file) -> TopicVocabulary:
    """Read a vocabulary JSON file (path or open file object)."""
    try:
        if hasattr(file, "read"):
            obj = json.load(file)
        else:
            with open(file, encoding="utf-8") as fh:
                obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise VocabularyError(f"malformed vocabulary file: {exc}") from None
    return TopicVocabulary.from_json(obj)


def _singularize(word: str, tables: TextTables) -> str:
    head, _, last = word.rpartition("-")
    if last in tables.lemma_exceptions:
        single = tables.lemma_exceptions[last]
    elif len(last) <= 3:
        single = last
    elif last.endswith("ies") and len(last) >= 5:
        single = last[:-3] + "y"
    elif last.endswith("sses"):
        single = last[:-2]
    elif last.endswith(("xes", "ches", "shes")):
        single = last[:-2]
    elif last.endswith("s") and not last.endswith(("ss", "us")):
        single = last[:-1]
    else:
        single = last
    return f"{head}-{single}" if head else single


def _normalize_parts(word: str, tables: TextTables) -> str:
    parts = []
    for seg in word.split("-"):
        for piece in tables.abbreviations.get(seg, (seg,)):
            if not piece or piece in tables.stopwords:
                continue
            parts.append(tables.lemmatize(piece) if piece.isalpha() else piece)
    return "-".join(parts)


def _candidates(topic: str, vocab: TopicVocabulary, tables: TextTables) -> list[str]:
    """Successively transformed forms of ``topic``, least destructive first."""
    out = [topic]
    current = _VERSION_RE.sub("", topic)
    out.append(current)
    if current not in vocab.protected:
        current = _TRAILING_DIGITS_RE.sub("", current).rstrip("-") or current
        out.append(current)
        current = _singularize(current, tables)
        out.append(current)
    out.append(_normalize_parts(current, tables))
    return out


def _match_whole(topic: str, vocab: TopicVocabulary, tables: TextTables) -> Optional[str]:
    for cand in _candidates(topic, vocab, tables):
        if cand:
            hit = vocab.lookup(cand)
            if hit is not None:
                return hit
    return None


def _embedded(topic: str, vocab: TopicVocabulary, tables: TextTables) -> set[str]:
    # every topic and alias (frequent_embedded entries among them) is a valid
    # segment target; spans are contiguous runs of hyphen segments
    found = set()
    seg_lists = [topic.split("-"), _normalize_parts(topic, tables).split("-")]
    for segs in seg_lists:
        n = len(segs)
        for i in range(n):
            for j in range(i + 1, n + 1):
                if j - i == n and segs is seg_lists[0]:
                    continue
                span = "-".join(segs[i:j])
                if not span:
                    continue
                hit = vocab.lookup(span)
                if hit is None and j - i == 1 and span not in vocab.protected:
                    hit = vocab.lookup(_TRAILING_DIGITS_RE.sub("", span))
                if hit is not None:
                    found.add(hit)
    return found


def _clean(user_topic: str) -> str:
    return user_topic.strip().lower()


def normalize_topic(user_topic: str, vocab: TopicVocabulary,
                    tables: Optional[TextTables] = None) -> set[str]:
    """Map one user topic to featured topics.

    Transforms run in order (exact match, version suffix, trailing digits,
    plural, abbreviation/stopword/lemma clean-up) and the first form found in
    the vocabulary wins; digit and plural stripping are skipped for protected
    tokens. Failing all of those, topics and aliases embedded as hyphen
    segments are extracted.
    """
    topic = _clean(user_topic)
    if not topic:
        raise ValueError("user topic must be non-empty")
    tables = tables if tables is not None else default_tables()
    hit = _match_whole(topic, vocab, tables)
    if hit is not None:
        return {hit}
    return _embedded(topic, vocab, tables)


def aggregate_adjacent(user_topics: Sequence[str], vocab: TopicVocabulary,
                       tables: Optional[TextTables] = None) -> set[str]:
    """Join adjacent unmatched topics with a hyphen and look the result up.

    Pairs are consumed left to right without overlap.
    """
    tables = tables if tables is not None else default_tables()
    items = [_clean(t) for t in user_topics if _clean(t)]
    unmatched = [not normalize_topic(t, vocab, tables) for t in items]
    found = set()
    i = 0
    while i < len(items) - 1:
        if unmatched[i] and unmatched[i + 1]:
            hit = _match_whole(f"{items[i]}-{items[i + 1]}", vocab, tables)
            if hit is not None:
                found.add(hit)
                i += 2
                continue
        i += 1
    return found


def map_topic_names(user_topics: Sequence[str], vocab: TopicVocabulary,
                    mode: MappingMode = MappingMode.WITH_HEURISTICS,
                    tables: Optional[TextTables] = None) -> set[str]:
    mode = MappingMode(mode)
    items = [_clean(t) for t in user_topics if _clean(t)]
    if mode is MappingMode.EXACT_ONLY:
        return {hit for hit in map(vocab.lookup, items) if hit is not None}
    tables = tables if tables is not None else default_tables()
    found = set()
    for t in items:
        found |= normalize_topic(t, vocab, tables)
    return found | aggregate_adjacent(items, vocab, tables)


def map_repo_topics(user_topics: Sequence[str], vocab: TopicVocabulary,
                    mode: MappingMode = MappingMode.WITH_HEURISTICS,
                    tables: Optional[TextTables] = None) -> np.ndarray:
    """Multi-hot label vector (uint8, length M) for one repository."""
    return vocab.encode(map_topic_names(user_topics, vocab, mode, tables))


def subtopic_mappings(topic_lists: Iterable[Sequence[str]], vocab: TopicVocabulary,
                      tables: Optional[TextTables] = None) -> dict[str, set[str]]:
    """User topics that only match through the heuristics, with their targets."""
    tables = tables if tables is not None else default_tables()
    out: dict[str, set[str]] = {}
    for topics in topic_lists:
        for t in map(_clean, topics):
            if not t or vocab.lookup(t) is not None:
                continue
            hits = normalize_topic(t, vocab, tables)
            if hits:
                out.setdefault(t, set()).update(hits)
    return out


def write_subtopics_tsv(mappings: Mapping[str, set], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sub in sorted(mappings):
            for featured in sorted(mappings[sub]):
                fh.write(f"{sub}\t{featured}\n")


def topic_frequencies(labels) -> np.ndarray:
    return np.asarray(labels).sum(axis=0).astype(np.int64)


def filter_by_support(labels, vocab: TopicVocabulary, min_support: Optional[int] = None,
                      top_k: Optional[int] = None) -> TopicVocabulary:
    """Reduced vocabulary ordered by descending frequency (ties by name).

    With ``top_k`` the k most frequent topics are kept; otherwise topics
    with frequency >= ``min_support`` (default: ``vocab.min_support``).
    """
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != len(vocab):
        raise ValueError(f"label matrix must have {len(vocab)} columns")
    freq = topic_frequencies(labels)
    order = sorted(range(len(vocab)), key=lambda i: (-freq[i], vocab.topics[i]))
    if top_k is not None:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        keep = [i for i in order[:top_k] if freq[i] > 0]
    else:
        threshold = vocab.min_support if min_support is None else min_support
        keep = [i for i in order if freq[i] >= threshold]
    if not keep:
        raise VocabularyError("no topic reaches the requested support")
    return vocab.restrict([vocab.topics[i] for i in keep])


def reindex_labels(labels, source: TopicVocabulary, target: TopicVocabulary) -> np.ndarray:
    """Columns of ``labels`` (encoded against ``source``) rearranged for ``target``."""
    cols = [source.index(t) for t in target.topics]
    return np.asarray(labels)[:, cols]


def coverage(frequencies: Sequence[float], k: int) -> float:
    """Share of total frequency held by the first ``k`` entries."""
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.ndim != 1 or not 0 <= k <= len(freqs):
        raise ValueError(f"k must lie in [0, {len(freqs)}]")
    if np.any(freqs[:-1] < freqs[1:]):
        raise ValueError("frequencies must be sorted in descending order")
    total = freqs.sum()
    if total <= 0:
        raise ValueError("frequencies are all zero")
    return float(freqs[:k].sum() / total)


def coverage_curve(frequencies: Sequence[float]) -> list[tuple[int, float]]:
    freqs = sorted((float(f) for f in frequencies), reverse=True)
    return [(k, coverage(freqs, k)) for k in range(1, len(freqs) + 1)]


class TopicMapper(BaseEstimator, TransformerMixin):
    """Encode lists of user topics as a multi-hot label matrix.

    Works like ``MultiLabelBinarizer`` with a fixed class list, except that
    free-form topics are first normalized onto the featured vocabulary.
    """

    def __init__(self, vocabulary: Optional[TopicVocabulary] = None,
                 mode: str = MappingMode.WITH_HEURISTICS.value, tables: Optional[TextTables] = None):
        self.vocabulary = vocabulary
        self.mode = mode
        self.tables = tables

    def fit(self, X=None, y=None):
        if self.vocabulary is None:
            raise ValueError("TopicMapper needs a vocabulary")
        MappingMode(self.mode)
        self.classes_ = np.array(self.vocabulary.topics, dtype=object)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "classes_"):
            self.fit()
        rows = [map_repo_topics(topics, self.vocabulary, self.mode, self.tables) for topics in X]
        if not rows:
            return np.zeros((0, len(self.vocabulary)), dtype=np.uint8)
        return np.vstack(rows)

    def inverse_transform(self, Y) -> list[tuple]:
        return [tuple(self.vocabulary.decode(row)) for row in np.asarray(Y)]
