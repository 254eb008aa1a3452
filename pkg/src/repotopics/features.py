"""TF-IDF n-gram features over processed repository documents."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from repotopics.textprep import SOURCES, ProcessedDoc

TEXT_GROUP = ("description", "readme", "wiki")
NAME_GROUP = ("name", "filenames")


def ngrams(tokens: Sequence[str], ngram_range: tuple[int, int] = (1, 2)) -> list[str]:
    """All n-grams of ``tokens`` for n in the inclusive range, space-joined."""
    lo, hi = ngram_range
    tokens = list(tokens)
    out = []
    for n in range(lo, hi + 1):
        out.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return out


@dataclass(frozen=True)
class TfidfVocabulary:
    terms: tuple
    idf: np.ndarray
    doc_freq: np.ndarray
    n_docs: int
    ngram_range: tuple = (1, 2)
    max_features: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "ngram_range", tuple(self.ngram_range))
        object.__setattr__(self, "idf", np.asarray(self.idf, dtype=np.float64))
        object.__setattr__(self, "doc_freq", np.asarray(self.doc_freq, dtype=np.int64))
        if len(self.terms) > self.max_features:
            raise ValueError("vocabulary larger than max_features")
        if not (len(self.terms) == len(self.idf) == len(self.doc_freq)):
            raise ValueError("terms, idf and doc_freq must have equal length")
        term_index = {t: i for i, t in enumerate(self.terms)}
        if len(term_index) != len(self.terms):
            raise ValueError("duplicate terms in vocabulary")
        object.__setattr__(self, "term_index", term_index)

    @property
    def width(self) -> int:
        return len(self.terms)

    def to_json(self) -> dict:
        return {
            "terms": list(self.terms),
            "idf": [float(v) for v in self.idf],
            "doc_freq": [int(v) for v in self.doc_freq],
            "n_docs": self.n_docs,
            "ngram_range": list(self.ngram_range),
            "max_features": self.max_features,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TfidfVocabulary":
        return cls(
            terms=tuple(obj["terms"]),
            idf=np.array(obj["idf"], dtype=np.float64),
            doc_freq=np.array(obj["doc_freq"], dtype=np.int64),
            n_docs=int(obj["n_docs"]),
            ngram_range=tuple(obj["ngram_range"]),
            max_features=int(obj["max_features"]),
        )


@dataclass(frozen=True)
class SparseVector:
    indices: tuple
    values: tuple
    width: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")

    def __len__(self):
        return len(self.indices)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((np.array(self.values, dtype=np.float64), np.array(self.indices, dtype=np.int64),
                              np.array([0, len(self.indices)])), shape=(1, self.width))

    @classmethod
    def from_csr_row(cls, row) -> "SparseVector":
        row = sp.csr_matrix(row)
        row.sort_indices()
        return cls(tuple(int(i) for i in row.indices), tuple(float(v) for v in row.data), row.shape[1])


def fit_tfidf(docs: Sequence[Sequence[str]], ngram_range: tuple[int, int] = (1, 2),
              max_features: int = 20000) -> TfidfVocabulary:
    """Select the ``max_features`` most frequent n-grams and their smoothed idf.

    Selection ranks by total count across the corpus, ties broken by the term
    itself; columns are then ordered alphabetically.
    idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1.
    """
    if len(docs) == 0:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    if max_features < 1:
        raise ValueError("max_features must be >= 1")
    counts: Counter = Counter()
    dfs: Counter = Counter()
    for doc in docs:
        grams = ngrams(doc, ngram_range)
        counts.update(grams)
        dfs.update(set(grams))
    chosen = sorted(counts, key=lambda t: (-counts[t], t))[:max_features]
    terms = tuple(sorted(chosen))
    df = np.array([dfs[t] for t in terms], dtype=np.int64)
    n = len(docs)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    return TfidfVocabulary(terms=terms, idf=idf, doc_freq=df, n_docs=n,
                           ngram_range=tuple(ngram_range), max_features=max_features)


def _row(tokens: Sequence[str], vocab: TfidfVocabulary) -> tuple[np.ndarray, np.ndarray]:
    counts = Counter(g for g in ngrams(tokens, vocab.ngram_range) if g in vocab.term_index)
    if not counts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    idx = np.array(sorted(vocab.term_index[g] for g in counts), dtype=np.int64)
    terms = [vocab.terms[i] for i in idx]
    vals = np.array([counts[t] for t in terms], dtype=np.float64) * vocab.idf[idx]
    vals /= math.sqrt(float(np.dot(vals, vals)))
    return idx, vals


def tfidf_matrix(docs: Iterable[Sequence[str]], vocab: TfidfVocabulary) -> sp.csr_matrix:
    """Rows of raw-count x idf weights, each L2-normalized (empty rows stay empty)."""
    indptr, indices, data = [0], [], []
    for doc in docs:
        idx, vals = _row(doc, vocab)
        indices.append(idx)
        data.append(vals)
        indptr.append(indptr[-1] + len(idx))
    indices = np.concatenate(indices) if indices else np.empty(0, dtype=np.int64)
    data = np.concatenate(data) if data else np.empty(0)
    return sp.csr_matrix((data, indices, np.array(indptr)), shape=(len(indptr) - 1, vocab.width))


def transform(doc: Sequence[str], vocab: TfidfVocabulary) -> SparseVector:
    idx, vals = _row(doc, vocab)
    return SparseVector(tuple(int(i) for i in idx), tuple(float(v) for v in vals), vocab.width)


class TfidfNgramVectorizer(BaseEstimator, TransformerMixin):
    """TF-IDF over pre-tokenized documents (lists of tokens)."""

    def __init__(self, ngram_range: tuple = (1, 2), max_features: int = 20000):
        self.ngram_range = ngram_range
        self.max_features = max_features

    def fit(self, X, y=None):
        self.vocabulary_ = fit_tfidf(list(X), tuple(self.ngram_range), self.max_features)
        return self

    def transform(self, X) -> sp.csr_matrix:
        check_is_fitted(self, "vocabulary_")
        return tfidf_matrix(X, self.vocabulary_)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        check_is_fitted(self, "vocabulary_")
        return np.array(self.vocabulary_.terms, dtype=object)


def _groups(mode: str, sources: Sequence[str]) -> list[tuple[str, tuple]]:
    unknown = set(sources) - set(SOURCES)
    if unknown:
        raise ValueError(f"unknown sources: {sorted(unknown)}")
    if not sources:
        raise ValueError("at least one source must be selected")
    if mode == "unified":
        return [("all", tuple(s for s in SOURCES if s in sources))]
    if mode == "separate":
        groups = [("text", tuple(s for s in TEXT_GROUP if s in sources)),
                  ("names", tuple(s for s in NAME_GROUP if s in sources))]
        return [(g, srcs) for g, srcs in groups if srcs]
    raise ValueError(f"mode must be 'unified' or 'separate', got {mode!r}")


class SourceFeaturizer(BaseEstimator, TransformerMixin):
    """TF-IDF features for ProcessedDocs in one shared or two separate spaces.

    In ``separate`` mode descriptions, READMEs and wikis form one space and
    repository and file names another; each block is normalized on its own
    and the name block is appended after the text block.

    Parameters
    ----------
    mode : {"unified", "separate"}
    sources : sequence of str
        Which sources feed the features (subset of ``textprep.SOURCES``).
    max_features : int
        Cap of the unified space.
    text_max_features, name_max_features : int
        Caps of the two spaces in separate mode.
    """

    def __init__(self, mode: str = "unified", sources: tuple = SOURCES, ngram_range: tuple = (1, 2),
                 max_features: int = 20000, text_max_features: int = 18000, name_max_features: int = 2000):
        self.mode = mode
        self.sources = sources
        self.ngram_range = ngram_range
        self.max_features = max_features
        self.text_max_features = text_max_features
        self.name_max_features = name_max_features

    def _cap(self, group: str) -> int:
        return {"all": self.max_features, "text": self.text_max_features, "names": self.name_max_features}[group]

    def fit(self, X: Sequence[ProcessedDoc], y=None):
        X = list(X)
        self.groups_ = _groups(self.mode, tuple(self.sources))
        self.vocabularies_ = [fit_tfidf([d.tokens(srcs) for d in X], tuple(self.ngram_range), self._cap(g))
                              for g, srcs in self.groups_]
        self.n_features_out_ = sum(v.width for v in self.vocabularies_)
        return self

    def transform(self, X: Sequence[ProcessedDoc]) -> sp.csr_matrix:
        check_is_fitted(self, "vocabularies_")
        X = list(X)
        blocks = [tfidf_matrix([d.tokens(srcs) for d in X], vocab)
                  for (_, srcs), vocab in zip(self.groups_, self.vocabularies_)]
        if len(blocks) == 1:
            return blocks[0]
        return sp.hstack(blocks, format="csr")

    def transform_one(self, doc: ProcessedDoc) -> SparseVector:
        return SparseVector.from_csr_row(self.transform([doc]))

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        check_is_fitted(self, "vocabularies_")
        names = []
        for (g, _), vocab in zip(self.groups_, self.vocabularies_):
            names.extend(f"{g}:{t}" for t in vocab.terms)
        return np.array(names, dtype=object)

    def state_json(self) -> dict:
        check_is_fitted(self, "vocabularies_")
        return {
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.get_params().items()},
            "groups": [[g, list(srcs)] for g, srcs in self.groups_],
            "vocabularies": [v.to_json() for v in self.vocabularies_],
        }

    @classmethod
    def from_state_json(cls, obj: dict) -> "SourceFeaturizer":
        params = dict(obj["params"])
        params["sources"] = tuple(params["sources"])
        params["ngram_range"] = tuple(params["ngram_range"])
        feat = cls(**params)
        feat.groups_ = [(g, tuple(srcs)) for g, srcs in obj["groups"]]
        feat.vocabularies_ = [TfidfVocabulary.from_json(v) for v in obj["vocabularies"]]
        feat.n_features_out_ = sum(v.width for v in feat.vocabularies_)
        return feat
