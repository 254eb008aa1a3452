"""Model bundle persistence: a directory of JSON files written atomically."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from repotopics.classify import Recommendation, recommend
from repotopics.corpus import RepoRecord
from repotopics.model import TopicRecommender
from repotopics.textprep import RepoPreprocessor, TextTables
from repotopics.topicnorm import TopicVocabulary

FORMAT_VERSION = 1
_PAYLOAD = ("topics.json", "tfidf.json", "classifier.json", "preprocess.json")


class BundleError(ValueError):
    pass


@dataclass
class ModelBundle:
    vocabulary: TopicVocabulary
    preprocessor: RepoPreprocessor
    recommender: TopicRecommender
    manifest: dict = field(default_factory=dict)

    @property
    def topics(self) -> tuple:
        return self.recommender.topics_

    @property
    def version(self) -> str:
        return str(self.manifest.get("model_version", "unversioned"))

    def scores(self, records: Sequence[RepoRecord]) -> np.ndarray:
        return self.recommender.predict_proba(self.preprocessor.transform(records))

    def recommend(self, record: RepoRecord, n: int = 5) -> list[Recommendation]:
        return recommend(self.scores([record])[0], n, self.topics)


def _dumps(obj) -> str:
    # json emits floats via repr, the shortest string that round-trips exactly
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


def save_model(bundle: ModelBundle, directory) -> Path:
    """Write ``bundle`` to ``directory`` and return the manifest path.

    Files go to a sibling temporary directory first; the manifest, which
    holds a checksum of every other file, is written last and the directory
    is swapped into place only after everything succeeded.
    """
    target = Path(directory)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        params, featurizer, classifier = bundle.recommender.state_json()
        pre = bundle.preprocessor
        files = {
            "topics.json": _dumps(bundle.vocabulary.to_json()),
            "tfidf.json": _dumps(featurizer),
            "classifier.json": _dumps({"recommender": params, "classifier": classifier}),
            "preprocess.json": _dumps({
                "min_text_freq": pre.min_text_freq,
                "min_name_freq": pre.min_name_freq,
                "text_vocabulary": sorted(pre.text_vocabulary_),
                "name_vocabulary": sorted(pre.name_vocabulary_),
            }),
        }
        for name, text in files.items():
            _write(tmp / name, text)
        tables = pre.tables if pre.tables is not None else TextTables.default()
        tables.to_dir(tmp / "tables")
        manifest = dict(bundle.manifest)
        manifest.setdefault("created_at", _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        manifest.update({
            "format_version": FORMAT_VERSION,
            "kind": bundle.recommender.kind,
            "n_topics": len(bundle.recommender.topics_),
            "n_features": int(bundle.recommender.featurizer_.n_features_out_),
        })
        checksums = {name: _sha256(tmp / name) for name in _PAYLOAD}
        for f in sorted((tmp / "tables").iterdir()):
            checksums[f"tables/{f.name}"] = _sha256(f)
        manifest["checksums"] = checksums
        manifest.setdefault("model_version", checksums["classifier.json"][:12])
        _write(tmp / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))

        backup = None
        if target.exists():
            backup = target.with_name(f".{target.name}.old-{os.getpid()}")
            os.replace(target, backup)
        try:
            os.replace(tmp, target)
        except OSError:
            if backup is not None:
                os.replace(backup, target)
            raise
        if backup is not None:
            shutil.rmtree(backup, ignore_errors=True)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    bundle.manifest = manifest
    return target / "manifest.json"


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise BundleError(f"missing bundle file {path.name}") from None
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path.name} is not valid JSON: {exc}") from None


def load_model(directory) -> ModelBundle:
    """Load and validate a bundle written by :func:`save_model`."""
    root = Path(directory)
    if not root.is_dir():
        raise BundleError(f"{root} is not a bundle directory")
    manifest = _read_json(root / "manifest.json")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(f"unsupported version: format_version={version!r}")
    for name, digest in (manifest.get("checksums") or {}).items():
        path = root / name
        if not path.is_file():
            raise BundleError(f"missing bundle file {name}")
        if _sha256(path) != digest:
            raise BundleError(f"checksum mismatch for {name}")
    for name in _PAYLOAD:
        if name not in (manifest.get("checksums") or {}):
            raise BundleError(f"manifest lists no checksum for {name}")

    try:
        vocab = TopicVocabulary.from_json(_read_json(root / "topics.json"))
        clf = _read_json(root / "classifier.json")
        recommender = TopicRecommender.from_state_json(clf["recommender"], _read_json(root / "tfidf.json"),
                                                       clf["classifier"])
        pre_state = _read_json(root / "preprocess.json")
        tables = TextTables.from_dir(root / "tables")
        pre = RepoPreprocessor(tables, pre_state["min_text_freq"], pre_state["min_name_freq"])
        pre.text_vocabulary_ = frozenset(pre_state["text_vocabulary"])
        pre.name_vocabulary_ = frozenset(pre_state["name_vocabulary"])
    except BundleError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"invalid bundle contents: {exc}") from None
    if tuple(vocab.topics) != tuple(recommender.topics_):
        raise BundleError("topics.json disagrees with the classifier's topic list")
    if manifest.get("n_features") not in (None, recommender.featurizer_.n_features_out_):
        raise BundleError("feature width differs from the manifest")
    return ModelBundle(vocab, pre, recommender, manifest)
