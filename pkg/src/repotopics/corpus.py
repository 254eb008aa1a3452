"""Repository records: ingestion, filtering, splitting and remote fetch."""

from __future__ import annotations

import base64
import json
import logging
import math
import os
import random
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

logger = logging.getLogger(__name__)

GITHUB_API = "https://api.github.com"


class CorpusError(ValueError):
    """Raised for malformed corpus input."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FetchError(RuntimeError):
    """Base class for remote fetch failures."""


class RepoNotFound(FetchError):
    pass


class UpstreamAuthError(FetchError):
    pass


class UpstreamUnavailable(FetchError):
    pass


def _check_full_name(full_name: str) -> None:
    parts = full_name.split("/") if isinstance(full_name, str) else []
    if len(parts) != 2 or not all(parts):
        raise CorpusError(f"full_name must look like 'owner/name', got {full_name!r}")


@dataclass(frozen=True)
class RepoRecord:
    full_name: str
    description: Optional[str] = None
    readme: Optional[str] = None
    wiki: Optional[str] = None
    file_paths: tuple = ()
    user_topics: tuple = ()
    stars: int = 0

    def __post_init__(self):
        _check_full_name(self.full_name)
        object.__setattr__(self, "file_paths", tuple(self.file_paths))
        object.__setattr__(self, "user_topics", tuple(self.user_topics))
        if any(not isinstance(t, str) or not t for t in self.user_topics):
            raise CorpusError(f"{self.full_name}: user topics must be non-empty strings")
        if isinstance(self.stars, bool) or not isinstance(self.stars, int) or self.stars < 0:
            raise CorpusError(f"{self.full_name}: stars must be a non-negative integer")

    @property
    def name(self) -> str:
        return self.full_name.split("/", 1)[1]

    def to_json(self) -> dict:
        return {
            "full_name": self.full_name,
            "description": self.description,
            "readme": self.readme,
            "wiki": self.wiki,
            "file_paths": list(self.file_paths),
            "topics": list(self.user_topics),
            "stars": self.stars,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RepoRecord":
        if not isinstance(obj, dict):
            raise CorpusError("expected a JSON object")
        for key in ("full_name", "stars"):
            if key not in obj:
                raise CorpusError(f"missing required field {key!r}")
        for key in ("description", "readme", "wiki"):
            if obj.get(key) is not None and not isinstance(obj[key], str):
                raise CorpusError(f"field {key!r} must be a string or null")
        for key in ("file_paths", "topics"):
            value = obj.get(key) or []
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise CorpusError(f"field {key!r} must be a list of strings")
        return cls(
            full_name=obj["full_name"],
            description=obj.get("description"),
            readme=obj.get("readme"),
            wiki=obj.get("wiki"),
            file_paths=obj.get("file_paths") or (),
            user_topics=obj.get("topics") or (),
            stars=obj["stars"],
        )


@dataclass(frozen=True)
class FilterConfig:
    min_stars: int = 10
    require_text: bool = True
    max_non_english_ratio: float = 0.5

    def __post_init__(self):
        if self.min_stars < 0:
            raise ValueError("min_stars must be >= 0")
        if not 0.0 <= self.max_non_english_ratio <= 1.0:
            raise ValueError("max_non_english_ratio must lie in [0, 1]")


@dataclass(frozen=True)
class CorpusSplit:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)
    seed: int = 0

    def to_json(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test": self.test, "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusSplit":
        return cls(list(obj["train"]), list(obj["validation"]), list(obj["test"]), int(obj["seed"]))


def parse_corpus(stream: Iterable[str]) -> list[RepoRecord]:
    """Parse newline-delimited JSON into records, one per non-empty line.

    ``stream`` may be a string or any iterable of lines (an open file works).
    Errors carry the 1-based line number of the offending line.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()
    records = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed JSON ({exc.msg})", line=lineno) from None
        try:
            records.append(RepoRecord.from_json(obj))
        except CorpusError as exc:
            raise CorpusError(str(exc), line=lineno) from None
    return records


def read_corpus(path) -> list[RepoRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def write_corpus(records: Iterable[RepoRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def _is_latin(ch: str) -> bool:
    return ("a" <= ch <= "z") or ("A" <= ch <= "Z")


def non_english_ratio(text: Optional[str]) -> float:
    """Share of alphabetic characters that are not basic Latin letters."""
    letters = [ch for ch in text or "" if ch.isalpha()]
    if not letters:
        return 0.0
    return sum(not _is_latin(ch) for ch in letters) / len(letters)


def filter_corpus(records: Sequence[RepoRecord], cfg: FilterConfig = FilterConfig()) -> list[RepoRecord]:
    kept = []
    for rec in records:
        if rec.stars < cfg.min_stars:
            continue
        if cfg.require_text and not (rec.readme or rec.description):
            continue
        text = (rec.readme or "") + (rec.description or "")
        if non_english_ratio(text) > cfg.max_non_english_ratio:
            continue
        kept.append(rec)
    logger.info("filter_corpus kept %d of %d records", len(kept), len(records))
    return kept


def split_corpus(records: Sequence, seed: int, test_ratio: float = 0.2,
                 validation_ratio: float = 0.1) -> CorpusSplit:
    """Shuffle indices under ``seed`` and cut test, then validation, off the front.

    Sizes use floor; the remainder goes to train.
    """
    n = len(records)
    if n == 0:
        raise ValueError("cannot split an empty corpus")
    order = list(range(n))
    # random.Random(int) seeding is specified to be stable across platforms and versions
    random.Random(seed).shuffle(order)
    n_test = math.floor(test_ratio * n)
    n_val = math.floor(validation_ratio * (n - n_test))
    test = sorted(order[:n_test])
    validation = sorted(order[n_test:n_test + n_val])
    train = sorted(order[n_test + n_val:])
    return CorpusSplit(train=train, validation=validation, test=test, seed=seed)


def _get_json(url: str, token: Optional[str], timeout: float):
    req = urllib.request.Request(url, headers={"Accept": "application/vnd.github+json",
                                               "User-Agent": "repotopics"})
    if token:
        req.add_header("Authorization", f"Bearer {token}")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code == 404:
            raise RepoNotFound(url) from None
        if exc.code in (401, 403, 429):
            raise UpstreamAuthError(f"{exc.code} from {url}") from None
        raise UpstreamUnavailable(f"{exc.code} from {url}") from None
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise UpstreamUnavailable(f"{url}: {exc}") from None


def fetch_repo(full_name: str, auth: Optional[str] = None, *, base_url: str = GITHUB_API,
               timeout: float = 10.0) -> RepoRecord:
    """Build a RepoRecord from the GitHub REST API.

    The README and the file tree are optional: if either request fails with
    not-found the field is left empty. Failures of the repository request
    itself propagate as RepoNotFound / UpstreamAuthError / UpstreamUnavailable.
    """
    _check_full_name(full_name)
    base = base_url.rstrip("/")
    quoted = "/".join(urllib.parse.quote(p, safe="") for p in full_name.split("/"))
    meta = _get_json(f"{base}/repos/{quoted}", auth, timeout)

    readme = None
    try:
        payload = _get_json(f"{base}/repos/{quoted}/readme", auth, timeout)
        if payload.get("encoding") == "base64":
            readme = base64.b64decode(payload.get("content", "")).decode("utf-8", "replace")
        else:
            readme = payload.get("content")
    except RepoNotFound:
        pass

    file_paths: list[str] = []
    branch = meta.get("default_branch")
    if branch:
        try:
            tree = _get_json(f"{base}/repos/{quoted}/git/trees/{urllib.parse.quote(branch, safe='')}"
                             "?recursive=1", auth, timeout)
            file_paths = [e["path"] for e in tree.get("tree", []) if e.get("type") == "blob"]
        except RepoNotFound:
            pass

    return RepoRecord(
        full_name=meta.get("full_name") or full_name,
        description=meta.get("description"),
        readme=readme,
        wiki=None,
        file_paths=file_paths,
        user_topics=[t for t in meta.get("topics") or [] if t],
        stars=int(meta.get("stargazers_count") or 0),
    )


def token_from_env() -> Optional[str]:
    return os.environ.get("GITHUB_TOKEN") or None
