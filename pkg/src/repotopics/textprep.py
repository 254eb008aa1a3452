"""Cleaning, tokenization and truncation of repository text sources."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

SOURCES = ("name", "description", "readme", "wiki", "filenames")
SOURCE_CAPS = {"name": 10, "description": 50, "readme": 400, "wiki": 100, "filenames": 100}
TEXT_SOURCES = ("name", "description", "readme", "wiki")
MIN_TOKEN_LEN = 2

_VOWELS = set("aeiouy")
# stem endings that take a silent "e" back after -ing/-ed is removed;
# True means the stem must also end consonant-vowel-consonant
_E_ENDINGS = {
    "at": True, "ur": True, "ar": True, "il": True, "in": True, "id": True, "ud": True,
    "ut": True, "od": True, "um": True, "ok": True, "ak": True, "ul": True, "ag": True,
    "iz": False, "yz": False, "iv": False, "ov": False, "lv": False, "uc": False,
    "rc": False, "rg": False, "bl": False, "pl": False, "tl": False, "dl": False,
    "gl": False, "kl": False, "zl": False, "uir": False, "rs": False, "ws": False,
    "ns": False, "yl": False,
}


def _read_lines(text: str) -> list[str]:
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _read_pairs(text: str) -> dict[str, str]:
    pairs = {}
    for ln in text.splitlines():
        if not ln.strip() or ln.startswith("#"):
            continue
        key, sep, value = ln.partition("\t")
        if not sep:
            raise ValueError(f"expected a TAB-separated pair, got {ln!r}")
        pairs[key.strip()] = value.strip()
    return pairs


class AbbreviationTable(dict):
    """Maps an abbreviation token to a tuple of expansion tokens."""

    def __init__(self, entries: Mapping[str, object] = ()):
        super().__init__()
        for key, value in dict(entries).items():
            parts = tuple(value.split()) if isinstance(value, str) else tuple(value)
            if key != key.lower() or any(p != p.lower() for p in parts):
                raise ValueError(f"abbreviation entries must be lowercase: {key!r}")
            if not parts:
                raise ValueError(f"abbreviation {key!r} has an empty expansion")
            if parts == (key,):
                raise ValueError(f"abbreviation {key!r} maps to itself")
            self[key] = parts


class Lemmatizer:
    """Exception lookup followed by plural and verbal suffix rules.

    Rules are applied until the token stops changing, so the result is always
    a fixed point. Exception values are final.
    """

    def __init__(self, exceptions: Optional[Mapping[str, str]] = None, min_stem: int = 3):
        self.exceptions = dict(exceptions or {})
        self.min_stem = min_stem
        for value in self.exceptions.values():
            if value not in self.exceptions and self._rules(value) != value:
                raise ValueError(f"lemma exception target {value!r} is not a fixed point")

    def __call__(self, token: str) -> str:
        for _ in range(8):
            if token in self.exceptions:
                return self.exceptions[token]
            lemma = self._rules(token)
            if lemma == token:
                break
            token = lemma
        return token

    def _rules(self, w: str) -> str:
        n, k = len(w), self.min_stem
        if n <= k:
            return w
        if w.endswith("ies") and n - 3 >= k - 1 and n >= 5:
            return w[:-3] + "y"
        if w.endswith("sses"):
            return w[:-2]
        if w.endswith(("xes", "ches", "shes", "zzes")) and n - 2 >= k:
            return w[:-2]
        if w.endswith("s") and not w.endswith(("ss", "us", "is")) and n - 1 >= k:
            return w[:-1]
        if w.endswith("ied") and n >= 5:
            return w[:-3] + "y"
        if w.endswith("ing") and not w.endswith("thing"):
            stem = w[:-3]
            if len(stem) >= k and _VOWELS & set(stem):
                return self._repair(stem)
        if w.endswith("ed") and not w.endswith("eed"):
            stem = w[:-2]
            if len(stem) >= k and _VOWELS & set(stem):
                return self._repair(stem)
        return w

    @staticmethod
    def _repair(stem: str) -> str:
        # runn -> run, but keep add, call, pass, buzz
        if (len(stem) >= 4 and stem[-1] == stem[-2] and stem[-1] not in "lsz" and stem[-1] not in _VOWELS
                and stem[-3] in _VOWELS and stem[-4] not in _VOWELS):
            return stem[:-1]
        cvc = (len(stem) >= 3 and stem[-1] not in _VOWELS and stem[-1] not in "wx"
               and stem[-2] in _VOWELS and stem[-3] not in _VOWELS)
        vowel_groups = len(re.findall(r"[aeiouy]+", stem))
        if cvc and vowel_groups == 1 and stem[0] not in _VOWELS:
            return stem + "e"
        for ending, needs_cvc in _E_ENDINGS.items():
            if stem.endswith(ending) and len(stem) > len(ending) + 1 and (cvc or not needs_cvc):
                return stem + "e"
        return stem


@dataclass(frozen=True)
class TextTables:
    stopwords: frozenset = frozenset()
    abbreviations: AbbreviationTable = field(default_factory=AbbreviationTable)
    filename_blocklist: frozenset = frozenset()
    lemma_exceptions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        object.__setattr__(self, "filename_blocklist", frozenset(self.filename_blocklist))
        if not isinstance(self.abbreviations, AbbreviationTable):
            object.__setattr__(self, "abbreviations", AbbreviationTable(self.abbreviations))
        object.__setattr__(self, "_lemmatizer", Lemmatizer(self.lemma_exceptions))
        for key, parts in self.abbreviations.items():
            for part in parts:
                if self.lemmatize(part) in self.abbreviations:
                    raise ValueError(f"expansion of {key!r} is itself an abbreviation: {part!r}")

    def lemmatize(self, token: str) -> str:
        return self._lemmatizer(token)

    FILES = {
        "stopwords": "stopwords.txt",
        "abbreviations": "abbreviations.tsv",
        "filename_blocklist": "filename_blocklist.txt",
        "lemma_exceptions": "lemma_exceptions.tsv",
    }

    @classmethod
    def from_texts(cls, texts: Mapping[str, str]) -> "TextTables":
        return cls(
            stopwords=_read_lines(texts["stopwords"]),
            abbreviations=AbbreviationTable(_read_pairs(texts["abbreviations"])),
            filename_blocklist=_read_lines(texts["filename_blocklist"]),
            lemma_exceptions=_read_pairs(texts["lemma_exceptions"]),
        )

    @classmethod
    def from_dir(cls, directory) -> "TextTables":
        directory = Path(directory)
        return cls.from_texts({k: (directory / f).read_text(encoding="utf-8") for k, f in cls.FILES.items()})

    @classmethod
    def default(cls) -> "TextTables":
        pkg = resources.files("repotopics") / "data"
        return cls.from_texts({k: (pkg / f).read_text(encoding="utf-8") for k, f in cls.FILES.items()})

    def to_texts(self) -> dict[str, str]:
        return {
            "stopwords": "".join(f"{w}\n" for w in sorted(self.stopwords)),
            "abbreviations": "".join(f"{k}\t{' '.join(v)}\n" for k, v in sorted(self.abbreviations.items())),
            "filename_blocklist": "".join(f"{w}\n" for w in sorted(self.filename_blocklist)),
            "lemma_exceptions": "".join(f"{k}\t{v}\n" for k, v in sorted(self.lemma_exceptions.items())),
        }

    def to_dir(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for key, text in self.to_texts().items():
            (directory / self.FILES[key]).write_text(text, encoding="utf-8")


@dataclass(frozen=True)
class TokenFilterConfig:
    min_text_freq: int = 50
    min_name_freq: int = 20
    train_only_counts: bool = True

    def __post_init__(self):
        if self.min_text_freq < 1 or self.min_name_freq < 1:
            raise ValueError("frequency thresholds must be >= 1")


@dataclass(frozen=True)
class ProcessedDoc:
    name_tokens: tuple = ()
    description_tokens: tuple = ()
    readme_tokens: tuple = ()
    wiki_tokens: tuple = ()
    filename_tokens: tuple = ()

    def __post_init__(self):
        for src in SOURCES:
            attr = f"{_attr(src)}"
            value = tuple(getattr(self, attr))
            if len(value) > SOURCE_CAPS[src]:
                raise ValueError(f"{attr} exceeds its cap of {SOURCE_CAPS[src]}")
            object.__setattr__(self, attr, value)

    def source(self, name: str) -> tuple:
        return getattr(self, _attr(name))

    def tokens(self, sources: Iterable[str] = SOURCES) -> list[str]:
        wanted = set(sources)
        out: list[str] = []
        for src in SOURCES:
            if src in wanted:
                out.extend(self.source(src))
        return out

    @property
    def all_tokens(self) -> list[str]:
        return self.tokens(SOURCES)

    def to_json(self) -> dict:
        return {src: list(self.source(src)) for src in SOURCES}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ProcessedDoc":
        return cls(**{_attr(src): obj.get(src, ()) for src in SOURCES})


def _attr(source: str) -> str:
    return {"filenames": "filename_tokens"}.get(source, f"{source}_tokens")


_FENCED = re.compile(r"```.*?(```|\Z)|~~~.*?(~~~|\Z)", re.S)
_INLINE_CODE = re.compile(r"`[^`\n]*`")
_HTML_COMMENT = re.compile(r"<!--.*?-->", re.S)
_HTML_TAG = re.compile(r"</?[A-Za-z][^>\n]*>")
_MD_IMAGE = re.compile(r"!\[[^\]]*\]\([^)]*\)")
_MD_LINK = re.compile(r"\[([^\]]*)\]\([^)]*\)")
_URL = re.compile(r"(?:https?|ftp)://\S+|www\.\S+", re.I)
_EMAIL = re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+")
_USERNAME = re.compile(r"(?<!\w)@[\w-]+")
_DATE = re.compile(r"\b\d{4}[-/.]\d{1,2}[-/.]\d{1,2}\b|\b\d{1,2}[-/.]\d{1,2}[-/.]\d{2,4}\b")
_TIME = re.compile(r"\b\d{1,2}:\d{2}(?::\d{2})?(?:\s*[ap]\.?m\.?)?\b", re.I)
_NON_LETTER = re.compile(r"[^A-Za-z]+")
_CASE_SPLIT = re.compile(r"(?<=[a-z])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_SEPARATORS = re.compile(r"[_\-.]+")


def split_identifier(token: str) -> list[str]:
    """Split on ``_ - .`` and case boundaries, lowercasing the pieces.

    >>> split_identifier("vscode-java-debug")
    ['vscode', 'java', 'debug']
    >>> split_identifier("HTTPServerError")
    ['http', 'server', 'error']
    """
    out = []
    for chunk in _SEPARATORS.split(token):
        out.extend(p.lower() for p in _CASE_SPLIT.split(chunk) if p)
    return out


def strip_markup(raw: str) -> str:
    """Remove code, markup, URLs, emails, usernames, dates and times."""
    text = _FENCED.sub(" ", raw)
    text = _HTML_COMMENT.sub(" ", text)
    text = _INLINE_CODE.sub(" ", text)
    text = _MD_IMAGE.sub(" ", text)
    text = _MD_LINK.sub(r" \1 ", text)
    text = _URL.sub(" ", text)
    text = _EMAIL.sub(" ", text)
    text = _USERNAME.sub(" ", text)
    text = _HTML_TAG.sub(" ", text)
    text = _DATE.sub(" ", text)
    return _TIME.sub(" ", text)


def _words(text: str) -> list[str]:
    # letters-only fragments keep their case so camelCase can still be split
    out = []
    for fragment in _NON_LETTER.split(text):
        if fragment:
            out.extend(split_identifier(fragment))
    return out


def _normalize(word: str, tables: TextTables, expand: bool = True) -> list[str]:
    parts = tables.abbreviations.get(word, (word,)) if expand else (word,)
    out = []
    for part in parts:
        if part in tables.stopwords:
            continue
        lemma = tables.lemmatize(part)
        if expand and lemma in tables.abbreviations:
            pieces = [tables.lemmatize(p) for p in tables.abbreviations[lemma]]
        else:
            pieces = [lemma]
        out.extend(p for p in pieces if len(p) >= MIN_TOKEN_LEN and p not in tables.stopwords)
    return out


def clean_text(raw: Optional[str], tables: Optional[TextTables] = None,
               cfg: Optional[TokenFilterConfig] = None) -> list[str]:
    """Turn free text (description, README, wiki) into normalized tokens.

    ``cfg`` is accepted for signature symmetry; rare-token pruning is corpus
    level and lives in :func:`prune_rare`.
    """
    if not raw or not raw.strip():
        return []
    tables = tables if tables is not None else default_tables()
    out = []
    for word in _words(strip_markup(raw)):
        out.extend(_normalize(word, tables))
    return out


def lemmatize(token: str, tables: Optional[TextTables] = None) -> str:
    tables = tables if tables is not None else default_tables()
    return tables.lemmatize(token)


def clean_names(project_full_name: str, file_paths: Sequence[str],
                tables: Optional[TextTables] = None,
                cfg: Optional[TokenFilterConfig] = None) -> tuple[list[str], list[str]]:
    """Tokens for the repository name (owner dropped) and for its file paths."""
    tables = tables if tables is not None else default_tables()
    repo_name = project_full_name.split("/", 1)[-1]
    name_tokens = [t for w in _words(repo_name) for t in _normalize(w, tables, expand=False)]
    file_tokens = []
    for path in file_paths:
        for w in _words(path):
            file_tokens.extend(t for t in _normalize(w, tables, expand=False)
                               if t not in tables.filename_blocklist)
    return name_tokens, file_tokens


@dataclass(frozen=True)
class SourceTokens:
    """Cleaned, untruncated token lists for one repository."""

    name: tuple = ()
    description: tuple = ()
    readme: tuple = ()
    wiki: tuple = ()
    filenames: tuple = ()


def clean_record(record, tables: Optional[TextTables] = None) -> SourceTokens:
    tables = tables if tables is not None else default_tables()
    name, files = clean_names(record.full_name, record.file_paths, tables)
    return SourceTokens(
        name=tuple(name),
        description=tuple(clean_text(record.description, tables)),
        readme=tuple(clean_text(record.readme, tables)),
        wiki=tuple(clean_text(record.wiki, tables)),
        filenames=tuple(files),
    )


def assemble_document(name=(), description=(), readme=(), wiki=(), filenames=()) -> ProcessedDoc:
    """Truncate each source to its cap, keeping the leading tokens."""
    return ProcessedDoc(
        name_tokens=tuple(name)[:SOURCE_CAPS["name"]],
        description_tokens=tuple(description)[:SOURCE_CAPS["description"]],
        readme_tokens=tuple(readme)[:SOURCE_CAPS["readme"]],
        wiki_tokens=tuple(wiki)[:SOURCE_CAPS["wiki"]],
        filename_tokens=tuple(filenames)[:SOURCE_CAPS["filenames"]],
    )


@dataclass(frozen=True)
class TokenCounts:
    text: Counter
    names: Counter

    @classmethod
    def from_sources(cls, items: Iterable) -> "TokenCounts":
        text, names = Counter(), Counter()
        for item in items:
            if isinstance(item, ProcessedDoc):
                get = item.source
            else:
                get = lambda s, it=item: getattr(it, s)  # noqa: E731
            for src in TEXT_SOURCES:
                text.update(get(src))
            names.update(get("filenames"))
        return cls(text, names)

    def kept(self, cfg: TokenFilterConfig) -> tuple[frozenset, frozenset]:
        """Tokens that survive pruning, as (text tokens, file-name tokens)."""
        return (frozenset(t for t, c in self.text.items() if c >= cfg.min_text_freq),
                frozenset(t for t, c in self.names.items() if c >= cfg.min_name_freq))


def _prune(sources: SourceTokens, kept_text: frozenset, kept_names: frozenset) -> SourceTokens:
    def text(ts):
        return tuple(t for t in ts if t in kept_text)

    return SourceTokens(
        name=text(sources.name),
        description=text(sources.description),
        readme=text(sources.readme),
        wiki=text(sources.wiki),
        filenames=tuple(t for t in sources.filenames if t in kept_names),
    )


def prune_rare(docs: Sequence[ProcessedDoc], cfg: TokenFilterConfig = TokenFilterConfig(),
               counts: Optional[TokenCounts] = None) -> list[ProcessedDoc]:
    """Drop tokens whose corpus frequency falls below the configured thresholds.

    Text sources (name, description, README, wiki) and file names are counted
    separately. ``counts`` defaults to counts over ``docs`` themselves; pass
    training-split counts to keep held-out data out of the statistics.
    """
    counts = counts if counts is not None else TokenCounts.from_sources(docs)
    kept_text, kept_names = counts.kept(cfg)
    out = []
    for doc in docs:
        pruned = _prune(SourceTokens(*(doc.source(s) for s in SOURCES)), kept_text, kept_names)
        out.append(replace(doc, **{_attr(s): getattr(pruned, s) for s in SOURCES}))
    return out


_DEFAULT_TABLES: Optional[TextTables] = None


def default_tables() -> TextTables:
    global _DEFAULT_TABLES
    if _DEFAULT_TABLES is None:
        _DEFAULT_TABLES = TextTables.default()
    return _DEFAULT_TABLES


class RepoPreprocessor(BaseEstimator, TransformerMixin):
    """Turn RepoRecords into ProcessedDocs.

    ``fit`` collects token frequencies for rare-token pruning, so fitting on
    the training split alone keeps test documents out of those statistics.

    Parameters
    ----------
    tables : TextTables, optional
        Stopwords, abbreviations, filename blocklist and lemma exceptions.
        Defaults to the packaged tables.
    min_text_freq, min_name_freq : int
        Pruning thresholds for text tokens and file-name tokens.
    """

    def __init__(self, tables: Optional[TextTables] = None, min_text_freq: int = 50, min_name_freq: int = 20):
        self.tables = tables
        self.min_text_freq = min_text_freq
        self.min_name_freq = min_name_freq

    def _tables(self) -> TextTables:
        return self.tables if self.tables is not None else default_tables()

    def _cfg(self) -> TokenFilterConfig:
        return TokenFilterConfig(self.min_text_freq, self.min_name_freq)

    def clean(self, records) -> list[SourceTokens]:
        tables = self._tables()
        return [clean_record(r, tables) for r in records]

    def fit(self, X, y=None):
        return self.fit_from_sources(self.clean(X))

    def fit_from_sources(self, sources: Sequence[SourceTokens]):
        self.text_vocabulary_, self.name_vocabulary_ = TokenCounts.from_sources(sources).kept(self._cfg())
        return self

    def transform_sources(self, sources: Sequence[SourceTokens]) -> list[ProcessedDoc]:
        check_is_fitted(self, "text_vocabulary_")
        docs = []
        for s in sources:
            p = _prune(s, self.text_vocabulary_, self.name_vocabulary_)
            docs.append(assemble_document(p.name, p.description, p.readme, p.wiki, p.filenames))
        return docs

    def transform(self, X) -> list[ProcessedDoc]:
        return self.transform_sources(self.clean(X))

    def fit_transform(self, X, y=None, **fit_params):
        sources = self.clean(X)
        return self.fit_from_sources(sources).transform_sources(sources)
