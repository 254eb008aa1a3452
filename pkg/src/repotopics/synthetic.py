"""Seeded synthetic repository corpora with planted topic signals."""

from __future__ import annotations

import random
import string
from typing import Optional

from repotopics.corpus import RepoRecord
from repotopics.textprep import TextTables, default_tables
from repotopics.topicnorm import TopicVocabulary

_ONSETS = ["b", "br", "d", "dr", "f", "g", "gr", "k", "kr", "l", "m", "n", "p", "pr", "t", "tr", "v", "z"]
_NUCLEI = ["a", "o", "u", "i"]
_CODAS = ["k", "m", "n", "p", "r", "t", "x", "lk", "rn", "mp"]


def _pseudo_words(rng: random.Random, count: int, tables: TextTables, taken: set) -> list[str]:
    words = []
    while len(words) < count:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_NUCLEI) for _ in range(rng.randint(1, 2)))
        w += rng.choice(_CODAS)
        if (w in taken or w in tables.stopwords or w in tables.abbreviations
                or tables.lemmatize(w) != w):
            continue
        taken.add(w)
        words.append(w)
    return words


def _topic_names(n: int) -> list[str]:
    letters = string.ascii_lowercase
    return [f"topic-{letters[i // 26]}{letters[i % 26]}" for i in range(n)]


def make_corpus(n_repos: int = 500, n_topics: int = 20, tokens_per_topic: int = 5,
                topics_per_repo: tuple[int, int] = (1, 3), seed: int = 42,
                background_size: int = 400, readme_length: tuple[int, int] = (60, 120),
                rare_topic_prevalence: Optional[float] = None, signature_keep: float = 1.0,
                tables: Optional[TextTables] = None) -> tuple[list[RepoRecord], TopicVocabulary]:
    """Generate repositories whose READMEs carry each of their topics' signature tokens.

    Every topic owns ``tokens_per_topic`` pseudo-words; a repository tagged with
    a topic gets each of them (kept with probability ``signature_keep``) at a
    random position of an otherwise random README. With
    ``rare_topic_prevalence`` the last topic is assigned to that fraction of
    repositories, on top of their regular topics.
    """
    rng = random.Random(seed)
    tables = tables if tables is not None else default_tables()
    taken: set = set()
    background = _pseudo_words(rng, background_size, tables, taken)
    names = _topic_names(n_topics)
    signatures = {t: _pseudo_words(rng, tokens_per_topic, tables, taken) for t in names}
    common = names[:-1] if rare_topic_prevalence is not None else names
    n_rare = round(rare_topic_prevalence * n_repos) if rare_topic_prevalence is not None else 0
    rare_rows = set(rng.sample(range(n_repos), n_rare)) if n_rare else set()

    records = []
    for i in range(n_repos):
        k = rng.randint(*topics_per_repo)
        topics = rng.sample(common, min(k, len(common)))
        if i in rare_rows:
            topics.append(names[-1])
        words = [rng.choice(background) for _ in range(rng.randint(*readme_length))]
        for t in topics:
            for token in signatures[t]:
                if rng.random() < signature_keep:
                    words.insert(rng.randrange(len(words) + 1), token)
        description = " ".join(rng.choice(background) for _ in range(rng.randint(3, 8)))
        records.append(RepoRecord(
            full_name=f"owner{i}/{rng.choice(background)}-{rng.choice(background)}",
            description=description,
            readme=" ".join(words),
            wiki=None,
            file_paths=[f"src/{rng.choice(background)}.py" for _ in range(rng.randint(0, 4))],
            user_topics=topics,
            stars=rng.randint(10, 5000),
        ))
    return records, TopicVocabulary(topics=tuple(names), min_support=1)
