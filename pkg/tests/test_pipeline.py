import numpy as np
import pytest

from conftest import DESK_CONFIG
from repotopics.corpus import RepoRecord
from repotopics.pipeline import (
    AblationRow,
    PreparedDataset,
    RunConfig,
    ablation,
    evaluate_bundle,
    prepare,
    train,
)
from repotopics.synthetic import make_corpus
from repotopics.topicnorm import TopicVocabulary


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.seed == 42 and cfg.kind == "logistic" and cfg.n_values == (1, 3, 5, 8, 10)

    @pytest.mark.parametrize("bad", [{"sources": ()}, {"sources": ("code",)}, {"kind": "svm"},
                                     {"feature_mode": "mixed"}, {"mapping_mode": "fuzzy"}, {"min_stars": -1},
                                     {"learning_rate": 0}, {"tol": 0}, {"top_k": 0}, {"min_text_freq": 0},
                                     {"n_values": (0, 5)}, {"max_non_english_ratio": 2}])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            RunConfig(**bad)

    def test_from_dict_and_merge(self):
        cfg = RunConfig.from_dict({"kind": "mnb", "sources": ["readme"]})
        assert cfg.sources == ("readme",)
        assert cfg.merged(kind=None, seed=7).kind == "mnb"
        assert cfg.merged(seed=7).seed == 7
        with pytest.raises(ValueError, match="unknown"):
            RunConfig.from_dict({"colour": 1})
        assert RunConfig.from_dict(cfg.to_dict()) == cfg


class TestPrepare:
    def test_deterministic_and_persisted(self, synthetic_dataset, tmp_path):
        records, vocab = make_corpus(n_repos=500, n_topics=20, seed=42)
        again = prepare(records, vocab, DESK_CONFIG)
        assert again.docs == synthetic_dataset.docs
        assert np.array_equal(again.labels, synthetic_dataset.labels)
        synthetic_dataset.save(tmp_path / "d")
        loaded = PreparedDataset.load(tmp_path / "d")
        assert loaded.docs == synthetic_dataset.docs
        assert np.array_equal(loaded.labels, synthetic_dataset.labels)
        assert loaded.split == synthetic_dataset.split
        assert loaded.vocabulary == synthetic_dataset.vocabulary
        assert loaded.preprocessor.text_vocabulary_ == synthetic_dataset.preprocessor.text_vocabulary_
        for name in ("docs.jsonl", "labels.jsonl", "splits.json", "subtopics.tsv", "stats.json"):
            assert (tmp_path / "d" / name).is_file()

    def test_split_sizes(self, synthetic_dataset):
        s = synthetic_dataset.split
        assert (len(s.train), len(s.validation), len(s.test)) == (360, 40, 100)

    def test_filters_and_drops_unlabelled(self):
        vocab = TopicVocabulary(topics=("python", "java"), min_support=1)
        records = [RepoRecord("o/a", "python tool", stars=50, user_topics=["python3"]),
                   RepoRecord("o/b", "java thing", stars=50, user_topics=["unrelated"]),
                   RepoRecord("o/c", "python again", stars=3, user_topics=["python"]),
                   RepoRecord("o/d", "java library", stars=50, user_topics=["java"])]
        ds = prepare(records, vocab, RunConfig(min_text_freq=1, min_name_freq=1, min_support=1))
        assert ds.full_names == ["o/a", "o/d"]
        assert ds.stats["n_without_topics"] == 1 and ds.stats["n_filtered_out"] == 1
        assert ds.subtopics == {"python3": {"python"}}

    def test_token_counts_exclude_test_rows(self):
        records, vocab = make_corpus(n_repos=60, n_topics=4, seed=1)
        ds = prepare(records, vocab, DESK_CONFIG)
        test_only = {t for i in ds.split.test for t in ds.docs[i].readme_tokens}
        fit_tokens = {t for i in ds.rows("fit") for t in ds.docs[i].readme_tokens}
        assert test_only <= fit_tokens


class TestTrainEvaluate:
    def test_reports_identical_across_runs(self, small_dataset):
        cfg = DESK_CONFIG.merged(max_iters=100)
        a = evaluate_bundle(train(small_dataset, cfg), small_dataset, cfg, timing_samples=0)
        b = evaluate_bundle(train(small_dataset, cfg), small_dataset, cfg, timing_samples=0)
        assert a == b

    def test_vocabulary_mismatch(self, small_bundle, synthetic_dataset):
        with pytest.raises(ValueError, match="vocabularies"):
            evaluate_bundle(small_bundle, synthetic_dataset)


class TestAblation:
    def test_rows_and_topic_counts(self, small_dataset):
        plan = [AblationRow("readme", sources=("readme",)),
                AblationRow("exact", mapping_mode="exact_only"),
                AblationRow("heuristics"),
                AblationRow("top3", top_k=3),
                AblationRow("mnb", kind="mnb", feature_mode="separate")]
        rows = ablation(small_dataset, plan, DESK_CONFIG.merged(max_iters=100, n_values=(1, 5)))
        assert [c["name"] for c, _ in rows] == ["readme", "exact", "heuristics", "top3", "mnb"]
        assert rows[3][0]["n_topics"] == 3
        assert all(0 <= r.lrap <= 1 for _, r in rows)

    def test_zero_sources_rejected(self):
        with pytest.raises(ValueError, match="no sources"):
            AblationRow("none", sources=())
