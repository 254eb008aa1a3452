import pytest

from repotopics.pipeline import RunConfig, prepare, train
from repotopics.synthetic import make_corpus
from repotopics.textprep import TextTables
from repotopics.topicnorm import TopicVocabulary

# Small-corpus pruning thresholds: the production defaults (50/20) assume
# corpora of 100K+ repositories and would prune every token of a 500-repo one.
DESK_CONFIG = RunConfig(min_text_freq=2, min_name_freq=2, min_support=1)


@pytest.fixture(scope="session")
def tables():
    return TextTables.default()


@pytest.fixture(scope="session")
def vocab():
    return TopicVocabulary(
        topics=("3d", "api", "css", "google-cloud", "java", "javascript", "kubernetes", "machine-learning",
                "neural-network", "python", "react", "react-router", "testing", "visual-studio-code",
                "convolutional-neural-networks"),
        aliases={"gcp": "google-cloud", "k8s": "kubernetes", "vscode": "visual-studio-code",
                 "cnn": "convolutional-neural-networks", "js": "javascript", "ml": "machine-learning"},
        min_support=1,
    )


@pytest.fixture(scope="session")
def synthetic_dataset():
    records, vocab = make_corpus(n_repos=500, n_topics=20, seed=42)
    return prepare(records, vocab, DESK_CONFIG)


@pytest.fixture(scope="session")
def small_dataset():
    records, vocab = make_corpus(n_repos=120, n_topics=6, seed=3)
    return prepare(records, vocab, DESK_CONFIG)


@pytest.fixture(scope="session")
def small_bundle(small_dataset):
    return train(small_dataset, DESK_CONFIG.merged(max_iters=200))


_ACCEPTANCE: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "N/A"}[report.outcome]
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        if report.skipped and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2].removeprefix("Skipped: ")
        _ACCEPTANCE[number] = (status, item.obj.__doc__.strip().splitlines()[0], detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}" + (f"  [{detail}]" if detail else ""))
