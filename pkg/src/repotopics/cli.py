"""Command-line entry point: prepare, train, evaluate, ablate, predict, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from repotopics.bundle import BundleError, load_model, save_model
from repotopics.classify import TrainingDiverged
from repotopics.corpus import (
    CorpusError,
    FetchError,
    RepoRecord,
    fetch_repo,
    read_corpus,
    token_from_env,
    write_corpus,
)
from repotopics.evaluation import ablation_csv
from repotopics.pipeline import (
    PreparedDataset,
    RunConfig,
    ablation,
    default_plan,
    evaluate_bundle,
    plan_from_json,
    prepare,
    train,
)
from repotopics.topicnorm import VocabularyError, load_vocabulary

logger = logging.getLogger("repotopics")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class ModelError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _csv(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _ints(value: str) -> list[int]:
    return [int(v) for v in _csv(value)]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="random seed (default 42)")
    p.add_argument("--config", type=Path, help="JSON run configuration; flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repotopics", description="Featured-topic recommendation for software repositories.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="filter, label, split and preprocess a corpus")
    _common(p)
    p.add_argument("--input", required=True, type=Path, help="corpus JSONL")
    p.add_argument("--topics", required=True, type=Path, help="featured-topic vocabulary JSON")
    p.add_argument("--out", required=True, type=Path, help="processed dataset directory")
    p.add_argument("--min-stars", type=int)
    p.add_argument("--min-support", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--mapping-mode", choices=["exact_only", "with_heuristics"])
    p.add_argument("--min-text-freq", type=int)
    p.add_argument("--min-name-freq", type=int)

    p = sub.add_parser("train", help="train a model bundle on a processed dataset")
    _common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--model-dir", required=True, type=Path)
    p.add_argument("--kind", choices=["logistic", "mnb"])
    p.add_argument("--feature-mode", choices=["unified", "separate"])
    p.add_argument("--sources", type=_csv, help="comma-separated subset of name,description,readme,wiki,filenames")
    p.add_argument("--max-features", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--no-class-weights", dest="use_class_weights", action="store_const", const=False)
    p.add_argument("--n-jobs", type=int)

    p = sub.add_parser("evaluate", help="print a MetricsReport (JSON) for the test split")
    _common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--model-dir", required=True, type=Path)
    p.add_argument("--split", choices=["test", "validation", "train"], default="test")
    p.add_argument("--n-values", type=_ints)
    p.add_argument("--timing-samples", type=int, default=1000)
    p.add_argument("--text", action="store_true", help="print a table instead of JSON")

    p = sub.add_parser("ablate", help="train/evaluate several configurations, print CSV")
    _common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--plan", type=Path, help="JSON list of ablation rows (default: built-in plan)")
    p.add_argument("--out", type=Path, help="write the CSV here instead of stdout")
    p.add_argument("--n", type=int, default=5)

    p = sub.add_parser("predict", help="recommend topics for one repository")
    _common(p)
    p.add_argument("--model-dir", required=True, type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--repo-file", type=Path, help="repository record as JSON")
    src.add_argument("--repo", help="owner/name fetched from GitHub (uses GITHUB_TOKEN)")
    p.add_argument("--n", type=int, default=5)

    p = sub.add_parser("serve", help="run the HTTP prediction service")
    _common(p)
    p.add_argument("--model-dir", required=True, type=Path)
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--enable-fetch", action="store_true", help="enable GET /api/v1/predict-repo")

    p = sub.add_parser("synth", help="write a seeded synthetic corpus and vocabulary")
    _common(p)
    p.add_argument("--out", required=True, type=Path, help="corpus JSONL")
    p.add_argument("--topics-out", required=True, type=Path)
    p.add_argument("--n-repos", type=int, default=500)
    p.add_argument("--n-topics", type=int, default=20)
    return parser


_CONFIG_FLAGS = ("seed", "min_stars", "min_support", "top_k", "mapping_mode", "min_text_freq", "min_name_freq",
                 "kind", "feature_mode", "sources", "max_features", "learning_rate", "max_iters", "l2", "tol",
                 "use_class_weights", "n_jobs", "n_values")


def run_config(args, base: Optional[dict] = None) -> RunConfig:
    """defaults < ``base`` (e.g. the dataset's stored config) < --config file < flags."""
    try:
        merged = dict(base or {})
        if getattr(args, "config", None) is not None:
            merged.update(json.loads(args.config.read_text(encoding="utf-8")))
        cfg = RunConfig.from_dict(merged)
        return cfg.merged(**{k: getattr(args, k, None) for k in _CONFIG_FLAGS})
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _load_dataset(path: Path) -> PreparedDataset:
    try:
        return PreparedDataset.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot load processed dataset {path}: {exc}") from None


def _dataset_config(path: Path) -> dict:
    cfg_path = path / "config.json"
    return json.loads(cfg_path.read_text(encoding="utf-8")) if cfg_path.is_file() else {}


def _load_bundle(path: Path):
    try:
        return load_model(path)
    except BundleError as exc:
        raise ModelError(str(exc)) from None


def cmd_prepare(args) -> int:
    cfg = run_config(args)
    try:
        records = read_corpus(args.input)
        vocab = load_vocabulary(args.topics)
        dataset = prepare(records, vocab, cfg)
    except (OSError, CorpusError, VocabularyError, ValueError) as exc:
        raise DataError(str(exc)) from None
    dataset.save(args.out)
    (args.out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    print(json.dumps(dataset.stats, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = run_config(args, _dataset_config(args.data))
    dataset = _load_dataset(args.data)
    try:
        bundle = train(dataset, cfg)
    except TrainingDiverged as exc:
        raise ModelError(str(exc)) from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    try:
        manifest = save_model(bundle, args.model_dir)
    except OSError as exc:
        raise ModelError(f"cannot write bundle: {exc}") from None
    print(manifest)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bundle = _load_bundle(args.model_dir)
    cfg = run_config(args, bundle.manifest.get("config"))
    dataset = _load_dataset(args.data)
    try:
        report = evaluate_bundle(bundle, dataset, cfg, rows=args.split, timing_samples=args.timing_samples)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(report.to_text() if args.text else report.dumps())
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = run_config(args, _dataset_config(args.data))
    dataset = _load_dataset(args.data)
    try:
        plan = plan_from_json(json.loads(args.plan.read_text(encoding="utf-8"))) if args.plan else default_plan()
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid ablation plan: {exc}") from None
    if args.n not in cfg.n_values or 1 not in cfg.n_values:
        cfg = cfg.merged(n_values=tuple(sorted(set(cfg.n_values) | {1, args.n})))
    try:
        rows = ablation(dataset, plan, cfg)
    except TrainingDiverged as exc:
        raise ModelError(str(exc)) from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    text = ablation_csv(rows, args.n)
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_predict(args) -> int:
    bundle = _load_bundle(args.model_dir)
    if not 1 <= args.n <= len(bundle.topics):
        raise UsageError(f"--n must lie in [1, {len(bundle.topics)}]")
    try:
        if args.repo_file:
            obj = json.loads(args.repo_file.read_text(encoding="utf-8"))
            if isinstance(obj, dict):
                obj.setdefault("stars", 0)  # star count is irrelevant for prediction
            record = RepoRecord.from_json(obj)
        else:
            record = fetch_repo(args.repo, token_from_env())
    except (OSError, ValueError, KeyError, TypeError, FetchError) as exc:
        raise DataError(f"cannot obtain repository: {exc}") from None
    for rec in bundle.recommend(record, args.n):
        print(f"{rec.topic}\t{rec.score:.6f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from repotopics.service import PredictService, github_fetcher, make_server

    token = token_from_env()  # read once at startup
    service = PredictService(fetcher=github_fetcher(token) if args.enable_fetch else None)
    try:
        server = make_server(service, args.listen)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except OSError as exc:
        raise DataError(f"cannot listen on {args.listen}: {exc}") from None
    import threading

    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()  # /healthz answers 503 until the bundle below is in place
    try:
        service.set_bundle(_load_bundle(args.model_dir))
        host, port = server.server_address[:2]
        logger.warning("serving model %s on http://%s:%d", service.bundle.version, host, port)
        thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


def cmd_synth(args) -> int:
    from repotopics.synthetic import make_corpus

    records, vocab = make_corpus(args.n_repos, args.n_topics, seed=42 if args.seed is None else args.seed)
    write_corpus(records, args.out)
    args.topics_out.write_text(json.dumps(vocab.to_json(), indent=2), encoding="utf-8")
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate, "ablate": cmd_ablate,
            "predict": cmd_predict, "serve": cmd_serve, "synth": cmd_synth}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"repotopics {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"repotopics {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"repotopics {args.command}: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
