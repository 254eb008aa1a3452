"""JSON-over-HTTP topic recommendation service.

Request handling is a pure function of (bundle, request); the HTTP layer is a
stdlib ThreadingHTTPServer. The bundle is set once and never mutated, so
concurrent requests need no locking.
"""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlsplit

from repotopics.bundle import ModelBundle
from repotopics.corpus import (
    CorpusError,
    FetchError,
    RepoNotFound,
    RepoRecord,
    fetch_repo,
)

logger = logging.getLogger(__name__)

DEFAULT_N = 5
MAX_BODY = 8 * 1024 * 1024
_TEXT_FIELDS = ("name", "description", "readme", "wiki")


class RequestError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status, self.code, self.message = status, code, message

    def body(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


def encode(payload: dict) -> bytes:
    """Canonical JSON bytes: sorted keys, no whitespace, floats at full precision."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def parse_n(raw, n_topics: int) -> int:
    if raw is None:
        return min(DEFAULT_N, n_topics)
    if isinstance(raw, str):
        try:
            raw = int(raw)
        except ValueError:
            raise RequestError(400, "bad_n", f"n must be an integer, got {raw!r}") from None
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise RequestError(400, "bad_n", "n must be an integer")
    if not 1 <= raw <= n_topics:
        raise RequestError(400, "bad_n", f"n must lie in [1, {n_topics}]")
    return raw


def record_from_request(payload) -> RepoRecord:
    """Validate a PredictRequest object and turn it into a RepoRecord."""
    if not isinstance(payload, dict):
        raise RequestError(400, "bad_json", "request body must be a JSON object")
    for key in _TEXT_FIELDS:
        if payload.get(key) is not None and not isinstance(payload[key], str):
            raise RequestError(400, "bad_json", f"{key} must be a string")
    files = payload.get("file_names")
    if files is None:
        files = []
    if not isinstance(files, list) or not all(isinstance(f, str) for f in files):
        raise RequestError(400, "bad_json", "file_names must be a list of strings")
    if not any((payload.get(k) or "").strip() for k in _TEXT_FIELDS) and not any(f.strip() for f in files):
        raise RequestError(400, "empty_input", "at least one of name, description, readme, wiki, "
                                               "file_names must be non-empty")
    name = (payload.get("name") or "").strip() or "_"
    full_name = name if name.count("/") == 1 and all(name.split("/")) else f"_/{name.replace('/', '_')}"
    return RepoRecord(full_name=full_name, description=payload.get("description"), readme=payload.get("readme"),
                      wiki=payload.get("wiki"), file_paths=files)


class PredictService:
    """Routes requests to the loaded bundle.

    ``fetcher`` resolves a full repository name to a RepoRecord; ``None``
    disables the predict-repo endpoint (501).
    """

    def __init__(self, bundle: Optional[ModelBundle] = None,
                 fetcher: Optional[Callable[[str], RepoRecord]] = None):
        self._bundle = bundle
        self.fetcher = fetcher

    @property
    def bundle(self) -> Optional[ModelBundle]:
        return self._bundle

    def set_bundle(self, bundle: ModelBundle) -> None:
        if self._bundle is not None:
            raise RuntimeError("the model bundle is loaded once and cannot be replaced")
        self._bundle = bundle

    def _require_bundle(self) -> ModelBundle:
        if self._bundle is None:
            raise RequestError(503, "not_ready", "model is still loading")
        return self._bundle

    def _respond(self, bundle: ModelBundle, record: RepoRecord, n: int) -> dict:
        recs = bundle.recommend(record, n)
        return {"model_version": bundle.version,
                "recommendations": [{"topic": r.topic, "score": r.score} for r in recs]}

    def predict(self, body: bytes) -> dict:
        bundle = self._require_bundle()
        try:
            payload = json.loads(body.decode("utf-8")) if body else {}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise RequestError(400, "bad_json", f"malformed JSON: {exc}") from None
        record = record_from_request(payload)
        n = parse_n(payload.get("n"), len(bundle.topics))
        return self._respond(bundle, record, n)

    def predict_repo(self, query: dict) -> dict:
        bundle = self._require_bundle()
        if self.fetcher is None:
            raise RequestError(501, "fetch_disabled", "remote repository fetch is disabled")
        full_name = (query.get("full_name") or [""])[0]
        n = parse_n((query.get("n") or [None])[0], len(bundle.topics))
        try:
            record = self.fetcher(full_name)
        except CorpusError as exc:
            raise RequestError(400, "bad_request", str(exc)) from None
        except RepoNotFound:
            raise RequestError(404, "not_found", f"repository {full_name} not found") from None
        except FetchError as exc:
            raise RequestError(502, "upstream", str(exc)) from None
        return self._respond(bundle, record, n)

    def health(self) -> dict:
        bundle = self._require_bundle()
        return {"status": "ok", "model_version": bundle.version}

    def handle(self, method: str, target: str, body: bytes = b"") -> tuple[int, dict]:
        """Dispatch one request; returns (status, JSON-able body)."""
        parts = urlsplit(target)
        routes = {
            "/api/v1/predict": ("POST", lambda: self.predict(body)),
            "/api/v1/predict-repo": ("GET", lambda: self.predict_repo(parse_qs(parts.query))),
            "/healthz": ("GET", self.health),
        }
        try:
            if parts.path not in routes:
                raise RequestError(404, "not_found", f"no route {parts.path}")
            allowed, action = routes[parts.path]
            if method != allowed:
                raise RequestError(405, "method_not_allowed", f"{parts.path} accepts {allowed}")
            return 200, action()
        except RequestError as exc:
            if exc.status == 503:
                return 503, {"status": "loading"} if parts.path == "/healthz" else exc.body()
            return exc.status, exc.body()
        except Exception:  # pragma: no cover - defensive: never leak a traceback to the client
            logger.exception("unhandled error for %s %s", method, target)
            return 500, {"error": {"code": "internal", "message": "internal error"}}


def github_fetcher(token: Optional[str], base_url: Optional[str] = None) -> Callable[[str], RepoRecord]:
    kwargs = {"base_url": base_url} if base_url else {}
    return lambda full_name: fetch_repo(full_name, token, **kwargs)


def _handler_class(service: PredictService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "repotopics"

        def _send(self, status: int, payload: dict) -> None:
            data = encode(payload)
            self.send_response(status, HTTPStatus(status).phrase)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            self._send(*service.handle("GET", self.path))

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self._send(413, {"error": {"code": "too_large", "message": "request body too large"}})
                self.close_connection = True
                return
            self._send(*service.handle("POST", self.path, self.rfile.read(length)))

        def log_message(self, fmt, *args):
            logger.info("%s %s", self.address_string(), fmt % args)

    return Handler


def parse_listen(listen: str) -> tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ValueError(f"--listen must look like host:port, got {listen!r}")
    return host or "127.0.0.1", int(port)


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128  # the socketserver default of 5 resets bursts of concurrent clients


def make_server(service: PredictService, listen: str = "127.0.0.1:8080") -> ThreadingHTTPServer:
    return _Server(parse_listen(listen), _handler_class(service))


def start_background(service: PredictService, listen: str = "127.0.0.1:0") -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Serve on a daemon thread; returns the server (``server_address`` holds the bound port)."""
    server = make_server(service, listen)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
