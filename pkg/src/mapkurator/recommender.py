"""Semantic type recommendation for as-you-type queries.

Types are embedded as hashed bags of character n-grams (3..6 characters, with
``<`` and ``>`` word-boundary markers). A query first matches types whose
label starts with it; remaining slots are filled by cosine similarity.
"""
from __future__ import annotations

import json
import logging
import re
import threading
import zlib
from dataclasses import dataclass
from functools import lru_cache
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InputError

log = logging.getLogger(__name__)

DEFAULT_DIM = 256
DEFAULT_NGRAMS = (3, 6)
DEFAULT_K = 10
_NON_ALNUM = re.compile(r"[^a-z0-9]")


class EmptyQuery(InputError):
    """The query has no letters or digits left after normalization."""


@dataclass(frozen=True)
class SemanticType:
    label: str
    uri: str
    embedding: np.ndarray


@dataclass(frozen=True)
class Recommendation:
    label: str
    uri: str
    score: float
    reason: str  # "prefix" or "embedding"

    def to_json(self) -> dict:
        return {"label": self.label, "uri": self.uri, "score": round(self.score, 6), "reason": self.reason}


def normalize_query(text: str) -> str:
    return _NON_ALNUM.sub("", text.lower())


def char_ngrams(text: str, n_range=DEFAULT_NGRAMS) -> list[str]:
    word = f"<{normalize_query(text)}>"
    lo, hi = n_range
    return [word[i:i + n] for n in range(lo, hi + 1) for i in range(len(word) - n + 1)]


@lru_cache(maxsize=65536)
def _bucket(gram: str, dim: int) -> int:
    return zlib.crc32(gram.encode("utf-8")) % dim


def embed(text: str, dim: int = DEFAULT_DIM, n_range=DEFAULT_NGRAMS) -> np.ndarray:
    """Unit-length hashed n-gram vector of ``text``."""
    if dim < 1:
        raise InputError("embedding dimension must be positive")
    if not normalize_query(text):
        raise EmptyQuery(f"query {text!r} is empty after normalization")
    grams = char_ngrams(text, n_range)
    vec = np.zeros(dim)
    for g in grams:
        vec[_bucket(g, dim)] += 1.0
    vec /= len(grams)
    return vec / np.linalg.norm(vec)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


def bundled_types_path() -> Path:
    return Path(str(resources.files("mapkurator") / "data" / "schema_types.jsonl"))


def load_types(path=None) -> list[tuple[str, str]]:
    """Read ``{"label", "uri"}`` lines; defaults to the bundled Schema.org list."""
    path = bundled_types_path() if path is None else Path(path)
    out = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                label, uri = rec["label"], rec["uri"]
            except (ValueError, KeyError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: bad type record ({exc})") from exc
            if label in seen:
                raise InputError(f"{path}:{lineno}: duplicate type label {label!r}")
            seen.add(label)
            out.append((label, uri))
    return out


class TypeIndex:
    """Immutable embedding matrix over a list of semantic types."""

    def __init__(self, types, dim: int = DEFAULT_DIM, n_range=DEFAULT_NGRAMS):
        self.dim = dim
        self.n_range = tuple(n_range)
        pairs = [(t.label, t.uri) if isinstance(t, SemanticType) else tuple(t) for t in types]
        labels = [p[0] for p in pairs]
        if len(set(labels)) != len(labels):
            raise InputError("semantic type labels must be unique")
        matrix = np.array([embed(lab, dim, n_range) for lab in labels]).reshape(len(labels), dim)
        matrix.flags.writeable = False
        self.matrix = matrix
        self.types = tuple(SemanticType(lab, uri, matrix[i]) for i, (lab, uri) in enumerate(pairs))
        self._lower = tuple(lab.lower() for lab in labels)

    def __len__(self):
        return len(self.types)

    def recommend(self, query: str, k: int = DEFAULT_K) -> list[Recommendation]:
        if k < 1:
            raise InputError("k must be positive")
        q = query.strip().lower()
        if not q:
            return []
        prefix_idx = sorted((i for i, lab in enumerate(self._lower) if lab.startswith(q)),
                            key=lambda i: (self._lower[i], self.types[i].label))
        out = [Recommendation(self.types[i].label, self.types[i].uri, 1.0, "prefix") for i in prefix_idx[:k]]
        if len(out) >= k:
            return out
        try:
            qvec = embed(query, self.dim, self.n_range)
        except EmptyQuery:
            return out
        sims = np.clip(self.matrix @ qvec, 0.0, 1.0)
        taken = set(prefix_idx)
        rest = sorted((i for i in range(len(self.types)) if i not in taken),
                      key=lambda i: (-float(sims[i]), self.types[i].label))
        for i in rest[:k - len(out)]:
            out.append(Recommendation(self.types[i].label, self.types[i].uri, float(sims[i]), "embedding"))
        return out


def recommend(query: str, k: int, index: TypeIndex) -> list[Recommendation]:
    return index.recommend(query, k)


class TypeRecommender(BaseEstimator):
    """``fit`` embeds a type list; ``predict`` returns recommendations per query."""

    def __init__(self, dim: int = DEFAULT_DIM, k: int = DEFAULT_K, min_n: int = 3, max_n: int = 6):
        self.dim = dim
        self.k = k
        self.min_n = min_n
        self.max_n = max_n

    def fit(self, X=None, y=None):
        types = load_types() if X is None else X
        self.index_ = TypeIndex(types, dim=self.dim, n_range=(self.min_n, self.max_n))
        return self

    def predict(self, X) -> list[list[Recommendation]]:
        check_is_fitted(self, "index_")
        return [self.index_.recommend(q, self.k) for q in X]


def _make_handler(index: TypeIndex, max_k: int):
    class Handler(BaseHTTPRequestHandler):
        server_version = "mapkurator-types/1"

        def _send(self, status, body: bytes, ctype: str):
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json(self, status, obj):
            self._send(status, json.dumps(obj).encode("utf-8"), "application/json")

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/healthz":
                self._send(HTTPStatus.OK, b"ok", "text/plain; charset=utf-8")
                return
            if url.path != "/recommend":
                self._json(HTTPStatus.NOT_FOUND, {"error": f"no route {url.path}"})
                return
            params = parse_qs(url.query, keep_blank_values=True)
            if "q" not in params:
                self._json(HTTPStatus.BAD_REQUEST, {"error": "missing query parameter 'q'"})
                return
            try:
                k = int(params.get("k", [DEFAULT_K])[0])
                if not 1 <= k <= max_k:
                    raise ValueError
            except ValueError:
                self._json(HTTPStatus.BAD_REQUEST, {"error": f"'k' must be an integer in [1, {max_k}]"})
                return
            recs = index.recommend(params["q"][0], k)
            self._json(HTTPStatus.OK, [r.to_json() for r in recs])

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

    return Handler


def make_server(index: TypeIndex, host: str = "127.0.0.1", port: int = 8080,
                max_k: int = 1000) -> ThreadingHTTPServer:
    """HTTP server exposing ``GET /recommend`` and ``GET /healthz``; port 0 picks a free one."""
    server = ThreadingHTTPServer((host, port), _make_handler(index, max_k))
    server.daemon_threads = True
    return server


def serve_in_thread(index: TypeIndex, host: str = "127.0.0.1", port: int = 0):
    server = make_server(index, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
