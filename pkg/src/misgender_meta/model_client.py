"""Scoring and sampling interface to language models.

Two backends share one surface (``score``, ``generate``,
``next_token_distribution``): a deterministic n-gram ``MockModel`` defined by
a JSON spec, and ``RemoteModel`` which speaks a small JSON-over-HTTP protocol::

    POST /v1/score     {model, text}  -> {tokens: [{text, logprob | null}]}
    POST /v1/generate  {model, prompt, top_k, top_p, max_tokens, n,
                        temperature, seed} -> {completions: [{text}]}
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .corpus import DecodeParams, GenerationRecord
from .text import tokenize

__all__ = [
    "CapabilityError", "DecodeParams", "MockModel", "MockModelSpec", "Model",
    "RemoteModel", "ScoreResult", "TransportError", "derive_seed",
    "filter_distribution", "perplexity", "serve_mock",
]

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    def __init__(self, message: str, endpoint: str = "", attempts: int = 0, retryable: bool = True):
        super().__init__(f"{message} (endpoint={endpoint!r}, attempts={attempts})")
        self.endpoint = endpoint
        self.attempts = attempts
        self.retryable = retryable


class CapabilityError(RuntimeError):
    """The backend cannot provide what was asked (logprob echo, full distributions)."""


@dataclass(frozen=True)
class ScoreResult:
    tokens: tuple[str, ...]
    logprobs: tuple[float | None, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.logprobs):
            raise ValueError("tokens and logprobs differ in length")
        if any(lp is not None and lp > 0 for lp in self.logprobs):
            raise ValueError("log-probabilities must be <= 0")

    @property
    def total_logprob(self) -> float:
        return math.fsum(lp for lp in self.logprobs if lp is not None)

    @property
    def token_count(self) -> int:
        return sum(lp is not None for lp in self.logprobs)


def perplexity(score: ScoreResult) -> float:
    if score.token_count == 0:
        raise ValueError("perplexity is undefined with no scored positions")
    return math.exp(-score.total_logprob / score.token_count)


def derive_seed(seed: int, prompt: str, index: int) -> int:
    """Per-sample seed, independent of call order and concurrency."""
    digest = hashlib.sha256(f"{seed}\x1f{prompt}\x1f{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def filter_distribution(probs: np.ndarray, top_k: int = 0, top_p: float = 1.0, temperature: float = 1.0) -> np.ndarray:
    """Temperature, then top-k, then nucleus filtering; returns a renormalized copy.

    ``top_k=0`` and ``top_p=1.0`` disable the respective filters.
    """
    p = np.asarray(probs, dtype=float)
    if temperature != 1.0:
        with np.errstate(divide="ignore"):
            logits = np.log(p) / temperature
        logits -= logits.max()
        p = np.exp(logits)
        p /= p.sum()
    order = np.argsort(-p, kind="stable")
    keep = np.zeros(len(p), dtype=bool)
    ranked = order[: top_k] if top_k else order
    if top_p < 1.0:
        cum = np.cumsum(p[ranked]) / p[ranked].sum()
        cut = int(np.searchsorted(cum, top_p - 1e-12)) + 1
        ranked = ranked[:cut]
    keep[ranked] = True
    out = np.where(keep, p, 0.0)
    return out / out.sum()


class Model(Protocol):
    model_id: str

    def score(self, text: str) -> ScoreResult: ...

    def generate(self, prompt: str, params: DecodeParams, context_id: str = "") -> list[GenerationRecord]: ...

    def next_token_distribution(self, prefix: str) -> dict[str, float]: ...


# ------------------------------------------------------------------- mock


@dataclass(frozen=True)
class MockModelSpec:
    vocabulary: tuple[str, ...]
    order: int = 2
    conditionals: Mapping[tuple[str, ...], np.ndarray] = field(default_factory=dict)
    unk: str | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError("vocabulary has duplicates")
        for ctx, vec in self.conditionals.items():
            if len(ctx) > self.order - 1:
                raise ValueError(f"context {ctx} longer than order-1 = {self.order - 1}")
            if vec.shape != (len(self.vocabulary),):
                raise ValueError(f"context {ctx}: vector length {vec.shape} != vocabulary size")
            if (vec < 0).any() or abs(vec.sum() - 1.0) > 1e-9:
                raise ValueError(f"context {ctx}: probabilities must be >= 0 and sum to 1")

    @classmethod
    def from_dict(cls, data: Mapping) -> "MockModelSpec":
        vocab = tuple(data["vocabulary"])
        index = {w: i for i, w in enumerate(vocab)}
        conditionals = {}
        for entry in data.get("conditionals", []):
            ctx = tuple(w.lower() for w in entry["context"])
            probs = entry["probs"]
            vec = np.zeros(len(vocab))
            if isinstance(probs, Mapping):
                for w, p in probs.items():
                    if w not in index:
                        raise ValueError(f"context {ctx}: {w!r} is not in the vocabulary")
                    vec[index[w]] = p
            else:
                vec[:] = probs
            conditionals[ctx] = vec
        return cls(vocab, int(data.get("order", 2)), conditionals, data.get("unk"))

    def to_dict(self) -> dict:
        return {
            "vocabulary": list(self.vocabulary),
            "order": self.order,
            "unk": self.unk,
            "conditionals": [
                {"context": list(ctx), "probs": {w: float(p) for w, p in zip(self.vocabulary, vec) if p > 0}}
                for ctx, vec in self.conditionals.items()
            ],
        }

    @classmethod
    def load(cls, path: str | Path) -> "MockModelSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def mock_tokens(text: str) -> list[str]:
    return [t.lower for t in tokenize(text)]


def join_tokens(tokens: Sequence[str]) -> str:
    out = ""
    for tok in tokens:
        if out and tok[:1].isalnum():
            out += " "
        out += tok
    return out


class MockModel:
    """Word-level n-gram model with longest-suffix lookup and uniform fallback."""

    def __init__(self, spec: MockModelSpec, model_id: str = "mock"):
        self.spec = spec
        self.model_id = model_id
        self.index = {w: i for i, w in enumerate(spec.vocabulary)}
        self._uniform = np.full(len(spec.vocabulary), 1.0 / len(spec.vocabulary))

    @classmethod
    def load(cls, path: str | Path, model_id: str | None = None) -> "MockModel":
        return cls(MockModelSpec.load(path), model_id or f"mock:{Path(path).stem}")

    def _vector(self, history: Sequence[str], diagnostics: list | None = None) -> np.ndarray:
        n = self.spec.order - 1
        ctx = tuple(history[-n:]) if n else ()
        unknown = [w for w in ctx if w not in self.index]
        if unknown and diagnostics is not None:
            diagnostics.append(f"unknown tokens in prefix: {unknown}")
        for start in range(len(ctx) + 1):
            vec = self.spec.conditionals.get(ctx[start:])
            if vec is not None:
                return vec
        return self._uniform

    def _token_id(self, token: str) -> int:
        if token in self.index:
            return self.index[token]
        if self.spec.unk is not None:
            return self.index[self.spec.unk]
        raise ValueError(f"token {token!r} is not in the mock vocabulary")

    def next_token_distribution(self, prefix: str, diagnostics: list | None = None) -> dict[str, float]:
        vec = self._vector(mock_tokens(prefix), diagnostics)
        return dict(zip(self.spec.vocabulary, vec.tolist()))

    def conditional_logprob(self, history: Sequence[str], continuation: Sequence[str]) -> float:
        """log Pr(continuation | history), summed token by token."""
        total = 0.0
        hist = list(history)
        for tok in continuation:
            p = self._vector(hist)[self._token_id(tok)]
            if p <= 0:
                return -math.inf
            total += math.log(p)
            hist.append(tok)
        return total

    def score(self, text: str) -> ScoreResult:
        if not text or not text.strip():
            raise ValueError("cannot score empty text")
        toks = mock_tokens(text)
        logprobs = []
        for i, tok in enumerate(toks):
            p = self._vector(toks[:i])[self._token_id(tok)]
            logprobs.append(math.log(p) if p > 0 else -math.inf)
        return ScoreResult(tuple(toks), tuple(logprobs))

    def sample_completion(self, prompt: str, params: DecodeParams, seed: int) -> str:
        rng = np.random.default_rng(seed)
        history = mock_tokens(prompt)
        out: list[str] = []
        for _ in range(params.max_tokens):
            vec = filter_distribution(self._vector(history), params.top_k, params.top_p, params.temperature)
            tok = self.spec.vocabulary[int(rng.choice(len(vec), p=vec))]
            out.append(tok)
            history.append(tok)
        return join_tokens(out)

    def generate(self, prompt: str, params: DecodeParams, context_id: str = "") -> list[GenerationRecord]:
        records = []
        for i in range(params.num_samples):
            seed = derive_seed(params.seed, prompt, i)
            text = self.sample_completion(prompt, params, seed)
            records.append(GenerationRecord(context_id, i, text, self.model_id, params, seed))
        return records


# ----------------------------------------------------------------- remote


class RemoteModel:
    """Client for the JSON scoring/sampling protocol. Safe to share across threads."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout_ms: int = 30000,
        retries: int = 2,
        max_in_flight: int = 8,
        backoff_s: float = 0.2,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model
        self.retries = retries
        self.backoff_s = backoff_s
        self._client = httpx.Client(timeout=timeout_ms / 1000.0)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteModel":
        try:
            endpoint = os.environ["MM_ENDPOINT"]
        except KeyError:
            raise TransportError("MM_ENDPOINT is not set") from None
        return cls(
            endpoint,
            os.environ.get("MM_MODEL", "default"),
            int(os.environ.get("MM_TIMEOUT_MS", "30000")),
            **kwargs,
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        url = self.endpoint + path
        last = None
        for attempt in range(1, self.retries + 2):
            try:
                with self._slots:
                    resp = self._client.post(url, json=payload)
                if resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", url, attempt, retryable=False)
                else:
                    return resp.json()
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
            if attempt <= self.retries:
                time.sleep(self.backoff_s * attempt)
        raise TransportError(f"request failed: {last}", url, self.retries + 1)

    def score(self, text: str) -> ScoreResult:
        if not text or not text.strip():
            raise ValueError("cannot score empty text")
        data = self._post("/v1/score", {"model": self.model_id, "text": text})
        toks = data.get("tokens") or []
        logprobs = tuple(t.get("logprob") for t in toks)
        if toks and all(lp is None for lp in logprobs):
            raise CapabilityError(f"backend {self.endpoint} does not echo log-probabilities")
        return ScoreResult(tuple(t["text"] for t in toks), logprobs)

    def generate(self, prompt: str, params: DecodeParams, context_id: str = "") -> list[GenerationRecord]:
        records = []
        for i in range(params.num_samples):
            seed = derive_seed(params.seed, prompt, i)
            data = self._post(
                "/v1/generate",
                {
                    "model": self.model_id,
                    "prompt": prompt,
                    "top_k": params.top_k,
                    "top_p": params.top_p,
                    "max_tokens": params.max_tokens,
                    "n": 1,
                    "temperature": params.temperature,
                    "seed": seed,
                },
            )
            text = data["completions"][0]["text"]
            records.append(GenerationRecord(context_id, i, text, self.model_id, params, seed))
        return records

    def next_token_distribution(self, prefix: str) -> dict[str, float]:
        raise CapabilityError("remote backends do not expose full next-token distributions")


# --------------------------------------------------------------- mock server


def _handler_for(model: MockModel, first_token_logprob: bool):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, format, *args):
            log.debug("mock server: " + format, *args)

        def _reply(self, status: int, body: dict):
            raw = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def do_POST(self):
            try:
                length = int(self.headers.get("Content-Length", 0))
                req = json.loads(self.rfile.read(length) or b"{}")
                if self.path == "/v1/score":
                    res = model.score(req["text"])
                    lps = list(res.logprobs)
                    if not first_token_logprob and lps:
                        lps[0] = None
                    body = {"tokens": [{"text": t, "logprob": lp} for t, lp in zip(res.tokens, lps)]}
                elif self.path == "/v1/generate":
                    params = DecodeParams(
                        top_k=req.get("top_k", 50),
                        top_p=req.get("top_p", 0.95),
                        max_tokens=req.get("max_tokens", 50),
                        temperature=req.get("temperature", 1.0),
                    )
                    seed = int(req.get("seed", 0))
                    body = {
                        "completions": [
                            {"text": model.sample_completion(req["prompt"], params, seed + j)}
                            for j in range(int(req.get("n", 1)))
                        ]
                    }
                else:
                    return self._reply(404, {"error": f"unknown path {self.path}"})
            except (KeyError, ValueError) as exc:
                return self._reply(400, {"error": str(exc)})
            self._reply(200, body)

    return Handler


def serve_mock(model: MockModel, host: str = "127.0.0.1", port: int = 0, first_token_logprob: bool = False) -> ThreadingHTTPServer:
    """Start a protocol server over ``model`` in a daemon thread; returns the server."""
    server = ThreadingHTTPServer((host, port), _handler_for(model, first_token_logprob))
    server.daemon_threads = True
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
