"""HTTP client backend for an external encoder sidecar.

The sidecar exposes two endpoints:

* ``GET /health`` -> {"status", "fingerprint", "d", "d_t"}
* ``POST /encode`` with {"kind": "document"|"prefix", "tokens": [surfaces]}
  -> documents: {"d", "d_t", "start": m x (d/2), "end": m x (d/2),
  "fingerprint"}; prefixes: {"q": [d floats], "fingerprint"}

The sidecar owns the start/end projections, so the wire carries final halves
and span assembly in the engine is identical across backends. Values are
float32 on the wire. Appending a prefix token re-encodes the full prefix via
HTTP (the incremental contract holds on results, not cost). The engine's
fingerprint for a sidecar is the sha256 of its model fingerprint string.
"""

from __future__ import annotations

import hashlib
import json
import urllib.error
import urllib.request
from typing import Sequence

import numpy as np

from .corpus import Vocabulary
from .encoder import DocumentReps, EncoderBackend, EncoderError, PrefixState


class SidecarError(EncoderError):
    pass


class SidecarBackend(EncoderBackend):
    def __init__(self, url: str, vocab: Vocabulary, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.vocab = vocab
        self.timeout = timeout
        health = self._get("/health")
        if health.get("status") != "ok":
            raise SidecarError(f"sidecar not healthy: {health}")
        self.d = int(health["d"])
        self.d_t = int(health["d_t"])
        self.model_fingerprint = str(health["fingerprint"])
        self.vocab_size = len(vocab)
        if self.d % 2 != 0:
            raise SidecarError(f"sidecar reports odd dimension d={self.d}")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.model_fingerprint.encode("utf-8")).hexdigest()

    def _get(self, path: str) -> dict:
        try:
            with urllib.request.urlopen(self.url + path, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError) as exc:
            raise SidecarError(f"sidecar unreachable at {self.url}: {exc}") from exc

    def _encode(self, kind: str, surfaces: list[str]) -> dict:
        body = json.dumps({"kind": kind, "tokens": surfaces}).encode("utf-8")
        req = urllib.request.Request(
            self.url + "/encode", data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            raise SidecarError(f"sidecar /encode failed ({exc.code}): {detail}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise SidecarError(f"sidecar unreachable at {self.url}: {exc}") from exc

    def _surfaces(self, tokens: Sequence[int]) -> list[str]:
        return [self.vocab.surface(int(t)) for t in tokens]

    def encode_document(self, tokens: Sequence[int]) -> DocumentReps:
        if len(tokens) == 0:
            raise EncoderError("cannot encode an empty document")
        resp = self._encode("document", self._surfaces(tokens))
        start = np.asarray(resp["start"], dtype=np.float32)
        end = np.asarray(resp["end"], dtype=np.float32)
        if start.shape != (len(tokens), self.d // 2):
            raise SidecarError(f"sidecar returned start shape {start.shape}")
        return DocumentReps(start=start, end=end)

    def encode_prefix_init(self, tokens: Sequence[int]) -> PrefixState:
        if len(tokens) == 0:
            raise EncoderError("prefix must contain at least one token")
        resp = self._encode("prefix", self._surfaces(tokens))
        q = np.asarray(resp["q"], dtype=np.float32).astype(np.float64)
        if q.shape != (self.d,):
            raise SidecarError(f"sidecar returned q of shape {q.shape}")
        return PrefixState(tuple(int(t) for t in tokens), q, np.zeros(self.d))

    def encode_prefix_append(self, state: PrefixState, token: int) -> PrefixState:
        return self.encode_prefix_init(list(state.tokens) + [int(token)])

    def token_embedding(self, token: int) -> np.ndarray:
        reps = self.encode_document([token])
        return np.concatenate([reps.start[0], reps.end[0]]).astype(np.float64)

    def token_table(self) -> np.ndarray:
        rows = [self.token_embedding(t) for t in range(self.vocab_size)]
        return np.asarray(rows, dtype=np.float32)

    def retrieval_vector(self, state: PrefixState) -> np.ndarray:
        # same definition as the toy backend: start-projected mean, via the
        # document encoding of the prefix tokens
        reps = self.encode_document(list(state.tokens))
        return reps.start.astype(np.float64).mean(axis=0)
