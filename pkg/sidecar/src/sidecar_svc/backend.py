"""Deterministic stand-in for the fine-tuned checkpoints.

Tokens are hashed into a fixed feature space with a sign trick, and all three
heads (4-class section logits, binary context probability, embeddings) are
linear functions of those features with weights drawn once from a seeded
generator. Any real checkpoint can replace this class as long as it keeps the
same three methods and the handshake contract.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from typing import Any

import numpy as np

from .errors import ModelConfigError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

SECTION_COUNT = 4


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _bucket(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9).digest()
    index = int.from_bytes(digest[:8], "big") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return index, sign


class HashedLinearModel:
    def __init__(self, dim: int = 64, seed: int = 7, *,
                 context_gain: float = 4.0, context_bias: float = -2.0,
                 model_name: str | None = None):
        if not isinstance(dim, int) or dim <= 0:
            raise ModelConfigError(f"dim must be a positive integer, got {dim!r}")
        if not isinstance(seed, int):
            raise ModelConfigError(f"seed must be an integer, got {seed!r}")
        self.dim = dim
        self.model_name = model_name or f"hashed-linear-d{dim}-s{seed}"
        self.context_gain = float(context_gain)
        self.context_bias = float(context_bias)
        rng = np.random.default_rng(seed)
        self._section_weights = rng.standard_normal((SECTION_COUNT, dim))

    @classmethod
    def from_file(cls, path: str) -> "HashedLinearModel":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ModelConfigError(f"models file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelConfigError(f"cannot read models file {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ModelConfigError(f"models file must hold a JSON object: {path}")
        known = {"dim", "seed", "context_gain", "context_bias", "model_name"}
        unknown = set(raw) - known
        if unknown:
            raise ModelConfigError(
                f"unknown keys in {path}: " + ", ".join(sorted(unknown)))
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ModelConfigError(f"bad models file {path}: {exc}") from None

    def features(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in tokenize(text):
            index, sign = _bucket(token, self.dim)
            vec[index] += sign
        return self._unit(vec)

    @staticmethod
    def _unit(vec: np.ndarray) -> np.ndarray:
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec

    def section_logits(self, sentence: str, api: str = "") -> list[float]:
        vec = np.zeros(self.dim)
        for token in tokenize(sentence):
            index, sign = _bucket(token, self.dim)
            vec[index] += sign
        if api:
            # One dedicated bucket conditions the head on the API identity.
            index, sign = _bucket(f"api:{api}", self.dim)
            vec[index] += sign
        vec = self._unit(vec)
        return [float(v) for v in self._section_weights @ vec]

    def context_probability(self, left: str, right: str) -> float:
        affinity = float(np.dot(self.features(left), self.features(right)))
        return 1.0 / (1.0 + math.exp(-(self.context_gain * affinity
                                       + self.context_bias)))

    def embed(self, text: str) -> list[float]:
        return [float(v) for v in self.features(text)]

    def handshake(self) -> dict[str, Any]:
        return {"dim": self.dim, "model_name": self.model_name}
