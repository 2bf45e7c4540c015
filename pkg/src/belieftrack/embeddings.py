"""Pre-trained word vectors with a deterministic out-of-vocabulary fallback.

The store is read-only after loading; vectors are never fine-tuned. Unknown
tokens map to pseudo-random vectors with components uniform in [-0.25, 0.25],
derived from a keyed hash of the token so that lookups are reproducible across
processes and runs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import EmbeddingError

OOV_RANGE = 0.25


@dataclass
class VectorStore:
    dimension: int
    table: dict[str, np.ndarray]
    oov_seed: int = 0
    _oov_cache: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise EmbeddingError("vector dimension must be positive")

    def _oov_vector(self, token: str) -> np.ndarray:
        cached = self._oov_cache.get(token)
        if cached is not None:
            return cached
        key = int(self.oov_seed).to_bytes(8, "little", signed=True)
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.uniform(-OOV_RANGE, OOV_RANGE, self.dimension)
        vec.flags.writeable = False
        self._oov_cache[token] = vec
        return vec

    def embed_token(self, token: str) -> np.ndarray:
        hit = self.table.get(token)
        if hit is not None:
            return hit
        return self._oov_vector(token)

    def embed_phrase(self, tokens: list[str] | tuple[str, ...]) -> np.ndarray:
        if not tokens:
            raise EmbeddingError("cannot embed an empty phrase")
        total = np.zeros(self.dimension)
        for token in tokens:
            total += self.embed_token(token)
        return total / len(tokens)


def empty_store(dimension: int, oov_seed: int = 0) -> VectorStore:
    """A store with no table; every token resolves through the OOV fallback."""
    return VectorStore(dimension=dimension, table={}, oov_seed=oov_seed)


def embed_token(store: VectorStore, token: str) -> np.ndarray:
    return store.embed_token(token)


def embed_phrase(store: VectorStore, tokens) -> np.ndarray:
    return store.embed_phrase(tokens)


def load_vectors(source, expected_dim: int | None = None, oov_seed: int = 0) -> VectorStore:
    """Parse the one-entry-per-line text format: ``token c1 c2 ... cd``.

    The dimension is inferred from the first line unless ``expected_dim`` is
    given; rows with a different component count are rejected with their line
    number.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")

    table: dict[str, np.ndarray] = {}
    dim = expected_dim
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        token, components = parts[0], parts[1:]
        if not token:
            raise EmbeddingError(f"line {lineno}: missing token")
        if dim is None:
            dim = len(components)
            if dim == 0:
                raise EmbeddingError(f"line {lineno}: no vector components")
        if len(components) != dim:
            raise EmbeddingError(
                f"line {lineno}: expected {dim} components, got {len(components)}"
            )
        try:
            vec = np.array([float(c) for c in components])
        except ValueError as exc:
            raise EmbeddingError(f"line {lineno}: non-numeric component: {exc}") from None
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"line {lineno}: non-finite component")
        vec.flags.writeable = False
        table[token] = vec

    if dim is None or not table:
        raise EmbeddingError("vector file contains no entries")
    return VectorStore(dimension=dim, table=table, oov_seed=oov_seed)
