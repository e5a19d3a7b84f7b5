"""Word-vector loading and per-class semantic inputs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ginet.numerics import hash_seed, seeded_init

log = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class Vocabulary:
    dim: int
    vectors: dict = field(default_factory=dict)

    def __contains__(self, token):
        return token in self.vectors

    def __getitem__(self, token):
        return self.vectors[token]

    def __len__(self):
        return len(self.vectors)


@dataclass
class ClassVocabulary:
    names: list
    matrix: np.ndarray  # (M, K)


def load_word_vectors(path, dim: int) -> Vocabulary:
    """Read a GloVe-style text file (``token v1 ... vK`` per line).

    Blank lines are skipped. A repeated token keeps its last vector.
    """
    vocab = Vocabulary(dim)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} values for {token!r}, got {len(values)}")
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            if token in vocab.vectors:
                log.warning("%s:%d: duplicate token %r, keeping the later vector", path, lineno, token)
            vocab.vectors[token] = vec
    return vocab


def fallback_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic stand-in for an out-of-vocabulary token."""
    return seeded_init((dim,), "fan_in_uniform", seed=hash_seed("oov", token),
                       fan_in=dim, dtype=np.float64)


def embed_class(name: str, vocab: Vocabulary | None, dim: int | None = None) -> np.ndarray:
    """Vector for a class name; multi-word names average their tokens.

    Tokens missing from ``vocab`` (or every token, when ``vocab`` is None)
    use a hash-seeded fallback vector, so distinct unknown names still get
    distinct rows.
    """
    if not name or not name.strip():
        raise ConfigError("class name must be nonempty")
    dim = vocab.dim if vocab is not None else dim
    if dim is None:
        raise ConfigError("embedding dimension unknown without a vocabulary")
    vecs = [vocab[t] if vocab is not None and t in vocab else fallback_vector(t, dim)
            for t in name.split()]
    return vecs[0].copy() if len(vecs) == 1 else np.mean(vecs, axis=0)


def build_semantic_inputs(classes, vocab: Vocabulary | None, dim: int | None = None) -> ClassVocabulary:
    classes = list(classes)
    if len(classes) < 2:
        raise ConfigError("need at least two classes")
    seen = set()
    for c in classes:
        if c in seen:
            raise ConfigError(f"duplicate class name {c!r}")
        seen.add(c)
    rows = [embed_class(c, vocab, dim) for c in classes]
    return ClassVocabulary(classes, np.stack(rows))
