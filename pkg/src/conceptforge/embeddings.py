"""Term -> unit-norm vector store backing the semantic-similarity term.

File format: one header line ``{"dim": D, "normalized": true}`` followed by
JSONL records ``{"term": str, "vector": [D floats]}``. The loader always
re-normalizes; when the header claims ``normalized`` it additionally rejects
files whose raw norms stray from 1 by more than 1e-3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import EmbeddingFormatError, MissingEmbedding

NORM_CLAIM_TOL = 1e-3
UNIT_TOL = 1e-6


@dataclass
class EmbeddingStore:
    dim: int
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        if self.dim <= 0:
            raise EmbeddingFormatError(f"dim must be positive, got {self.dim}")
        for term, v in self.vectors.items():
            if v.shape != (self.dim,):
                raise EmbeddingFormatError(
                    f"vector for {term!r} has shape {v.shape}, want ({self.dim},)"
                )
            n = float(np.linalg.norm(v))
            if abs(n - 1.0) > UNIT_TOL:
                raise EmbeddingFormatError(f"vector for {term!r} has norm {n}, want 1")

    def __contains__(self, term: str) -> bool:
        return term in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, term: str) -> np.ndarray:
        try:
            return self.vectors[term]
        except KeyError:
            raise MissingEmbedding(f"no embedding for term {term!r}") from None

    def cosine(self, a: str, b: str) -> float:
        return float(np.dot(self.get(a), self.get(b)))

    def missing_terms(self, terms: Iterable[str]) -> list[str]:
        return sorted(t for t in set(terms) if t not in self.vectors)


def store_from_mapping(raw: Mapping[str, Iterable[float]]) -> EmbeddingStore:
    """Build a store from plain term->vector data, normalizing on the way in."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for term, vals in raw.items():
        v = np.asarray(list(vals), dtype=np.float64)
        if dim is None:
            dim = v.size
        if v.size != dim:
            raise EmbeddingFormatError(f"vector for {term!r} has dim {v.size}, want {dim}")
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise EmbeddingFormatError(f"vector for {term!r} is all-zero")
        vectors[term] = v / n
    if dim is None:
        raise EmbeddingFormatError("no vectors supplied")
    return EmbeddingStore(dim=int(dim), vectors=vectors)


def load_embeddings(source: IO[bytes] | bytes | str) -> EmbeddingStore:
    """Read the header+JSONL embedding format into a store."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read().decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise EmbeddingFormatError("empty embedding file")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise EmbeddingFormatError(f"bad header line: {e}") from e
    if not isinstance(header, dict) or "dim" not in header:
        raise EmbeddingFormatError("header must be an object with a 'dim' key")
    dim = header["dim"]
    if not isinstance(dim, int) or dim <= 0:
        raise EmbeddingFormatError(f"bad dim {dim!r}")
    claimed_normalized = bool(header.get("normalized", False))

    vectors: dict[str, np.ndarray] = {}
    for i, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise EmbeddingFormatError(f"line {i}: bad JSON: {e}") from e
        term = rec.get("term")
        vec = rec.get("vector")
        if not isinstance(term, str) or not isinstance(vec, list):
            raise EmbeddingFormatError(f"line {i}: want {{'term': str, 'vector': [...]}}")
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != (dim,):
            raise EmbeddingFormatError(f"line {i}: vector has dim {v.size}, want {dim}")
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise EmbeddingFormatError(f"line {i}: zero vector for {term!r}")
        if claimed_normalized and abs(n - 1.0) > NORM_CLAIM_TOL:
            raise EmbeddingFormatError(
                f"line {i}: header claims normalized but {term!r} has norm {n}"
            )
        vectors[term] = v / n
    return EmbeddingStore(dim=dim, vectors=vectors)


def load_embeddings_file(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        return load_embeddings(fh)


def save_embeddings(store: EmbeddingStore, path) -> None:
    """Write the header+JSONL format, records ordered by term."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": store.dim, "normalized": True}) + "\n")
        for term in sorted(store.vectors):
            vec = [float(x) for x in store.vectors[term]]
            fh.write(json.dumps({"term": term, "vector": vec}) + "\n")
