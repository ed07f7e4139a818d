"""Frozen text-embedding tables, cosine similarity and random concepts.

The text encoder is external: vectors arrive precomputed in a JSONL file,
one ``{"key": "<text>", "vector": [...]}`` object per line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_DIM = 384
PROVENANCE = ("global", "instance", "random", "planted", "distractor")


class EmbeddingError(ValueError):
    pass


class ZeroVectorError(ValueError):
    """Cosine similarity is undefined for a zero vector."""


def _unit(vec: np.ndarray, where: str) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm == 0:
        raise EmbeddingError(f"{where}: vector is zero or non-finite")
    return vec / norm


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    entries: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, vec in self.entries.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise EmbeddingError(f"{key!r}: expected dim {self.dim}, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise EmbeddingError(f"{key!r}: non-finite values")
            arr = _unit(arr, repr(key))
            arr.setflags(write=False)
            clean[key] = arr
        object.__setattr__(self, "entries", clean)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.entries[key]
        except KeyError:
            raise KeyError(f"no embedding for {key!r}") from None

    def matrix(self, keys: Sequence[str]) -> np.ndarray:
        """Stacked unit vectors for ``keys`` (rows in order)."""
        if not keys:
            return np.zeros((0, self.dim))
        return np.stack([self[k] for k in keys])

    def merged(self, other: "EmbeddingTable | Mapping[str, np.ndarray]") -> "EmbeddingTable":
        """Union of two tables; a key present in both must carry the same direction."""
        items = other.entries if isinstance(other, EmbeddingTable) else other
        out = dict(self.entries)
        for k, v in items.items():
            v = _unit(np.asarray(v, dtype=np.float64), repr(k))
            if k in out and not np.allclose(out[k], v, atol=1e-12):
                raise EmbeddingError(f"conflicting vectors for {k!r}")
            out[k] = v
        return EmbeddingTable(self.dim, out)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in self.entries.items():
                fh.write(json.dumps({"key": k, "vector": v.tolist()}, ensure_ascii=False) + "\n")


def load_table(path: str | Path) -> EmbeddingTable:
    entries: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key, vec = row["key"], np.asarray(row["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EmbeddingError(f"row {lineno}: malformed ({exc})") from None
            if not isinstance(key, str):
                raise EmbeddingError(f"row {lineno}: key must be a string")
            if vec.ndim != 1:
                raise EmbeddingError(f"row {lineno} ({key!r}): vector must be flat")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise EmbeddingError(f"row {lineno} ({key!r}): dimension {vec.shape[0]} != {dim}")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"row {lineno} ({key!r}): non-finite values")
            if key in entries:
                raise EmbeddingError(f"row {lineno}: duplicate key {key!r}")
            try:
                entries[key] = _unit(vec, f"row {lineno} ({key!r})")
            except EmbeddingError:
                raise
    if dim is None:
        raise EmbeddingError(f"{path}: empty embedding table")
    return EmbeddingTable(dim, entries)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVectorError("cosine of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_matrix(A, B) -> np.ndarray:
    """Pairwise cosine between the rows of ``A`` and the rows of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVectorError("cosine of a zero vector")
    return np.clip((A / na) @ (B / nb).T, -1.0, 1.0)


@dataclass(frozen=True)
class ConceptSet:
    """Ordered, duplicate-free concept strings; position j is activation coordinate j."""

    concepts: tuple[str, ...] = ()
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        prov = tuple(self.provenance) or ("global",) * len(self.concepts)
        object.__setattr__(self, "provenance", prov)
        if len(prov) != len(self.concepts):
            raise ValueError("one provenance tag per concept")
        if len(set(self.concepts)) != len(self.concepts):
            raise ValueError("duplicate concepts")
        bad = set(prov) - set(PROVENANCE)
        if bad:
            raise ValueError(f"unknown provenance tags {sorted(bad)}")

    @classmethod
    def from_strings(cls, concepts: Iterable[str], tag: str = "global") -> "ConceptSet":
        """Deduplicate, keeping first occurrences."""
        seen = dict.fromkeys(concepts)
        return cls(tuple(seen), (tag,) * len(seen))

    def __len__(self) -> int:
        return len(self.concepts)

    def __iter__(self):
        return iter(self.concepts)

    def __getitem__(self, j: int) -> str:
        return self.concepts[j]

    def index(self, concept: str) -> int:
        return self.concepts.index(concept)

    def subset(self, indices: Iterable[int]) -> "ConceptSet":
        idx = [int(i) for i in indices]
        return ConceptSet(tuple(self.concepts[i] for i in idx), tuple(self.provenance[i] for i in idx))

    def union(self, other: "ConceptSet") -> "ConceptSet":
        mine = set(self.concepts)
        extra = [(c, p) for c, p in zip(other.concepts, other.provenance) if c not in mine]
        return ConceptSet(self.concepts + tuple(c for c, _ in extra), self.provenance + tuple(p for _, p in extra))

    def to_json(self) -> list[dict]:
        return [{"text": c, "provenance": p} for c, p in zip(self.concepts, self.provenance)]

    @classmethod
    def from_json(cls, rows: list) -> "ConceptSet":
        return cls(tuple(r["text"] for r in rows), tuple(r["provenance"] for r in rows))


def random_concepts(count: int, dim: int = DEFAULT_DIM, seed: int = 0) -> tuple[ConceptSet, EmbeddingTable]:
    """Semantics-free concepts "0", "1", ... with independent uniform unit vectors."""
    if count < 0:
        raise ValueError("count must be non-negative")
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((count, dim))
    names = tuple(str(i) for i in range(count))
    table = EmbeddingTable(dim, dict(zip(names, vecs)))
    return ConceptSet(names, ("random",) * count), table
