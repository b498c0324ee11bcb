"""Demonstration memory: annotated examples retrieved by question similarity."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import CorruptStore, DimensionMismatch, DuplicateId
from .llm import cosine_scores

TASKS = ("db", "table", "kg")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MemoryEntry:
    entry_id: str
    question: str
    schema_text: str
    rationale: str
    code: str
    task_tag: str
    embedding: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        if not self.code.strip():
            raise ValueError(f"entry {self.entry_id!r}: code must be non-empty")
        if self.task_tag not in TASKS:
            raise ValueError(f"entry {self.entry_id!r}: unknown task tag {self.task_tag!r}")

    def to_json(self) -> dict:
        return {
            "id": self.entry_id,
            "task": self.task_tag,
            "question": self.question,
            "schema": self.schema_text,
            "reasoning": self.rationale,
            "code": self.code,
            "embedding": list(self.embedding),
        }

    @classmethod
    def from_json(cls, d: dict) -> "MemoryEntry":
        return cls(
            entry_id=d["id"],
            question=d["question"],
            schema_text=d["schema"],
            rationale=d["reasoning"],
            code=d["code"],
            task_tag=d["task"],
            embedding=tuple(d["embedding"]),
        )


@dataclass
class MemoryStore:
    embedding_dim: int
    embedder_id: str = ""
    entries: list[MemoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        entries, self.entries, self._ids = list(self.entries), [], set()
        for e in entries:
            self.add(e)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, entry: MemoryEntry) -> "MemoryStore":
        if len(entry.embedding) != self.embedding_dim:
            raise DimensionMismatch(
                f"entry {entry.entry_id!r} has dimension {len(entry.embedding)}, store expects {self.embedding_dim}"
            )
        if entry.entry_id in self._ids:
            raise DuplicateId(entry.entry_id)
        self.entries.append(entry)
        self._ids.add(entry.entry_id)
        return self

    def get(self, entry_id: str) -> MemoryEntry:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise KeyError(entry_id)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._ids

    def copy(self) -> "MemoryStore":
        return MemoryStore(self.embedding_dim, self.embedder_id, list(self.entries))

    def matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, self.embedding_dim))
        return np.array([e.embedding for e in self.entries], dtype=float)


def add_entry(store: MemoryStore, entry: MemoryEntry) -> MemoryStore:
    return store.add(entry)


def top_k(store: MemoryStore, query: Sequence[float], k: int, candidates: Optional[list[int]] = None) -> list[MemoryEntry]:
    """The ``k`` most similar entries; equal scores keep insertion order."""
    if k <= 0 or not store.entries:
        return []
    if len(query) != store.embedding_dim:
        raise DimensionMismatch(f"query has dimension {len(query)}, store expects {store.embedding_dim}")
    idx = np.arange(len(store.entries)) if candidates is None else np.asarray(candidates, dtype=int)
    if len(idx) == 0:
        return []
    scores = cosine_scores(store.matrix()[idx], query)
    order = np.lexsort((idx, -scores))[:k]
    return [store.entries[int(idx[i])] for i in order]


def retrieve(
    store: MemoryStore,
    question: str,
    k: int,
    embedder=None,
    *,
    task_tag: Optional[str] = None,
    same_task_only: bool = False,
    random_mode: bool = False,
    rng: Optional[random.Random] = None,
    query_embedding: Optional[Sequence[float]] = None,
) -> list[MemoryEntry]:
    """Select up to ``k`` demonstrations for ``question``, most similar first.

    ``same_task_only`` restricts candidates to entries tagged ``task_tag``;
    ``random_mode`` draws them uniformly with ``rng`` instead of ranking.
    """
    if k <= 0 or not store.entries:
        return []
    if same_task_only:
        if task_tag is None:
            raise ValueError("same_task_only requires task_tag")
        candidates = [i for i, e in enumerate(store.entries) if e.task_tag == task_tag]
    else:
        candidates = list(range(len(store.entries)))
    if random_mode:
        rng = rng or random.Random(0)
        picked = rng.sample(candidates, min(k, len(candidates)))
        return [store.entries[i] for i in picked]
    if query_embedding is None:
        query_embedding = embedder.embed([question])[0]
    return top_k(store, list(query_embedding), k, candidates)


def save(store: MemoryStore, path: str | Path) -> None:
    header = {"version": FORMAT_VERSION, "embedding_dim": store.embedding_dim, "embedder_id": store.embedder_id}
    lines = [json.dumps(header, ensure_ascii=False)]
    lines += [json.dumps(e.to_json(), ensure_ascii=False) for e in store.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path) -> MemoryStore:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    if not lines[0].strip():
        raise CorruptStore(f"{path}: missing header line")
    try:
        header = json.loads(lines[0])
        store = MemoryStore(int(header["embedding_dim"]), header.get("embedder_id", ""))
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptStore(f"{path}:1: bad header ({exc})") from None
    if header.get("version") != FORMAT_VERSION:
        raise CorruptStore(f"{path}:1: unsupported version {header.get('version')!r}")
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            store.add(MemoryEntry.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptStore(f"{path}:{lineno}: {exc}") from None
    return store
