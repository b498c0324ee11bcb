"""Conversion of tables, databases and knowledge-graph subgraphs into BOXes."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .box import NA, Box, BoxSet, Cell, ForeignKey, sanitize_name, unique_names
from .llm import cosine_scores
from .errors import DuplicateBoxName, DuplicateColumn, InvalidBox, UnknownTopicEntity

logger = logging.getLogger(__name__)

DEFAULT_ISA = "type.object.type"


@dataclass(frozen=True)
class Table:
    column_names: tuple[str, ...]
    rows: tuple[tuple, ...]
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        width = len(self.column_names)
        for j, r in enumerate(self.rows):
            if len(r) != width:
                raise InvalidBox(f"table {self.name!r} row {j} has {len(r)} cells, expected {width}")


@dataclass(frozen=True)
class Database:
    tables: tuple[Table, ...]
    # (table, column, referenced table, referenced column)
    foreign_keys: tuple[tuple[str, str, str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "foreign_keys", tuple(tuple(fk) for fk in self.foreign_keys))
        cols = {t.name: set(t.column_names) for t in self.tables}
        for fk in self.foreign_keys:
            for t, c in ((fk[0], fk[1]), (fk[2], fk[3])):
                if t not in cols or c not in cols[t]:
                    raise InvalidBox(f"foreign key {fk} references unknown column {t}.{c}")


@dataclass
class KnowledgeGraph:
    triples: list[tuple[str, str, str]]
    isa: str = DEFAULT_ISA

    def __post_init__(self):
        self.triples = [tuple(t) for t in self.triples]
        for t in self.triples:
            if len(t) != 3 or not all(isinstance(x, str) and x for x in t):
                raise InvalidBox(f"malformed triple {t!r}")
        self._index()

    def _index(self):
        self._out: dict[str, dict[str, list[str]]] = defaultdict(lambda: defaultdict(list))
        self._in: dict[str, dict[str, list[str]]] = defaultdict(lambda: defaultdict(list))
        self._types: dict[str, list[str]] = defaultdict(list)
        self._entities: set[str] = set()
        for s, p, o in self.triples:
            self._entities.add(s)
            if p == self.isa:
                if o not in self._types[s]:
                    self._types[s].append(o)
                continue
            self._entities.add(o)
            self._out[s][p].append(o)
            self._in[o][p].append(s)

    @property
    def relations(self) -> list[str]:
        """Non-ISA relations in order of first appearance."""
        return list(dict.fromkeys(p for _, p, _ in self.triples if p != self.isa))

    def has_entity(self, e: str) -> bool:
        return e in self._entities

    def types_of(self, e: str) -> list[str]:
        return list(self._types.get(e, ()))

    def neighbors(self, e: str, relation: str, direction: str) -> list[str]:
        index = self._out if direction == "+" else self._in
        if e not in index:
            return []
        return list(index[e].get(relation, ()))


@dataclass(frozen=True)
class SubgraphSpec:
    topic_entities: tuple[str, ...]
    hop_limit: int = 3
    relevant_relations: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "topic_entities", tuple(self.topic_entities))
        object.__setattr__(self, "relevant_relations", tuple(self.relevant_relations))
        if self.hop_limit < 1:
            raise ValueError("hop_limit must be >= 1")


@dataclass(frozen=True)
class KGSource:
    """A knowledge graph together with the topic entities of one question."""

    kg: KnowledgeGraph
    topic_entities: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "topic_entities", tuple(self.topic_entities))
        if not self.topic_entities:
            raise ValueError("a KG question needs at least one topic entity")


# -- tables and databases -----------------------------------------------------


def _cell(v) -> Cell:
    if v is None or v is NA:
        return NA
    return v if isinstance(v, str) else str(v)


def table_to_box(table: Table, name: Optional[str] = None) -> Box:
    fields = [sanitize_name(c) for c in table.column_names]
    if len(set(fields)) != len(fields):
        dup = sorted({f for f in fields if fields.count(f) > 1})
        raise DuplicateColumn(f"table {table.name!r}: columns collide after sanitization: {dup}")
    box_name = name or (sanitize_name(table.name) if table.name else "Table")
    return Box.from_rows(box_name, fields, ([_cell(v) for v in r] for r in table.rows))


def database_to_boxset(db: Database) -> BoxSet:
    raw = [t.name or "Table" for t in db.tables]
    if len(set(raw)) != len(raw):
        raise DuplicateBoxName(f"database has duplicate table names: {sorted({n for n in raw if raw.count(n) > 1})}")
    box_names = unique_names(raw)
    boxes = [table_to_box(t, name=n) for t, n in zip(db.tables, box_names)]
    by_table = {t.name: (b, t) for b, t in zip(boxes, db.tables)}

    def ref(table: str, column: str) -> tuple[str, str]:
        b, t = by_table[table]
        return b.name, b.field_names[t.column_names.index(column)]

    fks = [ForeignKey(ref(t1, c1), ref(t2, c2)) for t1, c1, t2, c2 in db.foreign_keys]
    return BoxSet(tuple(boxes), tuple(fks))


# -- knowledge graphs ---------------------------------------------------------


def relation_text(relation: str) -> str:
    """Embedding text for a relation id: separators become spaces."""
    return " ".join(relation.replace("_", " ").replace(".", " ").split())


def prune_relations(kg: KnowledgeGraph, question: str, k_rel: int, embedder) -> list[str]:
    """Keep the ``k_rel`` non-ISA relations most similar to the question.

    Ties are broken by relation name so the result is deterministic.
    """
    relations = kg.relations
    if k_rel >= len(relations):
        return relations
    vecs = np.asarray(embedder.embed([question] + [relation_text(r) for r in relations]), dtype=float)
    scores = cosine_scores(vecs[1:], vecs[0])
    order = sorted(range(len(relations)), key=lambda i: (-scores[i], relations[i]))
    return [relations[i] for i in order[:k_rel]]


def _dfs_paths(kg: KnowledgeGraph, start: str, relations: Sequence[str], hops: int) -> list[list[tuple]]:
    """Depth-first enumeration of simple paths of at most ``hops`` steps.

    Each step is stored as a (subject, relation, object) triple in
    subject-to-object orientation regardless of traversal direction. A path
    is emitted when it reaches ``hops`` steps or cannot be extended.
    """
    paths: list[list[tuple]] = []
    path: list[tuple] = []
    visited = {start}

    def visit(e: str):
        if len(path) == hops:
            paths.append(list(path))
            return
        extended = False
        for r in relations:
            for direction in ("+", "-"):
                for nb in kg.neighbors(e, r, direction):
                    if nb in visited:
                        continue
                    extended = True
                    path.append((e, r, nb) if direction == "+" else (nb, r, e))
                    visited.add(nb)
                    visit(nb)
                    visited.discard(nb)
                    path.pop()
        if not extended and path:
            paths.append(list(path))

    visit(start)
    return paths


def kg_to_boxset(kg: KnowledgeGraph, spec: SubgraphSpec, consolidate: bool = True) -> BoxSet:
    """Build one box per entity type reached in the H-hop subgraph.

    Box ``γ`` has a leading field ``γ`` listing subject entities of that type
    and one field per relevant relation leaving those subjects. Rows start
    sparse (one per distinct traversed triple, NA elsewhere) and are then
    merged per subject entity when their filled cells do not overlap.
    """
    for e in spec.topic_entities:
        if not kg.has_entity(e):
            raise UnknownTopicEntity(e)
    relations = [r for r in spec.relevant_relations if r != kg.isa]

    # distinct traversed triples, in discovery order
    steps: dict[tuple, None] = {}
    for e in spec.topic_entities:
        for path in _dfs_paths(kg, e, relations, spec.hop_limit):
            for step in path:
                steps.setdefault(step, None)

    # box type -> relation order and sparse rows of (subject, relation, object)
    fields_of: dict[str, dict[str, None]] = {}
    records: dict[str, list[tuple]] = {}
    untyped = set()
    for s, r, o in steps:
        types = kg.types_of(s)
        if not types:
            untyped.add(s)
            continue
        for t in types:
            fields_of.setdefault(t, {})[r] = None
            records.setdefault(t, []).append((s, r, o))
    for s in sorted(untyped):
        logger.warning("dropping rows for untyped subject %r", s)

    box_names = unique_names(fields_of)
    boxes = []
    for t, box_name in zip(fields_of, box_names):
        rel_fields = unique_names([t] + list(fields_of[t]))
        head, rel_names = rel_fields[0], dict(zip(fields_of[t], rel_fields[1:]))
        rows = [{head: s, rel_names[r]: o} for s, r, o in records[t]]
        if consolidate:
            rows = consolidate_rows(rows, head)
        boxes.append(Box.from_rows(box_name, rel_fields, ([row.get(f, NA) for f in rel_fields] for row in rows)))
    return infer_foreign_keys(BoxSet(tuple(boxes), ()))


def consolidate_rows(rows: list[dict], key: str) -> list[dict]:
    """Greedily merge rows with the same ``key`` value and disjoint filled fields."""
    merged: list[dict] = []
    by_key: dict[str, list[dict]] = defaultdict(list)
    for row in rows:
        for target in by_key[row[key]]:
            if not (target.keys() - {key}) & (row.keys() - {key}):
                target.update(row)
                break
        else:
            new = dict(row)
            merged.append(new)
            by_key[row[key]].append(new)
    return merged


def infer_foreign_keys(box_set: BoxSet) -> BoxSet:
    """Link every pair of fields in different boxes that share a non-NA value."""
    values = {}
    for b in box_set.boxes:
        for f, col in zip(b.field_names, b.columns):
            values[(b.name, f)] = {v for v in col if v is not NA}
    keys = sorted(values)
    existing = {fk.key() for fk in box_set.foreign_keys}
    new = []
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            if a[0] == b[0] or not values[a] & values[b]:
                continue
            fk = ForeignKey(a, b)
            if fk.key() not in existing:
                existing.add(fk.key())
                new.append(fk)
    return BoxSet(box_set.boxes, box_set.foreign_keys + tuple(new))
