"""Shared fixtures-by-function and independent oracles for the test suite."""

from __future__ import annotations

import json
import random
from collections import deque
from fractions import Fraction

from pandora.box import NA, Box, BoxSet
from pandora.converters import KnowledgeGraph, SubgraphSpec


def reply(code: str, reasoning: str = "look up the column and filter") -> str:
    return json.dumps({"reasoning": reasoning, "code": code})


# -- KG oracle -----------------------------------------------------------------


def kg_oracle_cells(kg: KnowledgeGraph, spec: SubgraphSpec) -> set[tuple]:
    """Cells (type, relation, subject, object) expected in the boxes.

    A triple s -r-> o over a relevant relation is covered when one endpoint
    lies within H-1 undirected hops of a topic entity; it contributes one
    cell per type of s (untyped subjects and self loops contribute nothing).
    """
    relevant = set(spec.relevant_relations) - {kg.isa}
    adj: dict[str, set[str]] = {}
    types: dict[str, list[str]] = {}
    for s, p, o in kg.triples:
        if p == kg.isa:
            types.setdefault(s, [])
            if o not in types[s]:
                types[s].append(o)
        elif p in relevant:
            adj.setdefault(s, set()).add(o)
            adj.setdefault(o, set()).add(s)
    dist: dict[str, int] = {}
    queue = deque()
    for t in spec.topic_entities:
        if t not in dist:
            dist[t] = 0
            queue.append(t)
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    cells = set()
    inf = float("inf")
    for s, p, o in kg.triples:
        if p not in relevant or s == o:
            continue
        if min(dist.get(s, inf), dist.get(o, inf)) > spec.hop_limit - 1:
            continue
        for t in types.get(s, []):
            cells.add((t, p, s, o))
    return cells


def box_cells(box_set: BoxSet) -> list[tuple]:
    """Cells (box, field, head value, value) of every non-NA, non-head cell."""
    out = []
    for b in box_set.boxes:
        head = b.field_names[0]
        for row in b.rows:
            rec = dict(zip(b.field_names, row))
            for f in b.field_names[1:]:
                if rec[f] is not NA:
                    out.append((b.name, f, rec[head], rec[f]))
    return out


def random_kg(rng: random.Random, max_triples: int = 30, max_relations: int = 4,
              n_entities: int = 10, n_types: int = 3) -> KnowledgeGraph:
    relations = [f"r{i}" for i in range(rng.randint(1, max_relations))]
    entities = [f"e{i}" for i in range(n_entities)]
    triples = []
    for e in entities:
        if rng.random() < 0.85:
            for t in rng.sample(range(n_types), rng.choice([1, 1, 1, 2])):
                triples.append((e, "type.object.type", f"T{t}"))
    for _ in range(rng.randint(1, max_triples - len(triples)) if max_triples > len(triples) else 0):
        triples.append((rng.choice(entities), rng.choice(relations), rng.choice(entities)))
    return KnowledgeGraph(triples)


def random_subgraph_spec(rng: random.Random, kg: KnowledgeGraph) -> SubgraphSpec:
    entities = sorted({s for s, _, _ in kg.triples} | {o for _, p, o in kg.triples if p != kg.isa})
    topics = rng.sample(entities, rng.choice([1, 1, 2]))
    rels = kg.relations
    relevant = rng.sample(rels, rng.randint(1, len(rels))) if rels else []
    return SubgraphSpec(tuple(topics), rng.choice([1, 2, 3]), tuple(relevant))


# -- foreign key oracle --------------------------------------------------------


def fk_oracle(box_set: BoxSet) -> set[frozenset]:
    cols = []
    for b in box_set.boxes:
        for f in b.field_names:
            cols.append((b.name, f, {v for v in b.column(f) if v is not NA}))
    found = set()
    for i in range(len(cols)):
        for j in range(len(cols)):
            a, b = cols[i], cols[j]
            if a[0] != b[0] and a[2] & b[2]:
                found.add(frozenset({a[:2], b[:2]}))
    return found


def random_boxset(rng: random.Random, n_boxes: int = 3, values=("x", "y", "z", "w")) -> BoxSet:
    boxes = []
    for i in range(n_boxes):
        fields = [f"f{j}" for j in range(rng.randint(1, 3))]
        rows = [[rng.choice(list(values) + [NA]) for _ in fields] for _ in range(rng.randint(0, 4))]
        boxes.append(Box.from_rows(f"B{i}", fields, rows))
    return BoxSet(tuple(boxes))


# -- retrieval oracle ----------------------------------------------------------


def exact_cosine_key(vec, query) -> Fraction:
    """Monotone exact stand-in for cosine on integer vectors: sign(c) * c**2."""
    dot = sum(a * b for a, b in zip(vec, query))
    na, nq = sum(a * a for a in vec), sum(b * b for b in query)
    if na == 0 or nq == 0:
        return Fraction(0)
    frac = Fraction(dot * dot, na * nq)
    return frac if dot >= 0 else -frac


def brute_force_top_k(vectors, query, k: int, candidates=None) -> list[int]:
    idx = list(range(len(vectors))) if candidates is None else list(candidates)
    keyed = [(-exact_cosine_key(vectors[i], query), i) for i in idx]
    keyed.sort()
    return [i for _, i in keyed[:k]]
