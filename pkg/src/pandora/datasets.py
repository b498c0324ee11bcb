"""Normalized JSONL question datasets.

One JSON object per line::

    {"id": "q1", "task": "db", "question": "...", "knowledge_ref": "dbs/concert",
     "topic_entities": ["m.0abc"], "logical_label": "SELECT ...", "gold": [["x"]]}

``knowledge_ref`` is resolved relative to the dataset file: a directory of
CSVs for ``db``, a CSV file for ``table`` and a triples TSV for ``kg``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .box import BoxSet
from .converters import Database, KGSource, Table
from .errors import ParseError
from .loaders import load_database_dir, load_kg_tsv, load_table_csv
from .memory import TASKS

Knowledge = Union[Table, Database, KGSource, BoxSet]


@dataclass(frozen=True)
class Example:
    id: str
    task: str
    question: str
    knowledge: Knowledge
    gold: Optional[list[list[str]]] = None
    logical_label: Optional[str] = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")


# learning stages consume the same record shape
TrainingExample = Example


def task_of(knowledge) -> str:
    if isinstance(knowledge, Table):
        return "table"
    if isinstance(knowledge, Database):
        return "db"
    if isinstance(knowledge, KGSource):
        return "kg"
    if isinstance(knowledge, BoxSet):
        return "db" if len(knowledge) > 1 else "table"
    raise TypeError(f"unsupported knowledge source {type(knowledge).__name__}")


def load_knowledge(task: str, ref: str | Path, topic_entities=(), cache: Optional[dict] = None) -> Knowledge:
    path = Path(ref)
    cache = {} if cache is None else cache
    key = (task, str(path.resolve()))
    if key not in cache:
        if not path.exists():
            raise ParseError(f"{path}: knowledge source not found")
        if task == "db":
            cache[key] = load_database_dir(path)
        elif task == "table":
            cache[key] = load_table_csv(path, name=path.stem)
        else:
            cache[key] = load_kg_tsv(path)
    source = cache[key]
    if task == "kg":
        return KGSource(source, tuple(topic_entities))
    return source


def load_dataset(path: str | Path) -> list[Example]:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: dataset file not found")
    cache: dict = {}
    out = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), 1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            d = json.loads(line)
            task, question = d["task"], d["question"]
            ex_id = str(d.get("id", f"{task}-{lineno}"))
            ref = path.parent / d["knowledge_ref"]
            gold = d.get("gold")
            if gold is not None:
                gold = [[str(v) for v in row] for row in gold]
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"{where}: malformed record ({exc})") from None
        if task not in TASKS:
            raise ParseError(f"{where}: unknown task {task!r}; expected one of {TASKS}")
        if ex_id in seen:
            raise ParseError(f"{where}: duplicate id {ex_id!r}")
        seen.add(ex_id)
        if task == "kg" and not d.get("topic_entities"):
            raise ParseError(f"{where}: kg record needs topic_entities")
        try:
            knowledge = load_knowledge(task, ref, d.get("topic_entities", ()), cache)
            out.append(Example(ex_id, task, question, knowledge, gold, d.get("logical_label")))
        except ParseError as exc:
            raise ParseError(f"{where}: {exc}") from None
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None
    return out
