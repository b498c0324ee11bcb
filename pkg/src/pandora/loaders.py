"""Readers for the on-disk knowledge formats (table CSV, database dir, KG TSV)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .converters import DEFAULT_ISA, Database, KnowledgeGraph, Table
from .errors import InvalidBox, ParseError


def load_table_csv(path: str | Path, name: str | None = None) -> Table:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(f"{path}: empty file, expected a header row") from None
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise ParseError(
                        f"{path}:{reader.line_num}: {len(row)} cells, header has {len(header)}"
                    )
                rows.append(row)
    except csv.Error as exc:
        raise ParseError(f"{path}: {exc}") from None
    return Table(tuple(header), tuple(rows), name=name)


def load_database_dir(directory: str | Path) -> Database:
    """One table per ``*.csv`` (named by file stem) plus ``foreign_keys.json``.

    The manifest is a list of ``{"left": [table, column], "right": [table, column]}``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError(f"{directory}: not a directory")
    tables = [load_table_csv(p, name=p.stem) for p in sorted(directory.glob("*.csv"))]
    fk_file = directory / "foreign_keys.json"
    fks = []
    if fk_file.exists():
        try:
            for d in json.loads(fk_file.read_text("utf-8")):
                fks.append((d["left"][0], d["left"][1], d["right"][0], d["right"][1]))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ParseError(f"{fk_file}: malformed foreign key manifest ({exc})") from None
    try:
        return Database(tuple(tables), tuple(fks))
    except InvalidBox as exc:
        raise ParseError(f"{directory}: {exc}") from None


def load_kg_tsv(path: str | Path, isa: str = DEFAULT_ISA) -> KnowledgeGraph:
    path = Path(path)
    triples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise ParseError(f"{path}:{lineno}: expected subject<TAB>predicate<TAB>object")
            triples.append(tuple(parts))
    return KnowledgeGraph(triples, isa=isa)
