"""The BOX representation: named field/value tables plus foreign keys.

A :class:`Box` stores every cell as text (or the :data:`NA` marker); numeric
interpretation is left to the generated code. Prompts only ever see the
schema produced by :func:`render_schema`, never the cell values.
"""

from __future__ import annotations

import json
import keyword
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

from .errors import EmptyName, InvalidBox

__all__ = [
    "NA",
    "Cell",
    "Box",
    "ForeignKey",
    "BoxSet",
    "sanitize_name",
    "unique_names",
    "render_schema",
    "render_boxes",
    "render_foreign_keys",
    "serialize_values",
    "deserialize_values",
    "write_boxset",
    "read_boxset",
]


class _NAType:
    """Missing-value marker; distinct from every string, including ``"NA"``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NA"

    def __reduce__(self):
        return (_NAType, ())


NA = _NAType()
Cell = Union[str, _NAType]

# names that would shadow the sandbox preamble/epilogue
_RESERVED = frozenset({"pd", "np", "result"})
_EDGE_SEP = re.compile(r"^[^\w]+|[^\w]+$")
_INNER_SEP = re.compile(r"[^\w]+")


def sanitize_name(raw: str) -> str:
    """Turn ``raw`` into a Python identifier, keeping its letter case.

    Runs of whitespace/punctuation become a single underscore, edge
    separators are dropped, a leading digit gets an underscore prefix and
    keywords or reserved sandbox names get an underscore suffix.

    >>> sanitize_name("Henley Beach railway line")
    'Henley_Beach_railway_line'
    >>> sanitize_name("2nd table")
    '_2nd_table'
    """
    if not isinstance(raw, str):
        raise TypeError(f"name must be text, got {type(raw).__name__}")
    text = unicodedata.normalize("NFKC", raw)
    text = _INNER_SEP.sub("_", _EDGE_SEP.sub("", text))
    text = "".join(c if ("_" + c).isidentifier() else "_" for c in text)
    if not text.strip("_"):
        raise EmptyName(f"name {raw!r} has no identifier characters")
    if not text.isidentifier():
        text = "_" + text
    if keyword.iskeyword(text) or text in _RESERVED:
        text += "_"
    return text


def unique_names(names: Iterable[str]) -> list[str]:
    """Sanitize ``names`` and resolve collisions with numeric suffixes."""
    taken: set[str] = set()
    out = []
    for raw in names:
        base = sanitize_name(raw)
        name, n = base, 1
        while name in taken:
            n += 1
            name = f"{base}_{n}"
        taken.add(name)
        out.append(name)
    return out


@dataclass(frozen=True)
class Box:
    name: str
    field_names: tuple[str, ...]
    columns: tuple[tuple[Cell, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "field_names", tuple(self.field_names))
        object.__setattr__(self, "columns", tuple(tuple(c) for c in self.columns))
        sanitize_name(self.name)
        if len(set(self.field_names)) != len(self.field_names):
            raise InvalidBox(f"box {self.name!r} has duplicate field names")
        if len(self.columns) != len(self.field_names):
            raise InvalidBox(
                f"box {self.name!r}: {len(self.field_names)} fields but {len(self.columns)} columns"
            )
        if len({len(c) for c in self.columns}) > 1:
            raise InvalidBox(f"box {self.name!r} has columns of unequal length")
        for col in self.columns:
            for v in col:
                if v is not NA and not isinstance(v, str):
                    raise InvalidBox(f"box {self.name!r}: cell {v!r} is not text or NA")

    @classmethod
    def from_rows(cls, name: str, field_names: Sequence[str], rows: Iterable[Sequence[Cell]]) -> "Box":
        rows = [tuple(r) for r in rows]
        width = len(field_names)
        for r in rows:
            if len(r) != width:
                raise InvalidBox(f"row {r!r} does not have {width} cells")
        columns = tuple(tuple(r[i] for r in rows) for i in range(width))
        return cls(name, tuple(field_names), columns)

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def rows(self) -> list[tuple[Cell, ...]]:
        return list(zip(*self.columns)) if self.columns else []

    def column(self, field_name: str) -> tuple[Cell, ...]:
        return self.columns[self.field_names.index(field_name)]


@dataclass(frozen=True)
class ForeignKey:
    left: tuple[str, str]
    right: tuple[str, str]

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))

    def key(self) -> frozenset:
        """Orientation-free identity used for deduplication."""
        return frozenset((self.left, self.right))

    def to_json(self) -> dict:
        return {"left": list(self.left), "right": list(self.right)}


@dataclass(frozen=True)
class BoxSet:
    boxes: tuple[Box, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "foreign_keys", tuple(self.foreign_keys))
        seen = set()
        for b in self.boxes:
            var = sanitize_name(b.name)
            if var in seen:
                raise InvalidBox(f"duplicate box name {b.name!r}")
            seen.add(var)
        by_name = {b.name: b for b in self.boxes}
        for fk in self.foreign_keys:
            for box_name, field_name in (fk.left, fk.right):
                if box_name not in by_name or field_name not in by_name[box_name].field_names:
                    raise InvalidBox(f"foreign key {fk} references unknown {box_name}.{field_name}")
            if fk.left[0] == fk.right[0]:
                raise InvalidBox(f"foreign key {fk} links a box to itself")

    def __iter__(self) -> Iterator[Box]:
        return iter(self.boxes)

    def __len__(self) -> int:
        return len(self.boxes)

    def box(self, name: str) -> Box:
        for b in self.boxes:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.boxes]


# -- schema rendering ---------------------------------------------------------


def render_boxes(box_set: BoxSet) -> str:
    """One ``name = pd.DataFrame({...})`` line per box, every value list empty."""
    lines = []
    for b in box_set.boxes:
        fields = ", ".join(f"{f!r}: []" for f in b.field_names)
        lines.append(f"{sanitize_name(b.name)} = pd.DataFrame({{{fields}}})")
    return "\n".join(lines)


def render_foreign_keys(box_set: BoxSet) -> str:
    return "\n".join(
        f"{sanitize_name(fk.left[0])}[{fk.left[1]!r}] -> {sanitize_name(fk.right[0])}[{fk.right[1]!r}]"
        for fk in box_set.foreign_keys
    )


def render_schema(box_set: BoxSet) -> str:
    """Schema listing for prompts: boxes with field names, then foreign keys."""
    return f"# Boxes\n{render_boxes(box_set)}\n# Foreign keys\n{render_foreign_keys(box_set)}\n"


# -- value tables -------------------------------------------------------------


def _quote(cell: Cell) -> str:
    if cell is NA:
        return "NA"
    if cell in ("", "NA") or any(c in cell for c in ',"\r\n'):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def _parse_value_table(text, na):
    # Self-contained: the sandbox preamble embeds this function's source.
    rows = []
    i, n = 0, len(text)
    while i < n:
        row = []
        while True:
            if i < n and text[i] == '"':
                j, parts = i + 1, []
                while True:
                    k = text.find('"', j)
                    if k < 0:
                        raise ValueError("unterminated quoted cell")
                    parts.append(text[j:k])
                    if text.startswith('""', k):
                        parts.append('"')
                        j = k + 2
                    else:
                        i = k + 1
                        break
                row.append("".join(parts))
            else:
                j = i
                while j < n and text[j] not in ',\r\n':
                    j += 1
                raw = text[i:j]
                if '"' in raw:
                    raise ValueError("stray quote in unquoted cell at offset %d" % i)
                i = j
                ends_record = i >= n or text[i] in "\r\n"
                if not (raw == "" and not row and ends_record):
                    row.append(na if raw == "NA" else raw)
            if i < n and text[i] == ",":
                i += 1
                if i >= n or text[i] in "\r\n":
                    row.append("")
                    # a trailing delimiter means one more (unquoted empty) cell
                    if text.startswith("\r\n", i):
                        i += 2
                    elif i < n:
                        i += 1
                    break
                continue
            if text.startswith("\r\n", i):
                i += 2
            elif i < n and text[i] == "\n":
                i += 1
            elif i < n:
                raise ValueError("unexpected character %r at offset %d" % (text[i], i))
            break
        rows.append(row)
    return rows


def serialize_values(box: Box) -> str:
    """CSV text for one box: header of field names, then one line per row.

    NA is written as a bare ``NA`` token; the literal string ``"NA"`` and
    empty strings are always quoted, so the two never collide.
    """
    lines = [",".join(_quote(f) if f != "NA" else f for f in box.field_names)]
    lines.extend(",".join(_quote(v) for v in row) for row in box.rows)
    return "\n".join(lines) + "\n"


def deserialize_values(name: str, text: str) -> Box:
    try:
        records = _parse_value_table(text, NA)
    except ValueError as exc:
        raise InvalidBox(f"value table for {name!r}: {exc}") from None
    if not records:
        raise InvalidBox(f"value table for {name!r} has no header")
    header = ["NA" if h is NA else h for h in records[0]]
    return Box.from_rows(name, header, records[1:])


def write_boxset(box_set: BoxSet, directory: str | Path, fk_path: str | Path | None = None) -> list[Path]:
    """Write one ``<name>.csv`` per box and a ``foreign_keys.json`` manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for b in box_set.boxes:
        p = directory / f"{sanitize_name(b.name)}.csv"
        p.write_text(serialize_values(b), encoding="utf-8", newline="")
        written.append(p)
    fk_path = Path(fk_path) if fk_path is not None else directory / "foreign_keys.json"
    fk_path.write_text(
        json.dumps([fk.to_json() for fk in box_set.foreign_keys], ensure_ascii=False, indent=1),
        encoding="utf-8",
    )
    written.append(fk_path)
    return written


def read_boxset(directory: str | Path, fk_path: str | Path | None = None) -> BoxSet:
    directory = Path(directory)
    boxes = [
        deserialize_values(p.stem, p.read_text(encoding="utf-8"))
        for p in sorted(directory.glob("*.csv"))
    ]
    fk_path = Path(fk_path) if fk_path is not None else directory / "foreign_keys.json"
    fks = []
    if fk_path.exists():
        fks = [ForeignKey(tuple(d["left"]), tuple(d["right"])) for d in json.loads(fk_path.read_text("utf-8"))]
    return BoxSet(tuple(boxes), tuple(fks))
