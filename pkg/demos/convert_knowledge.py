"""Turn a table, a small database and a knowledge graph into boxes.

Prints the schema the model would see (names and fields only) next to the
values that stay behind in the sandbox.
"""

from __future__ import annotations

from pandora import Database, KnowledgeGraph, SubgraphSpec, Table, database_to_boxset, kg_to_boxset, render_schema, table_to_box
from pandora.box import BoxSet, serialize_values


def show(title: str, box_set: BoxSet) -> None:
    print(f"== {title}")
    print(render_schema(box_set))
    for box in box_set:
        print(f"-- values of {box.name}")
        print(serialize_values(box), end="")
    print()


def main() -> None:
    roster = Table(("Player name", "No.", "Team"), [("Ann", 7, "Owls"), ("Bo", None, "Hawks")], name="roster 2020")
    show("table", BoxSet((table_to_box(roster),)))

    singer = Table(("singer id", "name"), [("1", "Joe"), ("2", "Ann")], name="singer")
    concert = Table(("concert id", "singer id", "year"), [("10", "1", "2014"), ("11", "1", "2015")], name="concert")
    show("database", database_to_boxset(Database((singer, concert), (("concert", "singer id", "singer", "singer id"),))))

    kg = KnowledgeGraph([
        ("m.hp", "type.object.type", "book.book"),
        ("m.hp", "book.book.author", "m.jkr"),
        ("m.cv", "type.object.type", "book.book"),
        ("m.cv", "book.book.author", "m.jkr"),
        ("m.jkr", "type.object.type", "people.person"),
        ("m.jkr", "people.person.nationality", "m.uk"),
        ("m.uk", "type.object.type", "location.country"),
        ("m.uk", "location.country.capital", "m.london"),
    ])
    for hops in (1, 2):
        spec = SubgraphSpec(("m.jkr",), hops, ("book.book.author", "people.person.nationality", "location.country.capital"))
        show(f"knowledge graph around m.jkr, {hops} hop(s)", kg_to_boxset(kg, spec))


if __name__ == "__main__":
    main()
