"""Build a demonstration memory in two stages and reuse it across tasks.

Stage one annotates labelled database questions and keeps only code whose
output matches the gold answer. Stage two annotates a table question with
the stage-one entries as demonstrations. The model is a small rule-based
stand-in so the script runs offline.
"""

from __future__ import annotations

import json
import re

from pandora import Database, Example, HashingEmbedder, PandoraAgent, Table
from pandora.llm import FunctionClient

SINGERS = Table(("name", "country"), [("Joe", "France"), ("Ann", "Peru"), ("Li", "France"), ("Sam", "Chile")],
                name="singer")


def rule_model(prompt: str) -> str:
    """Answers 'singers from X' questions; gets Chile wrong on purpose."""
    question = prompt.split("Question:\n")[-1].split("\n")[0]
    country = re.search(r"from (\w+)", question).group(1)
    if country == "Chile":
        country = "Chili"
    code = f"result = [[n] for n in singer[singer['country'] == '{country}']['name']]"
    return json.dumps({"reasoning": f"filter singer by country {country}", "code": code})


def main() -> None:
    db = Database((SINGERS,))
    train = [
        Example(f"db{i}", "db", f"List singers from {c}", db, [[n] for n, cc in SINGERS.rows if cc == c],
                f"SELECT name FROM singer WHERE country = '{c}'")
        for i, c in enumerate(["France", "Peru", "Chile"])
    ]
    agent = PandoraAgent(FunctionClient(rule_model), HashingEmbedder(256))
    m0 = agent.init_memory(train)
    print(f"stage one kept {len(m0)} of {len(train)}:", [e.entry_id for e in m0])
    for record in agent.learning_log:
        print("  skipped", record["id"], "-", record["reason"])

    table_q = Example("t0", "table", "Which singers are from Peru?", SINGERS, [["Ann"]])
    memory = agent.adapt_tasks([table_q], m0)
    print("after stage two:", [(e.entry_id, e.task_tag) for e in memory])
    print()
    print("stored entry for t0:")
    entry = memory.get("t0")
    print(entry.schema_text)
    print("Reasoning:", entry.rationale)
    print("Code:", entry.code)


if __name__ == "__main__":
    main()
