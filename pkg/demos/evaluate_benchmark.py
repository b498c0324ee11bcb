"""Score a tiny benchmark and look at the per-example report.

Three table questions are answered by a rule-based model. The first is
right as written, the second only matches once quotes and case are
normalized (scored correct, labelled output_format_error), and the third
sorts numbers as text and gets a reasoning_logic_error.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from pandora import AgentConfig, Example, HashingEmbedder, PandoraAgent, Table, run_benchmark
from pandora.evalkit import f1, hit_at_1
from pandora.llm import FunctionClient

CITIES = Table(("city", "country", "population"),
               [("Paris", "France", "2,148,000"), ("Lyon", "France", "513,000"), ("Lima", "Peru", "9,750,000")],
               name="cities")


def model(prompt: str) -> str:
    if "smallest" in prompt.split("Question:\n")[-1]:
        # sorts the text values instead of the numbers
        code = "result = [[cities.sort_values('population').iloc[0]['city']]]"
    else:
        code = "result = [[c] for c in cities[cities['country'] == 'France']['city']]"
    return json.dumps({"reasoning": "filter the cities box", "code": code})


def main() -> None:
    examples = [
        Example("q1", "table", "Which cities are in France?", CITIES, [["Paris"], ["Lyon"]]),
        Example("q2", "table", "Name the French cities.", CITIES, [["lyon"], ["'Paris'"]]),
        Example("q3", "table", "What is the smallest city?", CITIES, [["Lyon"]]),
    ]
    agent = PandoraAgent(FunctionClient(model), HashingEmbedder(256), config=AgentConfig(no_eg=True))
    with tempfile.TemporaryDirectory() as tmp:
        report = run_benchmark(examples, agent, out_dir=tmp)
        print(sorted(p.name for p in Path(tmp).iterdir()))
    for rec in report.records:
        print(rec["id"], "predicted", rec["predicted"], "da", rec["da"], "f1", rec["f1"], "label", rec["error_label"])
    print("aggregates:", json.dumps(report.aggregates))
    print()
    print("set metrics on their own:")
    print("  f1({a,b},{b,c}) =", f1([["a"], ["b"]], [["b"], ["c"]]))
    print("  hit@1([x], {x,y}) =", hit_at_1([["x"]], [["x"], ["y"]]))


if __name__ == "__main__":
    main()
