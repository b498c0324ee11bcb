"""Answer one question with a scripted model that needs two corrections.

The first reply uses a box name that does not exist, the second returns an
empty result and the third is right. Each failure is fed back to the model
before the next try.
"""

from __future__ import annotations

import json

from pandora import HashingEmbedder, PandoraAgent, ScriptedClient, Table


def reply(code: str, reasoning: str) -> str:
    return json.dumps({"reasoning": reasoning, "code": code})


def main() -> None:
    singers = Table(("name", "country", "age"), [("Joe", "France", "52"), ("Ann", "Peru", "33"), ("Li", "France", "41")],
                    name="singer")
    model = ScriptedClient.sequence([
        reply("result = singers['name']", "read the name column"),
        reply("result = [[n] for n in singer[singer['country'] == 'france']['name']]", "filter on country"),
        reply("result = [[n] for n in singer[singer['country'] == 'France']['name']]", "filter on the exact country value"),
    ])
    agent = PandoraAgent(model, HashingEmbedder(256))
    result = agent.answer("Which singers are from France?", singers)
    for i, attempt in enumerate(result.attempts, 1):
        outcome = attempt.outcome
        detail = outcome.answer if outcome.status == "ok" else (outcome.error_text or "").strip().splitlines()[-1:] or outcome.status
        print(f"attempt {i} ({attempt.kind}): {outcome.status} {detail}")
    print("answer:", result.answer, "succeeded:", result.succeeded)
    print()
    print("feedback prompt sent before attempt 2:")
    print(result.attempts[1].prompt)


if __name__ == "__main__":
    main()
