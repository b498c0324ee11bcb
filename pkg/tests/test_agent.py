import json

import pytest

from helpers import reply
from pandora.agent import AgentConfig, PandoraAgent
from pandora.box import render_schema
from pandora.converters import Database, KGSource, KnowledgeGraph, Table
from pandora.datasets import Example
from pandora.errors import EmptyMemory, TranscriptExhausted
from pandora.evalkit import exact_set_match
from pandora.llm import FunctionClient, HashingEmbedder, ScriptedClient
from pandora.memory import MemoryEntry, MemoryStore
from pandora.prompts import count_demo_blocks
from pandora.sandbox import execute

SINGERS = Table(("name", "country", "age"), [("Joe", "France", "52"), ("Ann", "Peru", "33"), ("Li", "France", "41")],
                name="singer")
GOOD = reply("result = [[n] for n in singer[singer['country'] == 'France']['name']]")
NAME_ERROR = reply("result = singers['name']")
EMPTY = reply("result = []")
EMB = HashingEmbedder(64)


def agent(responses, **cfg):
    return PandoraAgent(ScriptedClient.sequence(responses), EMB, config=AgentConfig(**cfg))


def test_eg_recovers_after_name_error():
    a = agent([NAME_ERROR, GOOD])
    res = a.answer("Which singers are from France?", SINGERS)
    assert res.succeeded and len(res.attempts) == 2
    assert res.answer == [["Joe"], ["Li"]]
    assert [t.kind for t in res.attempts] == ["reasoning", "eg"]
    assert "NameError: name 'singers' is not defined" in res.attempts[1].prompt
    assert "Previous Code:\nresult = singers['name']" in res.attempts[1].prompt


def test_terminal_failure_after_budget():
    a = agent([NAME_ERROR, EMPTY, NAME_ERROR, EMPTY, GOOD])
    res = a.answer("Which singers are from France?", SINGERS)
    assert not res.succeeded
    assert len(res.attempts) == 4
    assert res.answer == []
    assert res.attempts[-1].outcome.status == "empty"
    assert a.model.calls == 4


def test_no_eg_stops_after_first_attempt():
    a = agent([NAME_ERROR, GOOD], no_eg=True)
    res = a.answer("q", SINGERS)
    assert not res.succeeded and len(res.attempts) == 1 and a.model.calls == 1


def test_first_valid_attempt_makes_one_call():
    a = agent([GOOD])
    assert a.answer("q", SINGERS).succeeded and a.model.calls == 1


def test_unparseable_reply_becomes_an_attempt():
    a = agent(["I cannot help with that", GOOD])
    res = a.answer("q", SINGERS)
    assert res.succeeded and len(res.attempts) == 2
    assert res.attempts[0].output is None
    assert "could not be parsed" in res.attempts[1].prompt


def test_l_zero_means_single_attempt():
    res = agent([NAME_ERROR, GOOD], max_corrections=0).answer("q", SINGERS)
    assert len(res.attempts) == 1


def test_transport_failure_propagates():
    with pytest.raises(TranscriptExhausted):
        agent([]).answer("q", SINGERS)


def test_transcripts_are_byte_identical(tmp_path):
    outs = []
    for run in ("a", "b"):
        a = PandoraAgent(ScriptedClient.sequence([NAME_ERROR, GOOD]), EMB, transcript_dir=tmp_path / run)
        a.answer("Which singers are from France?", SINGERS, run_id="q1")
        outs.append((tmp_path / run / "q1.json").read_bytes())
    assert outs[0] == outs[1]
    data = json.loads(outs[0])
    assert data["succeeded"] and len(data["attempts"]) == 2


def test_native_generation_hook_is_not_implemented():
    with pytest.raises(NotImplementedError):
        agent([GOOD], generation_target="native").answer("q", SINGERS)


def test_config_validation():
    for bad in ({"n_demos": -1}, {"max_corrections": -1}, {"hop_limit": 0}, {"generation_target": "sql"},
                {"annotation_samples": {"web": 3}}):
        with pytest.raises(ValueError):
            AgentConfig(**bad)
    assert AgentConfig(annotation_samples={"kg": 5}).annotation_samples == {"db": 1000, "table": 1000, "kg": 5}


def test_kg_question():
    kg = KnowledgeGraph([
        ("m.hp", "type.object.type", "book.book"),
        ("m.hp", "book.written_by", "m.jkr"),
        ("m.jkr", "type.object.type", "people.person"),
    ])
    code = "result = [[b] for b in book_book[book_book['book_written_by'] == 'm.jkr']['book_book']]"
    res = agent([reply(code)]).answer("what did m.jkr write?", KGSource(kg, ("m.jkr",)))
    assert res.succeeded and res.answer == [["m.hp"]] and res.task == "kg"


# -- demonstrations -------------------------------------------------------------


def entry(i, question, task):
    return MemoryEntry(f"m{i}", question, "Schema:\n(x)", "r", f"result = [['{i}']]", task, tuple(EMB.embed([question])[0]))


def store():
    s = MemoryStore(EMB.dim, EMB.embedder_id)
    for i, (q, t) in enumerate([("singers from France", "db"), ("count the rows", "table"),
                                ("who wrote the book", "kg"), ("singers older than 40", "db")]):
        s.add(entry(i, q, t))
    return s


def test_demo_retrieval_and_flags():
    q = "Which singers are from France?"
    full = PandoraAgent(ScriptedClient.sequence([GOOD]), EMB, store(), AgentConfig(n_demos=2))
    res = full.answer(q, SINGERS, task_tag="table")
    assert res.demo_ids == ["m0", "m3"]
    assert count_demo_blocks(res.attempts[0].prompt) == 2

    zero = PandoraAgent(ScriptedClient.sequence([GOOD]), EMB, store(), AgentConfig(zero_shot=True))
    res = zero.answer(q, SINGERS, task_tag="table")
    assert res.demo_ids == [] and count_demo_blocks(res.attempts[0].prompt) == 0

    same = PandoraAgent(ScriptedClient.sequence([GOOD]), EMB, store(), AgentConfig(n_demos=2, same_task_only=True))
    assert same.answer(q, SINGERS, task_tag="table").demo_ids == ["m1"]

    rnd = [PandoraAgent(ScriptedClient.sequence([GOOD]), EMB, store(), AgentConfig(n_demos=2, random_retrieval=True, seed=s))
           for s in (1, 1, 2)]
    ids = [a.answer(q, SINGERS, task_tag="table").demo_ids for a in rnd]
    assert ids[0] == ids[1] and len(ids[0]) == 2


# -- learning ---------------------------------------------------------------------

DB = Database((SINGERS,))
COUNTRIES = ["France", "Peru", "France", "Peru", "France", "Peru", "France", "Peru", "France", "Peru"]


def db_examples(n=10):
    out = []
    for i in range(n):
        country = COUNTRIES[i]
        gold = [[x] for x, c in (("Joe", "France"), ("Ann", "Peru"), ("Li", "France")) if c == country]
        out.append(Example(f"db{i}", "db", f"Question {i}: singers from {country}?", DB, gold,
                           f"SELECT name FROM singer WHERE country = '{country}'"))
    return out


def learner(passing, wrong_first=()):
    """Model that answers question i correctly iff i is in ``passing``."""
    seen = {}

    def fn(prompt):
        marker = prompt.split("Question:\n")[-1].split("\n")[0]
        i = int(marker.split(":")[0].split()[-1])
        seen[i] = seen.get(i, 0) + 1
        country = COUNTRIES[i]
        if i in passing and not (i in wrong_first and seen[i] == 1):
            return reply(f"result = [[n] for n in singer[singer['country'] == '{country}']['name']]")
        return reply("result = [['nobody']]")

    return FunctionClient(fn)


def test_init_memory_keeps_only_verified_entries():
    passing = {0, 1, 2, 4, 5, 7, 9}
    a = PandoraAgent(learner(passing), EMB)
    examples = db_examples()
    m0 = a.init_memory(examples)
    assert len(m0) == 7
    assert [e.entry_id for e in m0] == [f"db{i}" for i in sorted(passing)]
    assert {r["id"] for r in a.learning_log} == {"db3", "db6", "db8"}
    by_id = {e.id: e for e in examples}
    for entry in m0:
        assert entry.task_tag == "db"
        ex = by_id[entry.entry_id]
        out = execute(entry.code, a.to_boxset(ex.knowledge, ex.question))
        assert exact_set_match(out.answer, ex.gold)


def test_init_memory_uses_label_and_gold_feedback():
    prompts = []
    inner = learner({0}, wrong_first={0})
    a = PandoraAgent(FunctionClient(lambda p: (prompts.append(p), inner.generate(p))[1]), EMB)
    m0 = a.init_memory(db_examples(1))
    assert len(m0) == 1
    assert "Logical Form:\nSELECT name FROM singer WHERE country = 'France'" in prompts[0]
    assert count_demo_blocks(prompts[0]) == 0
    assert 'Predicted answer: [["nobody"]]' in prompts[1]


def test_init_memory_sampling_is_seeded():
    cfg = AgentConfig(annotation_samples={"db": 4}, seed=3)
    ids = [[e.entry_id for e in PandoraAgent(learner(set(range(10))), EMB, config=cfg).init_memory(db_examples())]
           for _ in range(2)]
    assert ids[0] == ids[1] and len(ids[0]) == 4


def test_adapt_tasks_uses_memory_as_demos():
    m0 = PandoraAgent(learner({0, 1}), EMB).init_memory(db_examples(2))
    table_ex = Example("t0", "table", "Question 2: singers from France?", SINGERS, [["Joe"], ["Li"]])
    prompts = []
    inner = learner({2})
    a = PandoraAgent(FunctionClient(lambda p: (prompts.append(p), inner.generate(p))[1]), EMB)
    before = list(m0.entries)
    m = a.adapt_tasks([table_ex], m0)
    assert count_demo_blocks(prompts[0]) == 2
    assert "Logical Form:" not in prompts[0]
    assert [e.entry_id for e in m] == ["db0", "db1", "t0"]
    assert m.get("t0").task_tag == "table"
    assert m0.entries == before and len(m0) == 2
    assert [e.entry_id for e in a.adapt_tasks([], m0)] == ["db0", "db1"]


def test_adapt_tasks_stores_kg_entries_and_rejects_empty_memory():
    kg = KnowledgeGraph([("m.a", "type.object.type", "T"), ("m.a", "r", "m.b")])
    ex = Example("k0", "kg", "Question 0: what does m.a relate to?", KGSource(kg, ("m.a",)), [["m.b"]])
    m0 = PandoraAgent(learner({0}), EMB).init_memory(db_examples(1))
    a = PandoraAgent(FunctionClient(lambda p: reply("result = [[x] for x in T['r']]")), EMB)
    m = a.adapt_tasks([ex], m0)
    assert m.get("k0").task_tag == "kg"
    with pytest.raises(EmptyMemory):
        a.adapt_tasks([ex], MemoryStore(EMB.dim))


def test_schema_text_matches_prompt_schema():
    m0 = PandoraAgent(learner({0}), EMB).init_memory(db_examples(1))
    assert m0.entries[0].schema_text.startswith("Schema:\nsinger = pd.DataFrame(")
    assert "singer" in render_schema(PandoraAgent(learner(set()), EMB).to_boxset(DB, "q"))
