"""The question-answering agent and its two learning stages.

Inference: knowledge -> BoxSet -> retrieved demonstrations -> reasoning
prompt -> generated code -> sandbox, with execution-guided corrections while
the outcome is invalid. Learning: annotate labelled database questions into
an initial memory, then annotate table and KG questions using that memory as
demonstrations.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .box import BoxSet
from .converters import Database, KGSource, SubgraphSpec, Table, database_to_boxset, kg_to_boxset, prune_relations, table_to_box
from .datasets import Example, task_of
from .errors import EmptyMemory, EmbeddingUnavailable, MalformedOutput, ModelUnavailable, PandoraError, SandboxSpawnFailure
from .evalkit import exact_set_match
from .memory import TASKS, MemoryEntry, MemoryStore, retrieve
from .prompts import (
    ReasoningOutput,
    build_annotation_prompt,
    build_eg_prompt,
    build_gold_mismatch_prompt,
    build_reasoning_prompt,
    parse_reasoning_output,
    render_reasoning_output,
    schema_block,
)
from .sandbox import ExecutionOutcome, SandboxConfig, execute, feedback_for, is_valid

logger = logging.getLogger(__name__)

GENERATION_TARGETS = ("pandas", "native")
# environment failures abort a run instead of counting as a wrong answer
FATAL_ERRORS = (SandboxSpawnFailure, ModelUnavailable, EmbeddingUnavailable)


def _default_samples() -> dict:
    return {t: 1000 for t in TASKS}


@dataclass
class AgentConfig:
    """Agent hyper-parameters and ablation switches.

    ``n_demos`` is the number of retrieved demonstrations (K),
    ``max_corrections`` the number of execution-guided retries (L) and
    ``hop_limit`` the subgraph radius for KG questions (H).
    """

    n_demos: int = 10
    max_corrections: int = 3
    hop_limit: int = 3
    k_rel: int = 50
    no_eg: bool = False
    same_task_only: bool = False
    random_retrieval: bool = False
    zero_shot: bool = False
    consolidate: bool = True
    annotation_samples: dict = field(default_factory=_default_samples)
    restrict_to_m0: bool = False
    generation_target: str = "pandas"
    seed: int = 0

    def __post_init__(self):
        if self.n_demos < 0 or self.max_corrections < 0:
            raise ValueError("n_demos and max_corrections must be >= 0")
        if self.hop_limit < 1:
            raise ValueError("hop_limit must be >= 1")
        if self.k_rel < 1:
            raise ValueError("k_rel must be >= 1")
        if self.generation_target not in GENERATION_TARGETS:
            raise ValueError(f"generation_target must be one of {GENERATION_TARGETS}")
        samples = _default_samples()
        samples.update(self.annotation_samples or {})
        unknown = set(samples) - set(TASKS)
        if unknown or any(v < 0 for v in samples.values()):
            raise ValueError(f"bad annotation_samples {self.annotation_samples!r}")
        self.annotation_samples = samples


@dataclass
class Attempt:
    kind: str  # reasoning | annotation | eg | gold_mismatch
    prompt: str
    response: str
    output: Optional[ReasoningOutput]
    outcome: ExecutionOutcome

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "prompt": self.prompt,
            "response": self.response,
            "parsed": None if self.output is None else json.loads(render_reasoning_output(self.output)),
            "outcome": self.outcome.to_json(),
        }


@dataclass
class AgentResult:
    question: str
    answer: list[list[str]]
    attempts: list[Attempt]
    succeeded: bool
    task: Optional[str] = None
    demo_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "question": self.question,
            "task": self.task,
            "demos": self.demo_ids,
            "succeeded": self.succeeded,
            "answer": self.answer,
            "attempts": [a.to_json() for a in self.attempts],
        }

    def to_transcript(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=1) + "\n"


def describe_knowledge(knowledge, box_set: BoxSet) -> str:
    names = ", ".join(box_set.names)
    if isinstance(knowledge, KGSource):
        return f"a knowledge graph subgraph around {', '.join(knowledge.topic_entities)} (boxes: {names})"
    if isinstance(knowledge, Table):
        return f"a single table ({names})"
    return f"a relational database with tables {names}"


def _sample(examples: Sequence[Example], n: int, rng: random.Random) -> list[Example]:
    if n >= len(examples):
        return list(examples)
    keep = sorted(rng.sample(range(len(examples)), n))
    return [examples[i] for i in keep]


class PandoraAgent:
    def __init__(self, model, embedder, memory: Optional[MemoryStore] = None,
                 config: Optional[AgentConfig] = None, sandbox: Optional[SandboxConfig] = None,
                 transcript_dir: str | Path | None = None):
        self.model = model
        self.embedder = embedder
        self.config = config or AgentConfig()
        self.memory = memory
        self.sandbox = sandbox or SandboxConfig()
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        # one record per skipped learning example: {"id", "reason"}
        self.learning_log: list[dict] = []

    def config_snapshot(self) -> dict:
        return dataclasses.asdict(self.config)

    # -- inference ------------------------------------------------------------

    def to_boxset(self, knowledge, question: str) -> BoxSet:
        if isinstance(knowledge, BoxSet):
            return knowledge
        if isinstance(knowledge, Table):
            return BoxSet((table_to_box(knowledge),))
        if isinstance(knowledge, Database):
            return database_to_boxset(knowledge)
        if isinstance(knowledge, KGSource):
            relations = prune_relations(knowledge.kg, question, self.config.k_rel, self.embedder)
            spec = SubgraphSpec(knowledge.topic_entities, self.config.hop_limit, tuple(relations))
            return kg_to_boxset(knowledge.kg, spec, consolidate=self.config.consolidate)
        raise TypeError(f"unsupported knowledge source {type(knowledge).__name__}")

    def demonstrations(self, question: str, task: str) -> list[MemoryEntry]:
        cfg = self.config
        if cfg.zero_shot or self.memory is None or not len(self.memory):
            return []
        # per-question generator keeps random retrieval independent of run order
        rng = random.Random(f"{cfg.seed}:{question}")
        return retrieve(self.memory, question, cfg.n_demos, self.embedder, task_tag=task,
                        same_task_only=cfg.same_task_only, random_mode=cfg.random_retrieval, rng=rng)

    def answer(self, question: str, knowledge, task_tag: Optional[str] = None,
               run_id: Optional[str] = None) -> AgentResult:
        if self.config.generation_target != "pandas":
            raise NotImplementedError("only pandas code generation is implemented")
        task = task_tag or task_of(knowledge)
        box_set = self.to_boxset(knowledge, question)
        demos = self.demonstrations(question, task)
        prompt = build_reasoning_prompt(question, box_set, demos)
        budget = 1 if self.config.no_eg else 1 + self.config.max_corrections
        attempts, ok = self._loop(question, box_set, prompt, "reasoning", budget)
        answer = attempts[-1].outcome.answer if ok else []
        result = AgentResult(question, answer, attempts, ok, task, [d.entry_id for d in demos])
        if self.transcript_dir is not None and run_id is not None:
            self.transcript_dir.mkdir(parents=True, exist_ok=True)
            (self.transcript_dir / f"{run_id}.json").write_text(result.to_transcript(), encoding="utf-8")
        return result

    def _loop(self, question: str, box_set: BoxSet, prompt: str, kind: str, budget: int,
              gold: Optional[list] = None) -> tuple[list[Attempt], bool]:
        """Generate, execute and correct until valid (and gold-matching, if given)."""
        attempts: list[Attempt] = []
        for i in range(budget):
            raw = self.model.generate(prompt)
            try:
                out = parse_reasoning_output(raw)
                outcome = execute(out.code, box_set, self.sandbox)
            except MalformedOutput as exc:
                out = None
                outcome = ExecutionOutcome("error", error_text=f"the reply could not be parsed: {exc}")
            attempts.append(Attempt(kind, prompt, raw, out, outcome))
            prior = out or ReasoningOutput("(the previous reply could not be parsed)", raw.strip() or "(empty reply)")
            if is_valid(outcome):
                if gold is None or exact_set_match(outcome.answer, gold):
                    return attempts, True
                kind = "gold_mismatch"
                prompt = build_gold_mismatch_prompt(question, box_set, prior, outcome.answer, gold)
            else:
                kind = "eg"
                prompt = build_eg_prompt(question, box_set, prior, feedback_for(outcome))
        return attempts, False

    # -- learning -------------------------------------------------------------

    def annotate(self, example: Example, demos: Sequence[MemoryEntry] = (),
                 use_label: bool = True) -> Optional[MemoryEntry]:
        """Produce a verified memory entry for ``example`` or None.

        The generated code must execute and reproduce the gold answer within
        the correction budget; otherwise the example is skipped.
        """
        if example.gold is None:
            raise ValueError(f"example {example.id!r} has no gold answer")
        try:
            box_set = self.to_boxset(example.knowledge, example.question)
            label = example.logical_label if use_label else None
            prompt = build_annotation_prompt(example.question, describe_knowledge(example.knowledge, box_set),
                                             box_set, label, demos)
            attempts, ok = self._loop(example.question, box_set, prompt, "annotation",
                                      1 + self.config.max_corrections, gold=example.gold)
        except FATAL_ERRORS:
            raise
        except PandoraError as exc:
            self._skip(example, f"{type(exc).__name__}: {exc}")
            return None
        if not ok:
            self._skip(example, f"no gold-matching code after {len(attempts)} attempts")
            return None
        out = attempts[-1].output
        embedding = self.embedder.embed([example.question])[0]
        return MemoryEntry(example.id, example.question, schema_block(box_set), out.rationale, out.code,
                           example.task, tuple(embedding))

    def _skip(self, example: Example, reason: str) -> None:
        logger.info("skipping %s: %s", example.id, reason)
        self.learning_log.append({"id": example.id, "reason": reason})

    def _new_store(self) -> MemoryStore:
        return MemoryStore(self.embedder.dim, self.embedder.embedder_id)

    def init_memory(self, examples: Sequence[Example]) -> MemoryStore:
        """Stage one: annotate labelled database questions with zero demos."""
        rng = random.Random(self.config.seed)
        store = self._new_store()
        for ex in _sample(list(examples), self.config.annotation_samples["db"], rng):
            entry = self.annotate(ex, (), use_label=True)
            if entry is not None:
                self._store(store, entry)
        return store

    def adapt_tasks(self, examples: Sequence[Example], m0: MemoryStore) -> MemoryStore:
        """Stage two: annotate table/KG questions using stored entries as demos.

        Returns a new store holding ``m0`` followed by accepted entries; ``m0``
        itself is left untouched. Logical labels are not used.
        """
        if not len(m0):
            raise EmptyMemory("adaptation needs a non-empty initial memory")
        store = m0.copy()
        pool = m0 if self.config.restrict_to_m0 else store
        rng = random.Random(self.config.seed)
        chosen: set[int] = set()
        for task in TASKS:
            idx = [i for i, ex in enumerate(examples) if ex.task == task]
            n = self.config.annotation_samples[task]
            chosen.update(idx if n >= len(idx) else rng.sample(idx, n))
        for i in sorted(chosen):
            ex = examples[i]
            demos = retrieve(pool, ex.question, self.config.n_demos, self.embedder)
            entry = self.annotate(ex, demos, use_label=False)
            if entry is not None:
                self._store(store, entry)
        return store

    def _store(self, store: MemoryStore, entry: MemoryEntry) -> None:
        if entry.entry_id in store:
            logger.warning("duplicate memory id %s ignored", entry.entry_id)
            self.learning_log.append({"id": entry.entry_id, "reason": "duplicate id"})
            return
        store.add(entry)
