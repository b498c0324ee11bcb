"""``pandora`` command line: convert, memory init|adapt, run, eval.

Exit codes: 0 success, 1 user or configuration error, 2 environment
failure (sandbox, model or embedding service), 130 interrupted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import memory as memory_io
from .agent import FATAL_ERRORS, PandoraAgent
from .box import BoxSet, render_schema, write_boxset
from .config import RunConfig, load_config, make_embedder, make_model
from .converters import SubgraphSpec, database_to_boxset, kg_to_boxset, prune_relations, table_to_box
from .datasets import load_dataset, load_knowledge
from .errors import ConfigError, PandoraError
from .evalkit import METRICS, run_benchmark

logger = logging.getLogger("pandora")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run configuration (.yaml, .toml or .json)")
    p.add_argument("--seed", type=int, help="random seed for sampling and random demos")
    p.add_argument("--workers", type=int, help="parallel questions")
    p.add_argument("--timeout", type=float, help="sandbox timeout in seconds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-eg", action="store_true", help="disable execution-guided correction")
    p.add_argument("--same-task-demos", action="store_true", help="retrieve demos from the same task only")
    p.add_argument("--random-demos", action="store_true", help="pick demos at random instead of by similarity")
    p.add_argument("--zero-shot", action="store_true", help="no demonstrations")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pandora", description="Structured-knowledge question answering with pandas code.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a table, database or KG into box files")
    p.add_argument("input", help="table CSV, database directory or KG triples TSV")
    p.add_argument("--kind", required=True, choices=("table", "db", "kg"))
    p.add_argument("--topic", action="append", default=[], help="KG topic entity (repeatable)")
    p.add_argument("--hops", type=int, help="KG hop limit")
    p.add_argument("--question", help="prune KG relations against this question")
    _common(p)

    p = sub.add_parser("memory", help="build or extend the demonstration memory")
    p.add_argument("stage", choices=("init", "adapt"))
    p.add_argument("--dataset", help="training dataset JSONL")
    p.add_argument("--memory", help="initial memory JSONL (adapt)")
    _common(p)

    p = sub.add_parser("run", help="answer one question or a dataset")
    p.add_argument("--question")
    p.add_argument("--knowledge", help="knowledge source for --question")
    p.add_argument("--task", choices=("table", "db", "kg"))
    p.add_argument("--topic", action="append", default=[])
    p.add_argument("--dataset")
    p.add_argument("--memory")
    _common(p)

    p = sub.add_parser("eval", help="score a dataset and write report files")
    p.add_argument("--dataset")
    p.add_argument("--memory")
    _common(p)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    a = cfg.agent
    if args.seed is not None:
        a.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.timeout is not None:
        if args.timeout <= 0:
            raise ConfigError("--timeout must be positive")
        cfg.sandbox.timeout = args.timeout
    if args.out:
        cfg.out = args.out
    a.no_eg = a.no_eg or args.no_eg
    a.same_task_only = a.same_task_only or args.same_task_demos
    a.random_retrieval = a.random_retrieval or args.random_demos
    a.zero_shot = a.zero_shot or args.zero_shot
    for name in ("dataset", "memory"):
        value = getattr(args, name, None)
        if value:
            setattr(cfg, name, value)
    return cfg.validate()


def _load_memory(cfg: RunConfig, embedder, required: bool = False):
    if not cfg.memory:
        if required:
            raise ConfigError("a memory file is required (--memory)")
        return None
    if not Path(cfg.memory).is_file():
        raise ConfigError(f"{cfg.memory}: memory file not found")
    store = memory_io.load(cfg.memory)
    if store.embedding_dim != embedder.dim:
        raise ConfigError(f"memory has {store.embedding_dim}-d embeddings but the embedder produces {embedder.dim}-d")
    if store.embedder_id and store.embedder_id != embedder.embedder_id:
        logger.warning("memory was built with %s, embedding queries with %s", store.embedder_id, embedder.embedder_id)
    return store


def _agent(cfg: RunConfig, memory=None, transcripts: Optional[Path] = None) -> PandoraAgent:
    return PandoraAgent(make_model(cfg.model), make_embedder(cfg.embedder), memory, cfg.agent, cfg.sandbox,
                        transcript_dir=transcripts)


def cmd_convert(args, cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if args.kind == "kg":
        if not args.topic:
            raise ConfigError("--kind kg needs at least one --topic")
        source = load_knowledge("kg", args.input, args.topic)
        relations = source.kg.relations
        if args.question:
            relations = prune_relations(source.kg, args.question, cfg.agent.k_rel, make_embedder(cfg.embedder))
        spec = SubgraphSpec(source.topic_entities, args.hops or cfg.agent.hop_limit, tuple(relations))
        box_set = kg_to_boxset(source.kg, spec, consolidate=cfg.agent.consolidate)
    else:
        knowledge = load_knowledge(args.kind, args.input)
        box_set = BoxSet((table_to_box(knowledge),)) if args.kind == "table" else database_to_boxset(knowledge)
    write_boxset(box_set, out / "boxes", fk_path=out / "foreign_keys.json")
    (out / "schema.txt").write_text(render_schema(box_set), encoding="utf-8")
    print(f"wrote {len(box_set)} box(es) and {len(box_set.foreign_keys)} foreign key(s) to {out}")
    return 0


def cmd_memory(args, cfg: RunConfig) -> int:
    if not cfg.dataset:
        raise ConfigError("--dataset is required")
    examples = load_dataset(cfg.dataset)
    out = Path(cfg.out)
    if args.stage == "init":
        agent = _agent(cfg)
        store = agent.init_memory([e for e in examples if e.task == "db"])
        start = 0
    else:
        embedder = make_embedder(cfg.embedder)
        m0 = _load_memory(cfg, embedder, required=True)
        if not len(m0):
            print("error: the initial memory is empty; run `pandora memory init` first", file=sys.stderr)
            return 1
        agent = _agent(cfg)
        start = len(m0)
        store = agent.adapt_tasks([e for e in examples if e.task != "db"], m0)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "memory.jsonl"
    memory_io.save(store, path)
    print(f"retained {len(store) - start}, skipped {len(agent.learning_log)}; memory written to {path}")
    return 0


def cmd_run(args, cfg: RunConfig) -> int:
    out = Path(cfg.out)
    embedder = make_embedder(cfg.embedder)
    store = _load_memory(cfg, embedder)
    agent = PandoraAgent(make_model(cfg.model), embedder, store, cfg.agent, cfg.sandbox, transcript_dir=out / "transcripts")
    if args.question:
        if not (args.knowledge and args.task):
            raise ConfigError("--question needs --knowledge and --task")
        if args.task == "kg" and not args.topic:
            raise ConfigError("kg questions need --topic")
        knowledge = load_knowledge(args.task, args.knowledge, args.topic)
        result = agent.answer(args.question, knowledge, task_tag=args.task, run_id="question")
        for row in result.answer:
            print("\t".join(row))
        if not result.succeeded:
            print(f"no valid answer after {len(result.attempts)} attempt(s)", file=sys.stderr)
        return 0
    if not cfg.dataset:
        raise ConfigError("give --question or --dataset")
    examples = load_dataset(cfg.dataset)
    answers = out / "answers.jsonl"
    out.mkdir(parents=True, exist_ok=True)
    with answers.open("w", encoding="utf-8") as fh:
        for ex in examples:
            result = agent.answer(ex.question, ex.knowledge, task_tag=ex.task, run_id=ex.id)
            fh.write(json.dumps({"id": ex.id, "answer": result.answer, "succeeded": result.succeeded}, ensure_ascii=False) + "\n")
            fh.flush()
    print(f"answered {len(examples)} question(s); transcripts in {out / 'transcripts'}")
    return 0


def format_aggregates(aggregates: dict) -> str:
    lines = [f"{'metric':<8}{'score':>8}"]
    for m in METRICS:
        v = aggregates.get(m)
        lines.append(f"{m:<8}{'-' if v is None else f'{100 * v:.1f}':>8}")
    return "\n".join(lines)


def cmd_eval(args, cfg: RunConfig) -> int:
    if not cfg.dataset:
        raise ConfigError("--dataset is required")
    examples = load_dataset(cfg.dataset)
    out = Path(cfg.out)
    embedder = make_embedder(cfg.embedder)
    store = _load_memory(cfg, embedder)
    agent = PandoraAgent(make_model(cfg.model), embedder, store, cfg.agent, cfg.sandbox, transcript_dir=out / "transcripts")
    report = run_benchmark(examples, agent, workers=cfg.workers, out_dir=out, multiset=cfg.multiset)
    print(format_aggregates(report.aggregates))
    print(f"{len(report.records)} example(s); report written to {out}")
    return 0


COMMANDS = {"convert": cmd_convert, "memory": cmd_memory, "run": cmd_run, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except KeyboardInterrupt:
        print("interrupted; partial outputs were flushed", file=sys.stderr)
        return 130
    except FATAL_ERRORS as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return 2
    except (PandoraError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
