"""Question answering over tables, databases and knowledge graphs through
a shared dataframe representation and generated pandas code."""

from .agent import AgentConfig, AgentResult, Attempt, PandoraAgent
from .box import NA, Box, BoxSet, ForeignKey, render_schema, sanitize_name
from .converters import (
    Database,
    KGSource,
    KnowledgeGraph,
    SubgraphSpec,
    Table,
    database_to_boxset,
    infer_foreign_keys,
    kg_to_boxset,
    prune_relations,
    table_to_box,
)
from .datasets import Example, TrainingExample, load_dataset
from .evalkit import EvalReport, classify_error, exact_set_match, f1, hit_at_1, normalize, run_benchmark
from .llm import HashingEmbedder, OpenAIClient, ScriptedClient
from .memory import MemoryEntry, MemoryStore, retrieve
from .sandbox import ExecutionOutcome, SandboxConfig, execute

__version__ = "0.1.0"
