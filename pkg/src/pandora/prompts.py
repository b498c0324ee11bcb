"""Prompt construction and model-output parsing.

All builders are pure functions of their arguments. Boxes appear only
through their schema (names, fields, foreign keys); cell values are never
rendered.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .box import BoxSet, render_boxes, render_foreign_keys
from .errors import MalformedOutput

REASONING_INSTRUCTION = """\
You are a skilled data scientist who answers questions by writing Python code with the pandas library.
The knowledge needed for the question is already loaded as pandas DataFrames. Only their names, columns and foreign keys are listed below; the rows are available at run time.

Work through the following steps:
Step 1. Understand the question. Decide whether it asks for a single entity, a list of entities or a number, and split it into small logical steps.
Step 2. Inspect the schema. Locate the DataFrames and columns that hold the relevant information and the foreign keys that connect them.
Step 3. Write the code. Use the examples under ## Examples to see how similar questions map to pandas operations. Solve the question step by step instead of in a single line, and check that brackets and parentheses are balanced. Do not redefine or re-create the DataFrames.
Step 4. Report the answer. Put the final answer in a variable named `result` of type List[List[str]] with one inner list per answer, for example [['Paris']] for one entity, [['Oslo'], ['Bergen']] for several entities and [[42]] for a number.

Reply with one JSON object and nothing else:
{"reasoning": "<how the question is turned into code, step by step>", "code": "<the Python code>"}"""

ANNOTATION_INSTRUCTION = """\
You are a skilled data scientist who answers questions by writing Python code with the pandas library.
The knowledge needed for the question is already loaded as pandas DataFrames. Only their names, columns and foreign keys are listed below; the rows are available at run time.

Work through the following steps:
Step 1. Understand the question. Decide whether it asks for a single entity, a list of entities or a number, and split it into small logical steps.
Step 2. Inspect the schema. Locate the DataFrames and columns that hold the relevant information and the foreign keys that connect them.
Step 3. Study the reference query, when one is given under Logical Form. It was written by an expert for this very question; note its operations, conditions and the columns it touches, and reproduce the same logic.
Step 4. Write the code. Use the examples under ## Examples, when present, to see how similar questions map to pandas operations. Solve the question step by step instead of in a single line. Do not redefine or re-create the DataFrames.
Step 5. Report the answer. Put the final answer in a variable named `result` of type List[List[str]] with one inner list per answer, for example [['Paris']] for one entity, [['Oslo'], ['Bergen']] for several entities and [[42]] for a number.

Reply with one JSON object and nothing else:
{"reasoning": "<how the question is turned into code, step by step>", "code": "<the Python code>"}"""

EG_INSTRUCTION = """\
## Task
The code below was run to answer the question, but it failed: it raised an error, returned an empty result or returned something unexpected. Find out what went wrong using the schema and the execution result, then write a corrected version.

Follow these steps:
Step 1. Re-read the schema and foreign keys. Identify the DataFrames and columns the question needs.
Step 2. Diagnose the failure. Compare the previous code with the execution result and name the cause, such as a wrong column or DataFrame name, a type mismatch, a misused function or faulty logic.
Step 3. Fix the code so that it returns exactly the information the question asks for, nothing missing and nothing extra. Keep the final answer in `result` as a List[List[str]].
Step 4. Reply with one JSON object and nothing else:
{"error": "<your diagnosis and the fix>", "reasoning": "<how the question is turned into code, step by step>", "code": "<the corrected Python code>"}"""

EG_CLOSING = "Think carefully about why the previous code failed, then give the corrected answer."

EMPTY_RESULT_FEEDBACK = "The code ran without raising an error, but `result` was empty."


@dataclass(frozen=True)
class ReasoningOutput:
    rationale: str
    code: str
    error: Optional[str] = None

    def __post_init__(self):
        if not self.code.strip():
            raise MalformedOutput("code is empty")


def render_reasoning_output(out: ReasoningOutput) -> str:
    payload = {"reasoning": out.rationale, "code": out.code}
    if out.error is not None:
        payload = {"error": out.error, **payload}
    return json.dumps(payload, ensure_ascii=False)


_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.S)


def parse_reasoning_output(raw: str) -> ReasoningOutput:
    """Parse a ``{"reasoning": ..., "code": ...}`` reply, fenced or bare."""
    text = raw.strip()
    m = _FENCE.search(text)
    if m:
        text = m.group(1).strip()
    start = text.find("{")
    if start < 0:
        raise MalformedOutput("no JSON object in model output")
    try:
        obj, _ = json.JSONDecoder(strict=False).raw_decode(text, start)
    except ValueError as exc:
        raise MalformedOutput(f"invalid JSON in model output: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedOutput("model output is not a JSON object")
    missing = [k for k in ("reasoning", "code") if not isinstance(obj.get(k), str)]
    if missing:
        raise MalformedOutput(f"model output lacks text field(s): {', '.join(missing)}")
    error = obj.get("error")
    return ReasoningOutput(obj["reasoning"], obj["code"], error if isinstance(error, str) else None)


def schema_block(box_set: BoxSet) -> str:
    fks = render_foreign_keys(box_set) or "(none)"
    return f"Schema:\n{render_boxes(box_set)}\n\nForeign Keys:\n{fks}"


def _demo_block(i: int, demo) -> str:
    answer = json.dumps({"reasoning": demo.rationale, "code": demo.code}, ensure_ascii=False)
    return f"### Example {i}\nQuestion:\n{demo.question}\n\n{demo.schema_text.rstrip()}\n\nAnswer:\n{answer}"


def _examples_section(demos: Sequence) -> str:
    if not demos:
        return ""
    # least similar first so the closest demonstration sits next to the question
    ordered = list(reversed(demos))
    return "## Examples\n\n" + "\n\n".join(_demo_block(i, d) for i, d in enumerate(ordered, 1)) + "\n\n"


def count_demo_blocks(prompt: str) -> int:
    return len(re.findall(r"^### Example \d+$", prompt, flags=re.M))


def build_reasoning_prompt(question: str, box_set: BoxSet, demos: Sequence = ()) -> str:
    """In-context reasoning prompt; ``demos`` are given most similar first."""
    return (
        f"{REASONING_INSTRUCTION}\n\n"
        f"{_examples_section(demos)}"
        f"## Task\n\n{schema_block(box_set)}\n\nQuestion:\n{question}\n\nAnswer:\n"
    )


def build_annotation_prompt(
    question: str,
    knowledge_desc: str,
    box_set: BoxSet,
    logical_label: Optional[str] = None,
    demos: Sequence = (),
) -> str:
    label = f"Logical Form:\n{logical_label}\n\n" if logical_label else ""
    return (
        f"{ANNOTATION_INSTRUCTION}\n\n"
        f"{_examples_section(demos)}"
        f"## Task\n\nQuestion:\n{question}\n\nKnowledge Source:\n{knowledge_desc}\n\n"
        f"{label}{schema_block(box_set)}\n\nAnswer:\n"
    )


def build_eg_prompt(question: str, box_set: BoxSet, prior: ReasoningOutput, feedback: str) -> str:
    if not feedback.strip():
        raise ValueError("execution guidance needs non-empty feedback")
    return (
        f"{EG_INSTRUCTION}\n\n"
        f"{schema_block(box_set)}\n\n"
        f"Question:\n{question}\n\n"
        f"Previous Reasoning:\n{prior.rationale}\n\n"
        f"Previous Code:\n{prior.code}\n\n"
        f"Execution Result:\n{feedback}\n\n"
        f"{EG_CLOSING}\n"
    )


def mismatch_feedback(predicted: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> str:
    return (
        "The code ran, but its answer does not match the expected answer.\n"
        f"Predicted answer: {json.dumps([list(r) for r in predicted], ensure_ascii=False)}\n"
        f"Expected answer: {json.dumps([list(r) for r in gold], ensure_ascii=False)}"
    )


def build_gold_mismatch_prompt(
    question: str,
    box_set: BoxSet,
    prior: ReasoningOutput,
    predicted: Sequence[Sequence[str]],
    gold: Sequence[Sequence[str]],
) -> str:
    from .evalkit import exact_set_match

    if exact_set_match(predicted, gold):
        raise ValueError("predicted answer already matches the gold answer")
    return build_eg_prompt(question, box_set, prior, mismatch_feedback(predicted, gold))
