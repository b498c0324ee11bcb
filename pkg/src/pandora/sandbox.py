"""Out-of-process execution of generated pandas code against a BoxSet."""

from __future__ import annotations

import inspect
import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .box import BoxSet, _parse_value_table, sanitize_name, write_boxset
from .errors import SandboxSpawnFailure

STATUSES = ("ok", "error", "empty", "timeout", "malformed_result")
MALFORMED_FEEDBACK = "result variable missing or not a list of rows"
MAX_TRACE_CHARS = 4000


@dataclass
class SandboxConfig:
    interpreter: list[str] = field(default_factory=lambda: [sys.executable, "{script}"])
    timeout: float = 30.0
    workdir_root: Optional[str] = None
    memory_mb: Optional[int] = None
    max_concurrency: int = 4
    keep_workdirs: bool = False

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("sandbox timeout must be positive")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@dataclass
class ExecutionOutcome:
    status: str
    answer: list[list[str]] = field(default_factory=list)
    error_text: Optional[str] = None
    duration: float = 0.0
    stdout: str = ""
    workdir: Optional[str] = None

    def to_json(self) -> dict:
        # duration and workdir vary between runs; transcripts omit them
        return {"status": self.status, "answer": self.answer, "error": self.error_text, "stdout": self.stdout}


def is_valid(outcome: ExecutionOutcome) -> bool:
    return outcome.status == "ok"


def feedback_for(outcome: ExecutionOutcome) -> str:
    from .prompts import EMPTY_RESULT_FEEDBACK

    if outcome.status == "empty":
        return EMPTY_RESULT_FEEDBACK
    return outcome.error_text or ""


_PREAMBLE_HEAD = '''\
import json as __pandora_json
import pandas as pd

'''

_LOADER = '''
def __pandora_load(path):
    with open(path, encoding="utf-8", newline="") as fh:
        records = _parse_value_table(fh.read(), None)
    header = ["NA" if h is None else h for h in records[0]]
    return pd.DataFrame(records[1:], columns=header, dtype=object)

'''

_EPILOGUE = '''

# ---- pandora epilogue ----
def __pandora_text(v):
    if not isinstance(v, (str, bytes)) and hasattr(v, "item"):
        try:
            v = v.item()
        except Exception:
            pass
    if isinstance(v, float):
        return repr(v)
    return str(v)


def __pandora_export(namespace):
    if "result" not in namespace:
        reason = "variable `result` is not defined"
    else:
        res = namespace["result"]
        if isinstance(res, (list, tuple)) and all(isinstance(r, (list, tuple)) for r in res):
            rows = [[__pandora_text(v) for v in r] for r in res]
            with open("result.json", "w", encoding="utf-8") as fh:
                __pandora_json.dump(rows, fh, ensure_ascii=False)
            return
        reason = "`result` has type %s, expected a list of lists" % type(res).__name__
    with open("malformed.txt", "w", encoding="utf-8") as fh:
        fh.write(reason)


__pandora_export(globals())
'''


def build_script(code: str, box_set: BoxSet) -> str:
    """Preamble that loads every box, the code verbatim, then the epilogue."""
    parts = [_PREAMBLE_HEAD, inspect.getsource(_parse_value_table), _LOADER]
    names = [sanitize_name(b.name) for b in box_set.boxes]
    for var in names:
        parts.append(f"{var} = __pandora_load({f'boxes/{var}.csv'!r})\n")
    if len(names) == 1 and names[0] != "df":
        parts.append(f"df = {names[0]}\n")
    parts.append("# ---- generated code ----\n")
    parts.append(code.rstrip("\n") + "\n")
    parts.append(_EPILOGUE)
    return "".join(parts)


_semaphores: dict[int, threading.BoundedSemaphore] = {}
_sem_lock = threading.Lock()


def _semaphore(n: int) -> threading.BoundedSemaphore:
    with _sem_lock:
        if n not in _semaphores:
            _semaphores[n] = threading.BoundedSemaphore(n)
        return _semaphores[n]


def _limits(memory_mb: Optional[int]):
    if not memory_mb:
        return None

    def apply():
        import resource

        cap = memory_mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))

    return apply


def _tail(text: str) -> str:
    text = text.strip()
    return text if len(text) <= MAX_TRACE_CHARS else "..." + text[-MAX_TRACE_CHARS:]


def execute(code: str, box_set: BoxSet, cfg: Optional[SandboxConfig] = None,
            workdir: str | Path | None = None) -> ExecutionOutcome:
    """Run ``code`` in a fresh interpreter process with the boxes preloaded.

    The process works inside its own directory (``boxes/*.csv``,
    ``foreign_keys.json``, ``script.txt``, ``result.json``, ``stderr.txt``).
    Only ``result.json`` is read back for the answer; stdout is kept for the
    transcript.
    """
    if not code.strip():
        raise ValueError("code must be non-empty")
    cfg = cfg or SandboxConfig()
    own_dir = workdir is None
    if own_dir:
        root = Path(cfg.workdir_root or Path(tempfile.gettempdir()) / "pandora-sandbox")
        root.mkdir(parents=True, exist_ok=True)
        wd = Path(tempfile.mkdtemp(prefix="exec-", dir=root))
    else:
        wd = Path(workdir)
        if wd.exists() and any(wd.iterdir()):
            raise SandboxSpawnFailure(f"working directory {wd} is not empty")
        wd.mkdir(parents=True, exist_ok=True)
    try:
        return _run(code, box_set, cfg, wd)
    finally:
        if own_dir and not cfg.keep_workdirs:
            shutil.rmtree(wd, ignore_errors=True)


def _run(code: str, box_set: BoxSet, cfg: SandboxConfig, wd: Path) -> ExecutionOutcome:
    write_boxset(box_set, wd / "boxes", fk_path=wd / "foreign_keys.json")
    (wd / "script.txt").write_text(build_script(code, box_set), encoding="utf-8")
    argv = [a.replace("{script}", "script.txt") for a in cfg.interpreter]
    env = dict(os.environ, PYTHONHASHSEED="0", PYTHONIOENCODING="utf-8", OPENBLAS_NUM_THREADS="1",
               PYTHONDONTWRITEBYTECODE="1")
    wd_text = str(wd) if cfg.keep_workdirs else None

    with _semaphore(cfg.max_concurrency):
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv, cwd=wd, env=env, stdin=subprocess.DEVNULL, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, start_new_session=True, preexec_fn=_limits(cfg.memory_mb),
            )
        except OSError as exc:
            raise SandboxSpawnFailure(f"cannot start interpreter {argv[0]!r}: {exc}") from exc
        try:
            out, err = proc.communicate(timeout=cfg.timeout)
            timed_out = False
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            out, err = proc.communicate()
            timed_out = True
        duration = time.monotonic() - start

    stdout = out.decode("utf-8", "replace")
    stderr = err.decode("utf-8", "replace")
    # tracebacks name the script by absolute path; keep feedback run-independent
    for prefix in {str(wd) + os.sep, str(wd.resolve()) + os.sep}:
        stderr = stderr.replace(prefix, "")
    (wd / "stderr.txt").write_text(stderr, encoding="utf-8")
    common = dict(duration=duration, stdout=stdout, workdir=wd_text)
    if timed_out:
        return ExecutionOutcome("timeout", error_text=f"execution exceeded {cfg.timeout:g} seconds", **common)
    if proc.returncode != 0:
        return ExecutionOutcome("error", error_text=_tail(stderr) or f"interpreter exited with status {proc.returncode}", **common)
    malformed = wd / "malformed.txt"
    result_file = wd / "result.json"
    if malformed.exists():
        detail = malformed.read_text(encoding="utf-8")
        return ExecutionOutcome("malformed_result", error_text=f"{MALFORMED_FEEDBACK}: {detail}", **common)
    if not result_file.exists():
        return ExecutionOutcome("malformed_result", error_text=f"{MALFORMED_FEEDBACK}: program exited before `result` was read", **common)
    rows = json.loads(result_file.read_text(encoding="utf-8"))
    if not rows or all(len(r) == 0 for r in rows):
        return ExecutionOutcome("empty", answer=rows, **common)
    return ExecutionOutcome("ok", answer=rows, **common)
