import json
import sys
import time

import pytest

from pandora.box import NA, Box, BoxSet, ForeignKey
from pandora.errors import SandboxSpawnFailure
from pandora.prompts import EMPTY_RESULT_FEEDBACK
from pandora.sandbox import SandboxConfig, build_script, execute, feedback_for

BOOKS = BoxSet(
    (
        Box.from_rows("book", ("title", "author_id", "year"), [("Casual Vacancy", "a1", "2012"), ("Ickabog", "a1", "2020"), ("Dune", "a2", NA)]),
        Box.from_rows("author", ("id", "name"), [("a1", "J. K. Rowling"), ("a2", "Frank Herbert")]),
    ),
    (ForeignKey(("book", "author_id"), ("author", "id")),),
)


def run(code, box_set=BOOKS, **cfg):
    return execute(code, box_set, SandboxConfig(**cfg))


def test_merge_and_filter():
    code = (
        "merged = book.merge(author, left_on='author_id', right_on='id')\n"
        "hits = merged[(merged['name'] == 'J. K. Rowling') & (merged['year'] == '2012')]\n"
        "result = [[t] for t in hits['title']]\n"
    )
    out = run(code)
    assert out.status == "ok"
    assert out.answer == [["Casual Vacancy"]]


def test_values_are_text_and_na_is_missing():
    out = run("result = [[str(book['year'].isna().sum()), type(book['year'][0]).__name__]]")
    assert out.answer == [["1", "str"]]


def test_single_box_alias_and_stdout():
    one = BoxSet((Box.from_rows("Table", ("a",), [("1",), ("2",)]),))
    out = run("print('hello')\nresult = [[len(df)]]", one)
    assert out.answer == [["2"]]
    assert out.stdout == "hello\n"


def test_scalar_coercion():
    out = run("import numpy as np\nresult = [[np.int64(3), 1.5, True, None, np.float64(2.0)]]")
    assert out.answer == [["3", "1.5", "True", "None", "2.0"]]


@pytest.mark.parametrize(
    "code, status",
    [
        ("result = []", "empty"),
        ("result = [[]]", "empty"),
        ("result = 3", "malformed_result"),
        ("result = ['a', 'b']", "malformed_result"),
        ("x = 1", "malformed_result"),
        ("import sys\nsys.exit(0)", "malformed_result"),
        ("result = book['missing']", "error"),
        ("raise SystemExit(3)", "error"),
    ],
)
def test_status_classification(code, status):
    assert run(code).status == status


def test_error_trace_is_run_independent():
    a, b = run("result = undefined_box[0]"), run("result = undefined_box[0]")
    assert a.status == "error"
    assert "NameError: name 'undefined_box' is not defined" in a.error_text
    assert a.error_text == b.error_text
    assert "pandora-sandbox" not in a.error_text


def test_timeout_kills_the_process():
    start = time.monotonic()
    out = run("while True:\n    pass", timeout=1.0)
    assert out.status == "timeout"
    assert time.monotonic() - start < 1.0 + 2.0
    assert "1 seconds" in out.error_text


def test_feedback_for():
    assert feedback_for(run("result = []")) == EMPTY_RESULT_FEEDBACK
    assert "KeyError" in feedback_for(run("result = book['nope']"))


def test_workdir_contents(tmp_path):
    wd = tmp_path / "attempt"
    out = execute("result = [['x']]", BOOKS, workdir=wd)
    assert out.status == "ok"
    assert sorted(p.name for p in wd.iterdir()) == ["boxes", "foreign_keys.json", "result.json", "script.txt", "stderr.txt"]
    assert json.loads((wd / "foreign_keys.json").read_text()) == [{"left": ["book", "author_id"], "right": ["author", "id"]}]
    with pytest.raises(SandboxSpawnFailure):
        execute("result = [['x']]", BOOKS, workdir=wd)


def test_temp_workdirs_are_removed(tmp_path):
    execute("result = [['x']]", BOOKS, SandboxConfig(workdir_root=str(tmp_path)))
    assert list(tmp_path.iterdir()) == []
    kept = execute("result = [['x']]", BOOKS, SandboxConfig(workdir_root=str(tmp_path), keep_workdirs=True))
    assert kept.workdir is not None and len(list(tmp_path.iterdir())) == 1


def test_spawn_failure():
    with pytest.raises(SandboxSpawnFailure):
        execute("result = [['x']]", BOOKS, SandboxConfig(interpreter=["/nonexistent/python", "{script}"]))


def test_script_layout():
    script = build_script("result = [['x']]", BOOKS)
    assert "book = __pandora_load('boxes/book.csv')" in script
    assert "df = " not in script
    assert script.index("result = [['x']]") < script.index("pandora epilogue")
    with pytest.raises(ValueError):
        execute("   ", BOOKS)


def test_config_validation():
    with pytest.raises(ValueError):
        SandboxConfig(timeout=0)
    with pytest.raises(ValueError):
        SandboxConfig(max_concurrency=0)
    assert SandboxConfig().interpreter[0] == sys.executable
