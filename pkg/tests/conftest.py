"""Shared test helpers: the CLI example runner and the acceptance scoreboard."""

import io
import os
import shlex
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path


def execute_cli_examples(root):
    """Run every documented CLI example, in order, inside `root`.

    Returns (summaries, files): the captured stdout of each invocation and
    the bytes of every file left in the directory afterwards.
    """
    from dbspin import cli

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    summaries = []
    previous = Path.cwd()
    os.chdir(root)
    try:
        for entry in cli.EXAMPLES:
            command = entry[1]
            for name, body in (entry[2] if len(entry) > 2 else {}).items():
                Path(name).write_text(body, encoding="utf-8")
            out, err = io.StringIO(), io.StringIO()
            with redirect_stdout(out), redirect_stderr(err):
                code = cli.run(shlex.split(command)[1:])
            assert code == 0, f"{command!r} exited {code}: {err.getvalue()}"
            summaries.append(out.getvalue())
    finally:
        os.chdir(previous)
    files = {p.name: p.read_bytes() for p in sorted(root.iterdir())}
    return summaries, files


# Acceptance-criteria scoreboard: each criterion test records one verdict,
# and the full list is printed after the test summary.

_SCOREBOARD = []


def record_criterion(label: str, passed: bool) -> None:
    _SCOREBOARD.append((label, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _SCOREBOARD:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed in _SCOREBOARD:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {label}")
