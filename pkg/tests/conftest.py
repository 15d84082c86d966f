"""Shared fixtures: one full desk-profile run (both variants) per test session."""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from sinrlab.experiment import cli

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Log the verdict of an acceptance criterion; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


@dataclass
class DeskRun:
    out: Path
    seconds: dict = field(default_factory=dict)

    def json(self, name: str) -> dict:
        return json.loads((self.out / name).read_text())


def run_cli(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory) -> DeskRun:
    """Train both desk variants, then run the random and PQS evaluations through the CLI."""
    run = DeskRun(tmp_path_factory.mktemp("desk"))
    for step in ("train", "eval-random", "eval-pqs"):
        for variant in ("geo", "csi"):
            t0 = time.perf_counter()
            code = run_cli(step, "--profile", "desk", "--variant", variant, "--out", run.out)
            run.seconds[(step, variant)] = time.perf_counter() - t0
            assert code == 0, f"{step} --variant {variant} exited with {code}"
    return run
