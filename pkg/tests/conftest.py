import time

import pytest

# one line per acceptance criterion, filled in by the ``criterion`` fixture
ACCEPTANCE: dict = {}


class Criterion:
    def __init__(self, number: int, title: str, limit: float | None):
        self.number, self.title, self.limit = number, title, limit
        self.checks: list[tuple[str, bool]] = []
        self.start = time.perf_counter()

    def check(self, label: str, ok: bool) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    def finish(self) -> str:
        elapsed = time.perf_counter() - self.start
        if self.limit is not None:
            self.check(f"runtime {elapsed:.2f}s < {self.limit:g}s", elapsed < self.limit)
        ok = all(c for _, c in self.checks) and bool(self.checks)
        failed = [lbl for lbl, c in self.checks if not c]
        detail = "; ".join(lbl for lbl, _ in self.checks) if ok else "failed: " + "; ".join(failed)
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number}: {self.title} ({detail})"
        ACCEPTANCE[self.number] = line
        print(line)
        assert ok, line


@pytest.fixture
def criterion():
    made = []

    def start(number, title, limit=None):
        c = Criterion(number, title, limit)
        made.append(c)
        return c

    return start


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
