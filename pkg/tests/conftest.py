import numpy as np
import pytest

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rel_fro(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


def record(cid: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[cid] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {cid:2d}: {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {cid:2d}: {detail}")
