import contextlib

import pytest

from mvopl.simulation import CoverageConfig, run_coverage_study

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}

# Criteria 1, 2: desk-scale study pinned by the acceptance criteria.
ACCEPTANCE_STUDY = dict(
    target_sigmas=(1.0, 0.5, 0.25, 0.125),
    sample_sizes=tuple(2**k for k in range(3, 13)),
    replications=1000,
    kinds=("snips",),
)


@pytest.fixture
def criterion():
    """Record one acceptance criterion's outcome for the terminal summary."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        try:
            yield
        except BaseException as exc:
            ACCEPTANCE[number] = (title, False, str(exc).splitlines()[0] if str(exc) else "")
            raise
        ACCEPTANCE[number] = (title, True, "")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}"
        if detail:
            line += f"  ({detail[:120]})"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_rows():
    return run_coverage_study(CoverageConfig(20240814, **ACCEPTANCE_STUDY))


@pytest.fixture(scope="session")
def desk_rows():
    """Module defaults (desk scale), SNIPS only."""
    return run_coverage_study(CoverageConfig(20240501, kinds=("snips",)))


def cell(rows, sigma, n, method, kind="snips"):
    (row,) = [
        r for r in rows
        if r.target_sigma == sigma and r.n == n and r.method.value == method and r.kind.value == kind
    ]
    return row
