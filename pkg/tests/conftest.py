import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


def random_full_rank(rng, d, n, kappa=None):
    """``d x n`` matrix with prescribed condition number of ``A A^T`` when ``kappa`` is given."""
    if kappa is None:
        return rng.standard_normal((d, n))
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    V, _ = np.linalg.qr(rng.standard_normal((n, d)))
    sv = np.sqrt(np.geomspace(1.0, kappa, d))
    return (U * sv) @ V.T


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
