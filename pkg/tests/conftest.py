import numpy as np
import pytest

from mjpgibbs import kernels


def random_generator(n, rng, scale=1.0):
    """Dense random rate matrix (column convention)."""
    R = rng.gamma(1.0, scale, size=(n, n))
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=0))
    return R


def mc_tolerance(samples, n_se=3.0):
    """``n_se`` standard errors of the sample mean (iid samples)."""
    x = np.asarray(samples, dtype=float)
    return n_se * x.std(ddof=1) / np.sqrt(x.shape[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available())
def backend(request):
    return request.param


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    """``record(number, ok, detail)`` prints one pass/fail line per criterion."""

    def record(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
