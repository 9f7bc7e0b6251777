import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def report_criterion(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from rotortree import Generator, load_generator


@pytest.fixture(scope="session")
def appendix():
    return load_generator("appendix")


@pytest.fixture(scope="session")
def subtree():
    return load_generator("appendix_subtree")


@pytest.fixture(scope="session")
def sqrt2():
    return load_generator("sqrt2")


@pytest.fixture(scope="session")
def binary():
    return load_generator("binary")


def random_generator(rng: np.random.Generator, n_max=5, d_max=9, palindromic=False):
    """Random strongly connected word table; a cycle 1 -> 2 -> ... -> 1 is embedded."""
    n = int(rng.integers(1, n_max + 1))
    words = []
    for i in range(n):
        d = int(rng.integers(1, d_max + 1))
        w = list(rng.integers(0, n, size=d))
        w[0] = (i + 1) % n
        if palindromic:
            half = w[: (d + 1) // 2]
            w = half + half[: d // 2][::-1]
        words.append(tuple(int(t) for t in w))
    return Generator(tuple(words))


def lagrange_total_size_moments(probs, n_max=3000):
    """First two moments of the total progeny of a single-type process with
    offspring law ``probs``, from ``P(Y = n) = [s^(n-1)] f(s)^n / n``."""
    f = np.asarray(probs, dtype=float)
    power = np.array([1.0])
    m1 = m2 = 0.0
    for n in range(1, n_max + 1):
        power = np.convolve(power, f)[:n_max]
        p = power[n - 1] / n if n - 1 < power.size else 0.0
        m1 += n * p
        m2 += n * n * p
    return m1, m2
