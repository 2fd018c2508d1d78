import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sepkit.geometry import VPolytope

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
TRIANGLE = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]])
CUBE = np.array([[x, y, z] for x in (-1.0, 1.0) for y in (-1.0, 1.0) for z in (-1.0, 1.0)])


@pytest.fixture
def square():
    return VPolytope(SQUARE)


@pytest.fixture
def triangle():
    return VPolytope(TRIANGLE)


@pytest.fixture
def cube():
    return VPolytope(CUBE)


def random_polygon(rng, k=7, scale=1.0):
    pts = rng.normal(size=(k, 2)) * scale
    return VPolytope(pts)


def random_polytope3(rng, k=10):
    return VPolytope(rng.normal(size=(k, 3)))


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Record the one-line pass/fail summary of an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> str:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
