import numpy as np
import pytest

from ajd.model import JumpDist, ModelSpec, exponential, gaussian


@pytest.fixture
def cir():
    return ModelSpec.cir(1.0, -1.0, 1.0)


@pytest.fixture
def ou():
    return ModelSpec.ou(0.0, -1.0, 2.0)


@pytest.fixture
def cir_jump():
    """1-D jump model with stationary mean 1."""
    return ModelSpec.cir(1.0, -2.0, 1.0, lambda0=1.0, kappa=1.0,
                         jumps=JumpDist.product([exponential(2.0)]))


@pytest.fixture
def transient():
    return ModelSpec.cir(1.0, -1.0, 1.0, lambda0=0.5, kappa=4.0,
                         jumps=JumpDist.product([exponential(2.0)]))


@pytest.fixture
def two_d():
    """One volatility factor driving one gaussian factor, with jumps."""
    return ModelSpec(
        d=2, m=1,
        a=[[0.0, 0.0], [0.0, 1.0]],
        alpha=[[[1.0, 0.3], [0.3, 0.5]], [[0.0, 0.0], [0.0, 0.0]]],
        b=[1.0, 0.5],
        beta=[[-1.0, 0.0], [0.5, -1.0]],
        lambda0=0.5,
        kappa=[1.0, 0.0],
        jumps=JumpDist.product([exponential(2.0), gaussian(0.1, 0.25)]),
    )


def random_stable(rng, d):
    A = rng.normal(size=(d, d))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 1.0)
    return A - shift * np.eye(d)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", "call") != "call":
                continue
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
