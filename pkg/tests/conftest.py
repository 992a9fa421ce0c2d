import math

import numpy as np
import pytest

from tsvfsim.circuit import Absorber, Circuit, Mixer, Phase, Swap
from tsvfsim.state import StateVector


def random_state(rng, basis):
    """Uniform on the unit sphere: normalized standard complex Gaussian."""
    v = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    return StateVector(tuple(basis), v / np.linalg.norm(v))


def random_step(rng, rails, allow_absorb=False):
    free = list(rails)
    rng.shuffle(free)
    step = []
    while free and rng.random() < 0.7:
        kind = rng.integers(0, 4 if allow_absorb else 3)
        if kind == 0 and len(free) >= 2:
            a, b = free.pop(), free.pop()
            step.append(Mixer(a, b, float(rng.random()), float(rng.uniform(-math.pi, math.pi)) if rng.random() < 0.5 else 0.0))
        elif kind == 1:
            step.append(Phase(free.pop(), float(rng.uniform(-math.pi, math.pi))))
        elif kind == 2 and len(free) >= 2:
            a, b = free.pop(), free.pop()
            step.append(Swap(a, b))
        elif kind == 3:
            step.append(Absorber(free.pop()))
    return step


def random_circuit(rng, n_rails=None, n_steps=None, allow_absorb=False):
    n_rails = n_rails or int(rng.integers(1, 9))
    n_steps = int(rng.integers(0, 11)) if n_steps is None else n_steps
    rails = tuple(f"r{i}" for i in range(n_rails))
    steps = [random_step(rng, rails, allow_absorb) for _ in range(n_steps)]
    return Circuit(rails, steps, random_state(rng, rails), random_state(rng, rails))


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Collect one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _record(line):
        lines.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
