import math
from pathlib import Path

import numpy as np
import pytest

from mirrorgate.generate import random_box_lp, two_var_problem
from mirrorgate.problem import Box
from mirrorgate.prox import make_setup

DATA = Path(__file__).resolve().parent.parent / "data"

_ACCEPTANCE = []


def record_criterion(number, name, passed, detail=""):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}"
    if detail:
        line += f": {detail}"
    _ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def two_var():
    return two_var_problem()


@pytest.fixture
def two_var_file():
    return DATA / "two_var.prob"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_lp():
    return random_box_lp(10, 20, 3, rng=3, hi=0.5)


def box_setup(problem):
    return make_setup(problem.feasible_set)


SQRT2 = math.sqrt(2.0)
