import os
import sys

import numpy as np
import pytest

from .helpers.util import make_problem


sys.path.append(os.path.join(os.path.dirname(__file__), "helpers"))


class ProblemDB:
    """Caches small problems by (network, n, seed, dtype) for the whole session"""

    def __init__(self):
        self.problems = {}

    def __call__(self, name="tiny-mse", n=7, seed=0, dtype=np.float64):
        key = (name, n, seed, np.dtype(dtype).str)
        if key not in self.problems:
            self.problems[key] = make_problem(name, n, seed, dtype)
        return self.problems[key]

    def reset(self):
        self.problems = {}


@pytest.fixture(scope="session")
def problem_db():
    return ProblemDB()


@pytest.fixture(scope="session")
def tiny_mse(problem_db):
    """6->4->3 relu/identity, mean-squared, no bias, N = 36"""
    return problem_db("tiny-mse", 7, 0)


@pytest.fixture(scope="session")
def tiny_ce(problem_db):
    """10->8->6->4 softplus, cross-entropy, augmented bias"""
    return problem_db("tiny-ce", 64, 1)


@pytest.fixture(scope="session")
def desk_problem(problem_db):
    """20->60->12 cross-entropy classifier with N = 1992 on 300 points"""
    return problem_db("desk-classifier", 300, 3)
