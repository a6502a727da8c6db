import numpy as np
import pytest

from fastgnh.exceptions import DefinitenessError
from fastgnh.precompute import gnh_diagonal
from fastgnh.solvers import cg_solve, jacobi_preconditioner

from .helpers.util import random_spd


class TestCgSolve:
    def test_solves_spd_system(self):
        a = random_spd(40, 40, 0)
        b = np.random.default_rng(1).standard_normal(40)
        result = cg_solve(lambda v: a @ v, b, tol=1e-12)
        assert result.converged
        assert np.linalg.norm(a @ result.solution - b) <= 1e-10 * np.linalg.norm(b)
        assert len(result.history) == result.iterations

    def test_regularization(self):
        a = random_spd(30, 5, 2, lam=0.0)
        b = np.ones(30)
        result = cg_solve(lambda v: a @ v, b, lam=0.5, tol=1e-12)
        assert np.allclose((a + 0.5 * np.eye(30)) @ result.solution, b, atol=1e-9)

    def test_low_rank_converges_quickly(self):
        # rank 3 plus identity has four distinct eigenvalues
        a = random_spd(50, 3, 4, lam=0.0)
        result = cg_solve(lambda v: a @ v, np.ones(50), lam=1.0, tol=1e-10)
        assert result.converged
        assert result.iterations <= 5

    def test_reports_non_convergence(self):
        a = np.diag(np.logspace(0, 6, 60))
        result = cg_solve(lambda v: a @ v, np.ones(60), tol=1e-12, maxit=3)
        assert not result.converged
        assert result.iterations == 3
        assert result.residual_norm > 0

    def test_zero_rhs(self):
        result = cg_solve(lambda v: v, np.zeros(4))
        assert result.converged
        assert result.iterations == 0
        assert np.all(result.solution == 0)

    def test_initial_guess(self):
        a = random_spd(10, 10, 5)
        b = np.arange(10.0)
        exact = np.linalg.solve(a, b)
        result = cg_solve(lambda v: a @ v, b, tol=1e-12, x0=exact)
        assert result.iterations == 0
        assert np.allclose(result.solution, exact)


class TestJacobi:
    def test_reduces_iterations(self):
        rng = np.random.default_rng(0)
        scales = np.logspace(0, 4, 80)
        g = rng.standard_normal((80, 2))
        a = np.diag(scales) + 0.01 * g @ g.T
        b = rng.standard_normal(80)
        plain = cg_solve(lambda v: a @ v, b, tol=1e-8)
        jacobi = cg_solve(lambda v: a @ v, b, tol=1e-8, preconditioner=jacobi_preconditioner(np.diag(a)))
        assert jacobi.converged
        assert jacobi.iterations < plain.iterations

    def test_gnh_diagonal(self, tiny_ce):
        apply = jacobi_preconditioner(gnh_diagonal(tiny_ce.pre), lam=0.1)
        r = np.ones(tiny_ce.size)
        assert np.allclose(apply(r), 1.0 / (gnh_diagonal(tiny_ce.pre) + 0.1))

    def test_rejects_non_positive(self):
        with pytest.raises(DefinitenessError):
            jacobi_preconditioner([1.0, 0.0])
