"""
Common interface of the approximations compared against the regularized GNH.
"""
from abc import ABC, abstractmethod

import numpy as np

from .backprop import gnh_matvec
from .network import ForwardTrace, LossCurvature, MlpNetwork
from .solvers import cg_solve


class ApproximateOperator(ABC):
    """
    An N x N symmetric operator approximating H + lam I.

    Subclasses implement `matvec`, `solve` and `stored_entries`.
    """

    name = "operator"

    @property
    @abstractmethod
    def size(self):
        pass

    @abstractmethod
    def matvec(self, x):
        pass

    @abstractmethod
    def solve(self, b):
        pass

    @property
    @abstractmethod
    def stored_entries(self):
        pass

    @property
    def compression_rate(self):
        """Stored numbers over N^2"""
        return self.stored_entries / float(self.size) ** 2

    def probe_error(self, reference_matvec, probes=128, seed=0):
        from .hmatrix.compress import probe_error

        return probe_error(self, reference_matvec, probes, seed)


class MatrixFreeGnh(ApproximateOperator):
    """
    The exact operator through `gnh_matvec`, solved by conjugate gradients.
    Nothing is stored beyond the forward trace.
    """

    name = "mf"

    def __init__(
        self,
        net: MlpNetwork,
        trace: ForwardTrace,
        curv: LossCurvature,
        lam=0.0,
        tol=1e-8,
        maxit=None,
        preconditioner=None,
    ):
        self.net = net
        self.trace = trace
        self.curv = curv
        self.lam = float(lam)
        self.tol = tol
        self.maxit = maxit
        self.preconditioner = preconditioner
        self.last_result = None

    @property
    def size(self):
        return self.net.size

    @property
    def stored_entries(self):
        return 0

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        return gnh_matvec(self.net, self.trace, self.curv, x) + self.lam * x

    def solve(self, b):
        self.last_result = cg_solve(
            lambda v: gnh_matvec(self.net, self.trace, self.curv, v),
            b,
            lam=self.lam,
            tol=self.tol,
            maxit=self.maxit,
            preconditioner=self.preconditioner,
        )
        return self.last_result.solution
