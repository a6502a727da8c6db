from .version import __version__

"""
fastgnh
=======

The fastgnh library is separated into three components:
1) Core. Network, forward pass, gradient and matrix-free Gauss-Newton Hessian
(GNH) products, plus the precomputation that gives any single GNH entry in
O(n) work, exactly or by importance sampling.
2) Hierarchical matrices. `fastgnh.hmatrix` compresses the regularized GNH
from an entry oracle, applies it and factorizes it for direct solves;
`fastgnh.baselines` holds the RSVD and K-FAC approximations it is compared
against.
3) Analysis. `fastgnh.analysis` runs the convergence, compression and memory
experiments and returns pandas DataFrames.

The names below are the usual entry points.
"""

from .backprop import dense_gnh_oracle, forward, gnh_matvec, gradient, loss_curvature
from .exceptions import FastGnhError
from .network import Batch, MlpNetwork
from .precompute import entry_exact, precompute
from .sampling import EstimatorConfig, entry_estimate, matrix_estimate
