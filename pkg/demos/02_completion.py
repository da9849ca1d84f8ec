"""
Completing a low-rank tensor
============================

Blind completion (weighted nuclear norm, HaLRTC-style) against the consensus
ADMM step that also pulls towards a regression estimate ``A``.
"""

import numpy as np

from trmv.baseline import tc_complete
from trmv.completion import AdmmConfig, admm_complete
from trmv.tensor import ObservationMask

rng = np.random.default_rng(1)
shape = (8, 9, 10)
# incoherent rank-one factors: every entry carries some of the signal
factors = [rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2.0, n) for n in shape]
truth = np.einsum("i,j,k->ijk", *factors)

hidden = rng.choice(truth.size, truth.size // 10, replace=False)
mask = ObservationMask(shape, np.setdiff1d(np.arange(truth.size), hidden))
Y0 = np.where(mask.bitmap(), truth, 0.0)


def rel(Y):
    return np.linalg.norm(Y - truth) / np.linalg.norm(truth)


Y_tc, d_tc = tc_complete(Y0, mask)
print("blind completion: error %.1e after %d iterations" % (rel(Y_tc), d_tc.iterations))

# with an informative target the fit term does most of the work
A = truth + 0.01 * rng.standard_normal(shape)
cfg = AdmmConfig(lam=0.01, max_iter=2000, tol=1e-9)
Y_a, d_a = admm_complete(A, Y0, mask, cfg)
print("with target A:    error %.1e after %d iterations" % (rel(Y_a), d_a.iterations))

# observed entries are never touched
bm = mask.bitmap()
assert np.array_equal(Y_tc[bm], truth[bm]) and np.array_equal(Y_a[bm], truth[bm])

# the residual history shows the primal and dual residuals shrinking together
for k in (0, 9, d_a.iterations - 1):
    print("  iteration %4d  primal %.1e  dual %.1e" % (k + 1, d_a.primal_residual[k], d_a.dual_residual[k]))
