"""
Tensor algebra in a few lines
=============================

Unfoldings, mode products, contractions and a truncated HOSVD, the pieces
everything else in the package is built from.
"""

import numpy as np

from trmv.linalg import hosvd, svt, tucker_rank_estimate
from trmv.tensor import contract, fold, matricize, mode_product

rng = np.random.default_rng(0)
T = np.arange(24.0).reshape(2, 3, 4)

# mode-k unfolding puts mode k on the rows, the remaining modes column-major
print(matricize(T, 1))
assert np.array_equal(fold(matricize(T, 1), 1, T.shape), T)

# a mode product replaces one dimension
U = rng.standard_normal((5, 3))
print("mode product shape:", mode_product(T, U, 1).shape)  # (2, 5, 4)

# contracting a (2, 3) input with the leading modes of T leaves a length-4 vector
X = rng.standard_normal((2, 3))
print("contraction:", contract(X, T))

# a noisy multilinear rank (2, 2, 2) tensor; the energy-ratio rule finds the rank
core = rng.standard_normal((2, 2, 2))
factors = [np.linalg.qr(rng.standard_normal((n, 2)))[0] for n in (6, 7, 8)]
L = core
for k, Q in enumerate(factors):
    L = mode_product(L, Q, k)
noisy = L + 1e-3 * rng.standard_normal(L.shape)
print("estimated ranks:", tucker_rank_estimate(noisy, 0.999))

approx = hosvd(noisy, ranks=(2, 2, 2)).reconstruct()
print("HOSVD relative error: %.2e" % (np.linalg.norm(approx - L) / np.linalg.norm(L)))

# singular value thresholding shrinks the spectrum and drops small modes
M = rng.standard_normal((5, 4))
print("singular values before:", np.linalg.svd(M, compute_uv=False).round(3))
print("after SVT at 1.0:     ", np.linalg.svd(svt(M, 1.0), compute_uv=False).round(3))
