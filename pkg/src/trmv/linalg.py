"""
SVD utilities, singular value thresholding, nuclear norms and HOSVD.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .tensor import matricize, multi_mode_product

__all__ = [
    "SvdError",
    "SvdResult",
    "TuckerFactors",
    "svd",
    "singular_values",
    "svt",
    "matrix_nuclear_norm",
    "tensor_nuclear_norm",
    "check_weights",
    "estimate_rank",
    "hosvd",
    "tucker_rank_estimate",
    "DEFAULT_RANK_RATIO",
]

DEFAULT_RANK_RATIO = 0.95


class SvdError(np.linalg.LinAlgError):
    """SVD did not converge with either LAPACK driver."""


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


def _raw_svd(M: np.ndarray, compute_uv: bool = True):
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    try:
        return np.linalg.svd(M, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower QR-iteration driver succeeds
        try:
            return scipy.linalg.svd(
                M, full_matrices=False, compute_uv=compute_uv, lapack_driver="gesvd"
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SvdError(f"SVD failed to converge on a {M.shape} matrix") from exc


def svd(M) -> SvdResult:
    """Thin SVD with a deterministic sign convention.

    Each singular pair is flipped so that the largest-magnitude entry of the
    left singular vector is positive.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("svd expects a matrix")
    U, s, Vt = _raw_svd(M)
    if U.size:
        pivot = np.abs(U).argmax(axis=0)
        signs = np.sign(U[pivot, np.arange(U.shape[1])])
        signs[signs == 0] = 1.0
        U = U * signs
        Vt = Vt * signs[:, None]
    return SvdResult(U, s, Vt.T)


def singular_values(M) -> np.ndarray:
    return _raw_svd(np.asarray(M, dtype=np.float64), compute_uv=False)


def svt(M, lam: float) -> np.ndarray:
    """Singular value soft-thresholding, the proximal map of ``lam * ||.||_*``."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    M = np.asarray(M, dtype=np.float64)
    U, s, Vt = _raw_svd(M)
    s = s - lam
    r = int(np.count_nonzero(s > 0))
    if r == 0:
        return np.zeros_like(M)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def matrix_nuclear_norm(M) -> float:
    return float(np.sum(singular_values(M)))


def check_weights(weights, n: Optional[int] = None) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).ravel()
    if n is not None and w.size != n:
        raise ValueError(f"expected {n} weights, got {w.size}")
    if w.size == 0 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ValueError(f"weights must be positive and sum to one, got {w}")
    return w


def tensor_nuclear_norm(T, weights, modes: Optional[Sequence[int]] = None) -> float:
    """Weighted sum of the nuclear norms of the mode unfoldings of ``T``.

    ``modes`` selects which unfoldings enter; by default every mode.
    """
    T = np.asarray(T, dtype=np.float64)
    if modes is None:
        modes = range(T.ndim)
    modes = list(modes)
    w = check_weights(weights, len(modes))
    return float(sum(a * matrix_nuclear_norm(matricize(T, k)) for a, k in zip(w, modes)))


def _rank_from_spectrum(s: np.ndarray, ratio: float) -> int:
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    energy = np.asarray(s, dtype=np.float64) ** 2
    total = energy.sum()
    if total == 0:
        return 0
    explained = np.cumsum(energy) / total
    # the tolerance keeps exact ties (e.g. 3/5 == 0.6) on the inclusive side
    return int(np.searchsorted(explained, ratio - 1e-12) + 1)


def estimate_rank(M, ratio: float = DEFAULT_RANK_RATIO) -> int:
    """Smallest ``r`` whose leading singular values explain ``ratio`` of the
    energy (sum of squared singular values). Returns 0 for a zero matrix."""
    return min(_rank_from_spectrum(singular_values(M), ratio), min(np.shape(M)))


@dataclass
class TuckerFactors:
    """Tucker form ``core x_0 U_0 x_1 U_1 ... x_{n-1} U_{n-1}``."""

    core: np.ndarray
    factors: list

    def __post_init__(self):
        self.core = np.asarray(self.core, dtype=np.float64)
        self.factors = [np.asarray(U, dtype=np.float64) for U in self.factors]
        if len(self.factors) != self.core.ndim:
            raise ValueError(
                f"{len(self.factors)} factors for an order-{self.core.ndim} core"
            )
        for k, U in enumerate(self.factors):
            if U.ndim != 2 or U.shape[1] != self.core.shape[k]:
                raise ValueError(
                    f"factor {k} has shape {U.shape}, core mode size is {self.core.shape[k]}"
                )

    @property
    def ranks(self) -> tuple:
        return self.core.shape

    @property
    def shape(self) -> tuple:
        return tuple(U.shape[0] for U in self.factors)

    def reconstruct(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)


def hosvd(T, ranks=None, ratio: Optional[float] = None) -> TuckerFactors:
    """Truncated higher-order SVD.

    Give either explicit per-mode ``ranks`` or an energy ``ratio`` used to
    pick each rank with :func:`estimate_rank`. With neither, ranks are full.
    """
    T = np.asarray(T, dtype=np.float64)
    if ranks is not None and ratio is not None:
        raise ValueError("give ranks or ratio, not both")
    if ranks is not None:
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != T.ndim:
            raise ValueError(f"{len(ranks)} ranks for an order-{T.ndim} tensor")
    factors = []
    for k in range(T.ndim):
        res = svd(matricize(T, k))
        if ranks is not None:
            r = ranks[k]
            if not 1 <= r <= T.shape[k]:
                raise ValueError(f"rank {r} invalid for mode {k} of size {T.shape[k]}")
        elif ratio is not None:
            r = max(1, _rank_from_spectrum(res.singular_values, ratio))
        else:
            r = T.shape[k]
        U = res.U[:, :r]
        if U.shape[1] < r:
            # unfolding has fewer columns than the requested rank
            U = _complete_basis(U, r)
        factors.append(U)
    core = multi_mode_product(T, factors, transpose=True)
    return TuckerFactors(core, factors)


def _complete_basis(U: np.ndarray, r: int) -> np.ndarray:
    """Extend orthonormal columns ``U`` to ``r`` columns deterministically."""
    P = U.shape[0]
    full = np.hstack([U, np.eye(P)])
    Q, _ = np.linalg.qr(full)
    Q[:, : U.shape[1]] = U
    return Q[:, :r]


def tucker_rank_estimate(T, ratio: float = DEFAULT_RANK_RATIO, modes=None) -> tuple:
    """Per-mode rank estimates of ``T`` (optionally restricted to ``modes``)."""
    T = np.asarray(T, dtype=np.float64)
    if not np.any(T):
        raise ValueError("cannot estimate the rank of a zero tensor")
    if modes is None:
        modes = range(T.ndim)
    return tuple(estimate_rank(matricize(T, k), ratio) for k in modes)
