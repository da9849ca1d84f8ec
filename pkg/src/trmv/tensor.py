"""
Dense multilinear algebra on numpy arrays.

Tensors are plain ``float64`` ndarrays. Modes are numbered from 0, like numpy
axes. Two orderings are fixed here and used everywhere else in the package:

* **Linearization** (flat storage, file format, mask indices) is row-major:
  the last index varies fastest, i.e. ``np.ravel_multi_index`` with its
  default ``order='C'``.
* **Mode-k unfolding** follows Kolda & Bader (2009): entry
  ``(i_0, ..., i_{n-1})`` lands in row ``i_k`` and column
  ``sum_{m != k} i_m * J_m`` with ``J_m = prod_{l < m, l != k} P_l``, so the
  remaining indices enumerate with the *lowest* mode varying fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_tensor",
    "matricize",
    "fold",
    "mode_product",
    "multi_mode_product",
    "contract",
    "batched_contract",
    "frobenius_norm",
    "inner_product",
    "ObservationMask",
    "project_mask",
]


def as_tensor(data) -> np.ndarray:
    """Return ``data`` as a float64 array with at least one mode."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError("a tensor needs at least one mode")
    if 0 in arr.shape:
        raise ValueError(f"every dimension must be >= 1, got shape {arr.shape}")
    return arr


def _check_mode(k: int, order: int) -> int:
    if not isinstance(k, (int, np.integer)) or not 0 <= k < order:
        raise IndexError(f"mode {k} out of range for an order-{order} tensor")
    return int(k)


def matricize(T, k: int) -> np.ndarray:
    """Mode-k unfolding, shape ``(P_k, prod of the other dims)``."""
    T = np.asarray(T, dtype=np.float64)
    k = _check_mode(k, T.ndim)
    return np.reshape(np.moveaxis(T, k, 0), (T.shape[k], -1), order="F")


def fold(M, k: int, shape) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    shape = tuple(int(s) for s in shape)
    k = _check_mode(k, len(shape))
    M = np.asarray(M, dtype=np.float64)
    rest = int(np.prod(shape)) // shape[k]
    if M.shape != (shape[k], rest):
        raise ValueError(
            f"matrix of shape {M.shape} cannot fold at mode {k} into {shape}; "
            f"expected {(shape[k], rest)}"
        )
    moved = (shape[k],) + shape[:k] + shape[k + 1:]
    return np.ascontiguousarray(np.moveaxis(np.reshape(M, moved, order="F"), 0, k))


def mode_product(T, U, k: int) -> np.ndarray:
    """Mode-k product ``T x_k U`` with ``U`` of shape ``(K, P_k)``."""
    T = np.asarray(T, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    k = _check_mode(k, T.ndim)
    if U.ndim != 2 or U.shape[1] != T.shape[k]:
        raise ValueError(
            f"matrix of shape {U.shape} does not act on mode {k} of size {T.shape[k]}"
        )
    out = np.tensordot(U, T, axes=(1, k))
    return np.ascontiguousarray(np.moveaxis(out, 0, k))


def multi_mode_product(T, matrices, modes=None, transpose: bool = False) -> np.ndarray:
    """Apply a sequence of mode products. ``None`` entries are skipped.

    With ``transpose=True`` each matrix is transposed first, which is the
    projection ``T x_1 U_1^T ... x_n U_n^T`` used to compute Tucker cores.
    """
    out = np.asarray(T, dtype=np.float64)
    if modes is None:
        modes = range(len(matrices))
    for U, k in zip(matrices, modes):
        if U is None:
            continue
        out = mode_product(out, U.T if transpose else U, k)
    return out


def contract(X, B) -> np.ndarray:
    """Contraction ``B * X``: sum over all modes of ``X`` against the leading
    modes of ``B``. Result has the trailing shape of ``B``."""
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    l = X.ndim
    if B.ndim < l or B.shape[:l] != X.shape:
        raise ValueError(f"leading shape of B {B.shape} does not match X {X.shape}")
    return np.tensordot(X, B, axes=l)


def batched_contract(X, B) -> np.ndarray:
    """Contraction applied per sample along the leading mode of ``X``.

    ``X`` has shape ``(m, P_1, ..., P_l)`` and ``B`` shape
    ``(P_1, ..., P_l, Q_1, ..., Q_d)``; the result is ``(m, Q_1, ..., Q_d)``.
    """
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    l = X.ndim - 1
    if l < 1 or B.ndim < l or B.shape[:l] != X.shape[1:]:
        raise ValueError(
            f"leading shape of B {B.shape} does not match per-sample input {X.shape[1:]}"
        )
    m = X.shape[0]
    P = int(np.prod(X.shape[1:]))
    out = X.reshape(m, P) @ B.reshape(P, -1)
    return out.reshape((m,) + B.shape[l:])


def frobenius_norm(T) -> float:
    return float(np.linalg.norm(np.ravel(np.asarray(T, dtype=np.float64))))


def inner_product(A, B) -> float:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))


@dataclass(frozen=True)
class ObservationMask:
    """Set of observed entries of a tensor, stored as sorted linear indices."""

    shape: tuple
    observed: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not shape or min(shape) < 1:
            raise ValueError(f"invalid mask shape {shape}")
        idx = np.array(self.observed, dtype=np.int64).ravel()
        if idx.size:
            if idx[0] < 0 or idx[-1] >= int(np.prod(shape)):
                raise ValueError("mask index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("mask indices must be strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "observed", idx)

    @classmethod
    def full(cls, shape) -> "ObservationMask":
        return cls(shape, np.arange(int(np.prod(shape)), dtype=np.int64))

    @classmethod
    def empty(cls, shape) -> "ObservationMask":
        return cls(shape, np.empty(0, dtype=np.int64))

    @classmethod
    def from_bitmap(cls, bitmap) -> "ObservationMask":
        bitmap = np.asarray(bitmap, dtype=bool)
        return cls(bitmap.shape, np.flatnonzero(bitmap))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def count(self) -> int:
        return int(self.observed.size)

    @property
    def fraction(self) -> float:
        return self.count / self.size

    @property
    def is_full(self) -> bool:
        return self.count == self.size

    def bitmap(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=bool)
        out[self.observed] = True
        return out.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.observed, other.observed)

    def __hash__(self):
        return hash((self.shape, self.observed.tobytes()))


def project_mask(T, mask: ObservationMask) -> np.ndarray:
    """Keep the entries of ``T`` indexed by ``mask`` and zero the rest."""
    T = np.asarray(T, dtype=np.float64)
    if T.shape != mask.shape:
        raise ValueError(f"tensor shape {T.shape} does not match mask shape {mask.shape}")
    out = np.zeros(T.size)
    out[mask.observed] = T.ravel()[mask.observed]
    return out.reshape(T.shape)
