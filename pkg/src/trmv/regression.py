"""
Tucker-constrained coefficient estimation for tensor-on-tensor regression.

A coefficient tensor ``B`` maps a per-sample input of shape ``(P_1..P_l)``
to an output of shape ``(Q_1..Q_d)`` and is kept in Tucker form

    B = C x_0 U_1 ... x_{l-1} U_l x_l V_1 ... x_{l+d-1} V_d

The input bases ``U`` are learned once from the inputs alone. The core ``C``
and the orthonormal output bases ``V`` are fitted by alternating least
squares: an ordinary least squares solve for the core in reduced
coordinates, then an orthogonal Procrustes update for each ``V``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .linalg import TuckerFactors, _rank_from_spectrum, svd
from .tensor import batched_contract, matricize, mode_product, multi_mode_product

__all__ = [
    "CoefficientTensor",
    "AlsResult",
    "learn_input_bases",
    "reduce_inputs",
    "als_bcd_fit",
    "assemble",
    "predict",
    "coefficient_predict",
    "random_orthonormal",
]

log = logging.getLogger(__name__)

RIDGE = 1e-8


@dataclass
class CoefficientTensor:
    """One input's coefficients: core plus input and output bases."""

    core: np.ndarray
    input_factors: List[np.ndarray]
    output_factors: List[np.ndarray]

    def __post_init__(self):
        self.core = np.asarray(self.core, dtype=np.float64)
        self.input_factors = [np.asarray(U, dtype=np.float64) for U in self.input_factors]
        self.output_factors = [np.asarray(V, dtype=np.float64) for V in self.output_factors]
        # validates shapes
        self.tucker

    @property
    def tucker(self) -> TuckerFactors:
        return TuckerFactors(self.core, self.input_factors + self.output_factors)

    @property
    def n_input_modes(self) -> int:
        return len(self.input_factors)

    @property
    def input_shape(self) -> tuple:
        return tuple(U.shape[0] for U in self.input_factors)

    @property
    def output_shape(self) -> tuple:
        return tuple(V.shape[0] for V in self.output_factors)

    @property
    def input_ranks(self) -> tuple:
        return tuple(U.shape[1] for U in self.input_factors)

    @property
    def output_ranks(self) -> tuple:
        return tuple(V.shape[1] for V in self.output_factors)

    @classmethod
    def zeros(cls, input_factors, output_factors) -> "CoefficientTensor":
        shape = tuple(U.shape[1] for U in input_factors) + tuple(
            V.shape[1] for V in output_factors
        )
        return cls(np.zeros(shape), list(input_factors), list(output_factors))


def assemble(B: CoefficientTensor) -> np.ndarray:
    """Full coefficient tensor of shape ``input_shape + output_shape``."""
    return B.tucker.reconstruct()


def learn_input_bases(X, ranks=None, ratio: Optional[float] = None) -> List[np.ndarray]:
    """Orthonormal bases for each non-sample mode of a stacked input.

    ``X`` has shape ``(m, P_1, ..., P_l)``. Basis ``i`` holds the leading
    left singular vectors of the unfolding along mode ``i + 1``; its width is
    either ``ranks[i]`` or the smallest rank explaining ``ratio`` of the
    energy. With neither given the bases are full.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2 or X.shape[0] < 1:
        raise ValueError("input must be stacked along a leading sample mode")
    l = X.ndim - 1
    if ranks is not None:
        ranks = [int(r) for r in np.broadcast_to(np.asarray(ranks), (l,))]
    bases = []
    for i in range(l):
        res = svd(matricize(X, i + 1))
        P = X.shape[i + 1]
        if ranks is not None:
            r = ranks[i]
            if not 1 <= r <= P:
                raise ValueError(f"input rank {r} invalid for a mode of size {P}")
        elif ratio is not None:
            r = max(1, _rank_from_spectrum(res.singular_values, ratio))
        else:
            r = P
        U = res.U[:, :r]
        if U.shape[1] < r:
            U = np.hstack([U, _orth_complement(U, r - U.shape[1])])
        bases.append(U)
    return bases


def _orth_complement(U: np.ndarray, k: int) -> np.ndarray:
    P = U.shape[0]
    Q, _ = np.linalg.qr(np.hstack([U, np.eye(P)]))
    return Q[:, U.shape[1]:U.shape[1] + k]


def random_orthonormal(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    return Q * np.sign(np.diag(R))


def reduce_inputs(X, bases) -> np.ndarray:
    """Project a stacked input onto its bases and flatten: ``(m, prod ranks)``."""
    X = np.asarray(X, dtype=np.float64)
    Z = multi_mode_product(X, bases, modes=range(1, X.ndim), transpose=True)
    return Z.reshape(X.shape[0], -1)


def _project_output(W: np.ndarray, V: Sequence[np.ndarray], skip: Optional[int] = None):
    """``W x_{i+1} V_i^T`` for every output mode except ``skip``."""
    out = W
    for i, Vi in enumerate(V):
        if i != skip:
            out = mode_product(out, Vi.T, i + 1)
    return out


def _expand_output(H: np.ndarray, V: Sequence[np.ndarray]) -> np.ndarray:
    out = H
    for i, Vi in enumerate(V):
        out = mode_product(out, Vi, i + 1)
    return out


class _CoreSolver:
    """Least squares in reduced coordinates with a ridge fallback."""

    def __init__(self, Z: np.ndarray):
        self.Z = Z
        G = Z.T @ Z
        n = G.shape[0]
        cond = np.linalg.cond(G) if n else 1.0
        self.ridge = not np.isfinite(cond) or cond > 1e12
        if self.ridge:
            G = G + RIDGE * np.eye(n)
        try:
            self.factor = scipy.linalg.cho_factor(G)
        except np.linalg.LinAlgError:
            self.ridge = True
            self.factor = scipy.linalg.cho_factor(G + RIDGE * max(1.0, np.trace(G)) * np.eye(n))

    def solve(self, T: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.factor, self.Z.T @ T)


@dataclass
class AlsResult:
    coefficient: CoefficientTensor
    objective: List[float] = field(default_factory=list)
    ridge: bool = False


def _init_output_bases(W: np.ndarray, ranks, rng) -> List[np.ndarray]:
    V = []
    for i, r in enumerate(ranks):
        res = svd(matricize(W, i + 1))
        tol = res.singular_values[0] * 1e-12 if res.singular_values.size else 0.0
        good = int(np.count_nonzero(res.singular_values > tol))
        if good >= r:
            V.append(res.U[:, :r])
        else:
            base = res.U[:, :good]
            extra = random_orthonormal(W.shape[i + 1], r - good, rng)
            extra = extra - base @ (base.T @ extra)
            extra, _ = np.linalg.qr(extra)
            V.append(np.hstack([base, extra]))
    return V


def als_bcd_fit(
    W,
    X,
    input_bases: Sequence[np.ndarray],
    output_ranks: Sequence[int],
    init: Optional[CoefficientTensor] = None,
    sweeps: int = 10,
    rng: Optional[np.random.Generator] = None,
    Z: Optional[np.ndarray] = None,
    tol: float = 0.0,
) -> AlsResult:
    """Fit a Tucker-form coefficient tensor to the residual response ``W``.

    Minimizes ``||W - X * B||_F^2`` over the core and orthonormal output
    bases with the input bases held fixed. ``init`` warm-starts the output
    bases when its ranks match ``output_ranks``. ``Z`` may pass a
    precomputed :func:`reduce_inputs` result. Sweeps stop early when the
    relative objective decrease falls below ``tol``.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(W)):
        raise ValueError("residual response has non-finite entries")
    m = W.shape[0]
    if X.shape[0] != m:
        raise ValueError(f"{X.shape[0]} input samples for {m} response samples")
    out_shape = W.shape[1:]
    output_ranks = tuple(int(r) for r in output_ranks)
    if len(output_ranks) != len(out_shape):
        raise ValueError(f"{len(output_ranks)} output ranks for {len(out_shape)} output modes")
    for r, Q in zip(output_ranks, out_shape):
        if not 1 <= r <= Q:
            raise ValueError(f"output rank {r} invalid for a mode of size {Q}")
    rng = rng if rng is not None else np.random.default_rng(0)
    if Z is None:
        Z = reduce_inputs(X, input_bases)
    in_ranks = tuple(U.shape[1] for U in input_bases)
    solver = _CoreSolver(Z)

    if init is not None and init.output_ranks == output_ranks and init.output_shape == out_shape:
        V = [Vi.copy() for Vi in init.output_factors]
    else:
        V = _init_output_bases(W, output_ranks, rng)

    Wnorm2 = float(np.sum(W ** 2))

    def core_step(V):
        T = _project_output(W, V).reshape(m, -1)
        Cmat = solver.solve(T)
        # orthonormal V: ||W - Z C V^T||^2 = ||W||^2 - 2<T, ZC> + ||ZC||^2
        ZC = Z @ Cmat
        obj = Wnorm2 - 2.0 * float(np.sum(T * ZC)) + float(np.sum(ZC ** 2))
        return Cmat, ZC, max(obj, 0.0)

    Cmat, ZC, obj = core_step(V)
    trace = [obj]
    for _ in range(sweeps):
        H = ZC.reshape((m,) + output_ranks)
        for i in range(len(V)):
            P = _project_output(W, V, skip=i)
            cross = matricize(P, i + 1) @ matricize(H, i + 1).T
            res = svd(cross)
            V[i] = res.U @ res.V.T
        Cmat, ZC, obj = core_step(V)
        if obj > trace[-1] * (1 + 1e-10) + 1e-12 * Wnorm2:
            log.warning("ALS objective increased: %.6g -> %.6g", trace[-1], obj)
        prev = trace[-1]
        trace.append(obj)
        if tol and prev - obj <= tol * max(prev, 1e-300):
            break

    core = Cmat.reshape(in_ranks + output_ranks)
    return AlsResult(CoefficientTensor(core, list(input_bases), V), trace, solver.ridge)


def coefficient_predict(X, B: CoefficientTensor, Z: Optional[np.ndarray] = None) -> np.ndarray:
    """``X * B`` per sample, evaluated through the Tucker factors."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1:] != B.input_shape:
        raise ValueError(f"input shape {X.shape[1:]} does not match coefficient {B.input_shape}")
    if Z is None:
        Z = reduce_inputs(X, B.input_factors)
    m = X.shape[0]
    H = (Z @ B.core.reshape(Z.shape[1], -1)).reshape((m,) + B.output_ranks)
    return _expand_output(H, B.output_factors)


def predict(inputs: Sequence, coefficients: Sequence[CoefficientTensor]) -> np.ndarray:
    """Sum of per-input contractions: ``sum_j X_j * B_j`` for stacked inputs."""
    if len(inputs) != len(coefficients):
        raise ValueError(f"{len(inputs)} inputs for {len(coefficients)} coefficient tensors")
    out = None
    for X, B in zip(inputs, coefficients):
        term = coefficient_predict(X, B)
        out = term if out is None else out + term
    return out


def predict_assembled(inputs: Sequence, coefficients: Sequence[CoefficientTensor]) -> np.ndarray:
    """Same as :func:`predict` but contracting against the full tensors."""
    return sum(batched_contract(X, assemble(B)) for X, B in zip(inputs, coefficients))
