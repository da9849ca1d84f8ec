"""
Consensus ADMM for the response-completion step.

Solves, for a fixed target ``A``,

    min_Y  lam * sum_i alpha_i ||Y_(i)||_*  +  1/2 ||Y - A||_F^2
    s.t.   P_Omega(Y) = P_Omega(Y0)

by giving every nuclear-norm mode its own local copy ``M_i`` of ``Y``. Each
iteration thresholds the local copies, averages them into ``Y`` on the
unobserved entries, and takes a dual ascent step.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .linalg import _raw_svd, check_weights, tensor_nuclear_norm
from .tensor import ObservationMask, fold, matricize

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "AdmmDiagnostics",
    "nuclear_modes",
    "local_update",
    "global_update",
    "dual_update",
    "completion_objective",
    "admm_complete",
    "consensus_admm",
]

log = logging.getLogger(__name__)


@dataclass
class AdmmConfig:
    lam: float = 1.0
    weights: Optional[Sequence[float]] = None  # equal weights when None
    rho: float = 1.0
    max_iter: int = 300
    tol: float = 1e-6
    adaptive_rho: bool = False
    include_sample_mode: bool = False
    track_objective: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.weights is not None:
            self.weights = tuple(float(a) for a in check_weights(self.weights))

    def resolved_weights(self, d: int) -> np.ndarray:
        if self.weights is None:
            return np.full(d, 1.0 / d)
        return check_weights(self.weights, d)


def nuclear_modes(order: int, include_sample_mode: bool = False) -> List[int]:
    """Modes of a stacked ``(m, Q_1, ..., Q_d)`` tensor entering the nuclear norm."""
    if order < 2:
        raise ValueError("a stacked response needs a sample mode and at least one more")
    return list(range(0 if include_sample_mode else 1, order))


@dataclass
class AdmmState:
    Y: np.ndarray
    locals: List[np.ndarray]
    duals: List[np.ndarray]
    rho: float
    iteration: int = 0


@dataclass
class AdmmDiagnostics:
    objective: List[float] = field(default_factory=list)
    primal_residual: List[float] = field(default_factory=list)
    dual_residual: List[float] = field(default_factory=list)
    ranks: List[tuple] = field(default_factory=list)
    rho: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    state: Optional[AdmmState] = None

    def rows(self):
        for k in range(len(self.primal_residual)):
            obj = self.objective[k] if self.objective else float("nan")
            yield {
                "iteration": k + 1,
                "objective": obj,
                "primal_residual": self.primal_residual[k],
                "dual_residual": self.dual_residual[k],
                "ranks": "x".join(str(r) for r in self.ranks[k]),
            }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, ["iteration", "objective", "primal_residual", "dual_residual", "ranks"]
            )
            writer.writeheader()
            for row in self.rows():
                writer.writerow(row)


def _gram_svt(M: np.ndarray, lam: float):
    """SVT through the eigenpairs of the smaller Gram matrix of ``M``.

    Returns ``None`` when the spectrum is too wide for the squared singular
    values to resolve the threshold accurately; callers then fall back to a
    full SVD.
    """
    wide = M.shape[0] <= M.shape[1]
    A = M if wide else M.T
    w, U = np.linalg.eigh(A @ A.T)
    s = np.sqrt(np.clip(w, 0.0, None))
    if s[-1] == 0.0:
        return np.zeros_like(M), 0
    if s[-1] > 1e6 * lam:
        return None
    keep = s > lam
    r = int(np.count_nonzero(keep))
    if r == 0:
        return np.zeros_like(M), 0
    Uk = U[:, keep]
    R = (Uk * ((s[keep] - lam) / s[keep])) @ (Uk.T @ A)
    return (R if wide else R.T), r


def _svt_rank(M: np.ndarray, lam: float):
    if lam > 0:
        out = _gram_svt(M, lam)
        if out is not None:
            return out
    U, s, Vt = _raw_svd(M)
    s = s - lam
    r = int(np.count_nonzero(s > 0))
    if r == 0:
        return np.zeros_like(M), 0
    return (U[:, :r] * s[:r]) @ Vt[:r], r


def local_update(A, Y, theta, mode: int, alpha: float, lam: float, rho: float,
                 return_rank: bool = False):
    """Minimize the local augmented Lagrangian over the copy for ``mode``.

    The minimizer is singular value thresholding of the unfolded combination
    ``(alpha A + rho Y + theta) / (alpha + rho)`` at ``lam alpha / (alpha + rho)``.
    """
    shape = np.shape(Y)
    C = (alpha * np.asarray(A) + rho * np.asarray(Y) + np.asarray(theta)) / (alpha + rho)
    M, r = _svt_rank(matricize(C, mode), lam * alpha / (alpha + rho))
    M = fold(M, mode, shape)
    return (M, r) if return_rank else M


def global_update(locals_, duals, Y0, mask: ObservationMask, rho: float) -> np.ndarray:
    """Closed-form minimizer of the consensus terms subject to the data constraint."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not locals_ or len(locals_) != len(duals):
        raise ValueError("need matching, nonempty lists of local and dual tensors")
    Y = np.zeros_like(np.asarray(locals_[0], dtype=np.float64))
    for M, T in zip(locals_, duals):
        Y += M - T / rho
    Y /= len(locals_)
    flat = Y.reshape(-1)
    flat[mask.observed] = np.asarray(Y0).reshape(-1)[mask.observed]
    return Y


def dual_update(theta, Y, M, rho: float) -> np.ndarray:
    return theta + rho * (Y - M)


def completion_objective(Y, A, lam: float, weights, modes) -> float:
    """``lam * ||Y||_* + 1/2 ||Y - A||_F^2`` with the weighted tensor nuclear norm."""
    fit = 0.0 if A is None else 0.5 * float(np.sum((Y - A) ** 2))
    return lam * tensor_nuclear_norm(Y, weights, modes) + fit


def initial_state(Y0, mask: ObservationMask, n_locals: int, rho: float) -> AdmmState:
    Y = np.zeros(mask.shape)
    Y.reshape(-1)[mask.observed] = np.asarray(Y0).reshape(-1)[mask.observed]
    return AdmmState(
        Y=Y,
        locals=[Y.copy() for _ in range(n_locals)],
        duals=[np.zeros_like(Y) for _ in range(n_locals)],
        rho=rho,
    )


def consensus_admm(
    Y0,
    mask: ObservationMask,
    cfg: AdmmConfig,
    local_fn: Callable,
    objective_fn: Optional[Callable] = None,
    init: Optional[AdmmState] = None,
):
    """Generic consensus loop shared by the regression-aware and the pure
    completion variants. ``local_fn(Y, theta, mode, alpha, rho)`` returns the
    new local copy and the rank kept by its thresholding."""
    Y0 = np.asarray(Y0, dtype=np.float64)
    if Y0.shape != mask.shape:
        raise ValueError(f"response shape {Y0.shape} does not match mask {mask.shape}")
    modes = nuclear_modes(Y0.ndim, cfg.include_sample_mode)
    weights = cfg.resolved_weights(len(modes))
    diag = AdmmDiagnostics()

    if mask.is_full:
        Y = Y0.copy()
        diag.primal_residual.append(0.0)
        diag.dual_residual.append(0.0)
        diag.ranks.append(())
        diag.rho.append(cfg.rho)
        if cfg.track_objective and objective_fn is not None:
            diag.objective.append(objective_fn(Y))
        diag.converged = True
        diag.iterations = 1
        diag.state = AdmmState(Y, [Y.copy() for _ in modes],
                               [np.zeros_like(Y) for _ in modes], cfg.rho, 1)
        return Y, diag

    if init is None:
        state = initial_state(Y0, mask, len(modes), cfg.rho)
    else:
        if len(init.locals) != len(modes):
            raise ValueError("warm-start state has the wrong number of local copies")
        state = AdmmState(init.Y.copy(), [M.copy() for M in init.locals],
                          [T.copy() for T in init.duals], init.rho, 0)
        state.Y.reshape(-1)[mask.observed] = Y0.reshape(-1)[mask.observed]

    Y, rho = state.Y, state.rho
    locals_, duals = state.locals, state.duals
    d = len(modes)
    best = None
    for it in range(1, cfg.max_iter + 1):
        ranks = []
        for i, (k, a) in enumerate(zip(modes, weights)):
            locals_[i], r = local_fn(Y, duals[i], k, a, rho)
            ranks.append(r)
        Y_new = global_update(locals_, duals, Y0, mask, rho)
        for i in range(d):
            duals[i] = dual_update(duals[i], Y_new, locals_[i], rho)

        scale = max(1.0, float(np.linalg.norm(Y_new)))
        primal = max(float(np.linalg.norm(Y_new - M)) for M in locals_) / scale
        change = float(np.linalg.norm(Y_new - Y)) / max(1.0, float(np.linalg.norm(Y)))
        dual = rho * np.sqrt(d) * change
        Y = Y_new

        diag.primal_residual.append(primal)
        diag.dual_residual.append(dual)
        diag.ranks.append(tuple(ranks))
        diag.rho.append(rho)
        if cfg.track_objective and objective_fn is not None:
            obj = objective_fn(Y)
            diag.objective.append(obj)
            if best is None or obj < best[0]:
                best = (obj, Y.copy())
        diag.iterations = it

        if change < cfg.tol and primal < cfg.tol:
            diag.converged = True
            break
        if cfg.adaptive_rho:
            if primal > 10 * dual:
                rho *= 2.0
            elif dual > 10 * primal:
                rho /= 2.0

    diag.state = AdmmState(Y, locals_, duals, rho, diag.iterations)
    if not diag.converged:
        log.debug("ADMM stopped at max_iter=%d (primal %.3g)", cfg.max_iter, primal)
        if best is not None:
            Y = best[1]
    return Y, diag


def admm_complete(A, Y0, mask: ObservationMask, cfg: Optional[AdmmConfig] = None,
                  init: Optional[AdmmState] = None):
    """Complete ``Y0`` on ``mask`` pulling the missing entries toward ``A``.

    Returns ``(Y, diagnostics)``; ``Y`` agrees with ``Y0`` on every observed
    entry. Failure to converge within ``cfg.max_iter`` is reported through
    ``diagnostics.converged`` rather than raised.
    """
    cfg = cfg or AdmmConfig()
    A = np.asarray(A, dtype=np.float64)
    Y0 = np.asarray(Y0, dtype=np.float64)
    if A.shape != Y0.shape:
        raise ValueError(f"target shape {A.shape} does not match response {Y0.shape}")
    lam = cfg.lam
    modes = nuclear_modes(Y0.ndim, cfg.include_sample_mode)
    weights = cfg.resolved_weights(len(modes))

    def local_fn(Y, theta, mode, alpha, rho):
        return local_update(A, Y, theta, mode, alpha, lam, rho, return_rank=True)

    def objective_fn(Y):
        return completion_objective(Y, A, lam, weights, modes)

    return consensus_admm(Y0, mask, cfg, local_fn, objective_fn, init)
