"""
Block coordinate descent for tensor regression with a partially observed
response.

Each outer iteration first completes the response given the current
coefficients (consensus ADMM), re-estimates the response Tucker rank, and
then refits every input's coefficients against the residual left by the
others (Tucker ALS).
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .completion import AdmmConfig, admm_complete, nuclear_modes
from .linalg import DEFAULT_RANK_RATIO, tensor_nuclear_norm, tucker_rank_estimate
from .regression import (
    CoefficientTensor,
    als_bcd_fit,
    coefficient_predict,
    learn_input_bases,
    random_orthonormal,
    reduce_inputs,
)
from .tensor import ObservationMask

__all__ = [
    "TrmvConfig",
    "TrmvModel",
    "FitDiagnostics",
    "default_config",
    "estimate_response_rank",
    "trmv_objective",
    "fit",
]

log = logging.getLogger(__name__)


@dataclass
class TrmvConfig:
    """Hyper-parameters of the joint completion/regression fit."""

    lam: float = 1.0
    weights: Optional[tuple] = None  # nuclear-norm mode weights, equal when None
    rho: float = 1.0
    max_iter: int = 50
    tol: float = 1e-8  # relative objective change for early exit
    patience: int = 3
    admm_max_iter: int = 50  # per outer iteration; the ADMM state carries over
    admm_tol: float = 1e-6
    adaptive_rho: bool = False
    include_sample_mode: bool = False
    warm_start: bool = True
    als_sweeps: int = 10
    rank_ratio: float = DEFAULT_RANK_RATIO
    output_ranks: Optional[tuple] = None  # fixed output ranks instead of estimates
    input_rank_ratio: float = 0.9999
    input_ranks: Optional[list] = None
    init_scale: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0 or self.rho <= 0:
            raise ValueError("lam must be nonnegative and rho positive")
        if self.max_iter < 1 or self.admm_max_iter < 1 or self.als_sweeps < 1:
            raise ValueError("iteration budgets must be positive")
        if not 0 < self.rank_ratio <= 1 or not 0 < self.input_rank_ratio <= 1:
            raise ValueError("rank ratios must lie in (0, 1]")
        if self.weights is not None:
            self.weights = tuple(float(w) for w in self.weights)
        if self.output_ranks is not None:
            self.output_ranks = tuple(int(r) for r in self.output_ranks)

    def admm_config(self) -> AdmmConfig:
        return AdmmConfig(
            lam=self.lam,
            weights=self.weights,
            rho=self.rho,
            max_iter=self.admm_max_iter,
            tol=self.admm_tol,
            adaptive_rho=self.adaptive_rho,
            include_sample_mode=self.include_sample_mode,
            track_objective=False,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def default_config(response_shape: Sequence[int], **overrides) -> TrmvConfig:
    """Defaults for a stacked response of the given shape.

    The nuclear-norm weights are equal across the ``d`` output modes.
    """
    order = len(response_shape)
    include = overrides.get("include_sample_mode", False)
    d = len(nuclear_modes(order, include))
    overrides.setdefault("weights", tuple([1.0 / d] * d))
    return TrmvConfig(**overrides)


def estimate_response_rank(Y, ratio: float = DEFAULT_RANK_RATIO) -> tuple:
    """Tucker rank of a stacked response over its output (non-sample) modes."""
    Y = np.asarray(Y)
    return tucker_rank_estimate(Y, ratio, modes=range(1, Y.ndim))


def trmv_objective(Y, A, lam: float, weights, modes) -> float:
    """``lam * sum_i alpha_i ||Y_(i)||_* + 1/2 ||Y - A||_F^2``."""
    return lam * tensor_nuclear_norm(Y, weights, modes) + 0.5 * float(np.sum((Y - A) ** 2))


@dataclass
class FitDiagnostics:
    objective: List[float] = field(default_factory=list)
    ranks: List[tuple] = field(default_factory=list)
    admm_iterations: List[int] = field(default_factory=list)
    admm_converged: List[bool] = field(default_factory=list)
    y_rejected: List[bool] = field(default_factory=list)
    b_rejected: List[int] = field(default_factory=list)
    observed_deviation: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    seconds: float = 0.0

    def rank_reached(self, target) -> Optional[int]:
        """First outer iteration (1-based) from which the rank trace equals
        ``target`` for the rest of the run, or ``None``."""
        target = tuple(target)
        first = None
        for k, r in enumerate(self.ranks, start=1):
            if tuple(r) == target:
                if first is None:
                    first = k
            else:
                first = None
        return first

    def to_csv(self, header: Optional[dict] = None) -> str:
        buf = io.StringIO()
        for key, value in (header or {}).items():
            buf.write(f"# {key}={value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "objective", "ranks", "admm_iterations"])
        for k in range(len(self.objective)):
            writer.writerow([
                k + 1,
                repr(self.objective[k]),
                "x".join(str(r) for r in self.ranks[k]),
                self.admm_iterations[k],
            ])
        return buf.getvalue()


@dataclass
class TrmvModel:
    coefficients: List[CoefficientTensor]
    response_rank: tuple
    config: TrmvConfig
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)
    completed: Optional[np.ndarray] = None

    @property
    def n_inputs(self) -> int:
        return len(self.coefficients)

    def predict(self, inputs: Sequence) -> np.ndarray:
        if len(inputs) != self.n_inputs:
            raise ValueError(f"model expects {self.n_inputs} inputs, got {len(inputs)}")
        out = None
        for X, B in zip(inputs, self.coefficients):
            term = coefficient_predict(np.asarray(X, dtype=np.float64), B)
            out = term if out is None else out + term
        return out


def _validate(inputs, Y0, mask):
    Y0 = np.asarray(Y0, dtype=np.float64)
    if Y0.ndim < 2:
        raise ValueError("response must be stacked as (m, Q_1, ..., Q_d)")
    if mask.shape != Y0.shape:
        raise ValueError(f"mask shape {mask.shape} does not match response {Y0.shape}")
    if mask.count == 0:
        raise ValueError("no observed response entries")
    if not inputs:
        raise ValueError("need at least one input")
    inputs = [np.asarray(X, dtype=np.float64) for X in inputs]
    for X in inputs:
        if X.ndim < 2 or X.shape[0] != Y0.shape[0]:
            raise ValueError(f"input of shape {X.shape} does not match {Y0.shape[0]} samples")
    return inputs, Y0


def _initial_coefficients(bases, out_shape, ranks, scale, rng):
    coefs = []
    for U in bases:
        V = [random_orthonormal(Q, r, rng) for Q, r in zip(out_shape, ranks)]
        core = rng.standard_normal(tuple(u.shape[1] for u in U) + tuple(ranks))
        coefs.append(CoefficientTensor(core, U, V))
    return coefs


def fit(inputs: Sequence, Y0, mask: ObservationMask, cfg: Optional[TrmvConfig] = None,
        callback=None) -> TrmvModel:
    """Fit coefficient tensors to a partially observed stacked response.

    ``inputs`` are stacked ``(m, P_j1, ..., P_jl)`` arrays, ``Y0`` the
    response ``(m, Q_1, ..., Q_d)`` whose entries outside ``mask`` are
    ignored. ``callback(k, Y, coefficients)`` runs after each outer iteration.
    """
    t0 = time.perf_counter()
    inputs, Y0 = _validate(inputs, Y0, mask)
    cfg = cfg or default_config(Y0.shape)
    out_shape = Y0.shape[1:]
    modes = nuclear_modes(Y0.ndim, cfg.include_sample_mode)
    weights = cfg.admm_config().resolved_weights(len(modes))
    admm_cfg = cfg.admm_config()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(3,)))

    if cfg.input_ranks is not None:
        bases = [learn_input_bases(X, ranks=r) for X, r in zip(inputs, cfg.input_ranks)]
    else:
        bases = [learn_input_bases(X, ratio=cfg.input_rank_ratio) for X in inputs]
    Zs = [reduce_inputs(X, U) for X, U in zip(inputs, bases)]

    obs = mask.observed
    Y = np.zeros_like(Y0)
    Y.reshape(-1)[obs] = Y0.reshape(-1)[obs]

    ranks0 = cfg.output_ranks or estimate_response_rank(Y, cfg.rank_ratio)
    coefs = _initial_coefficients(bases, out_shape, ranks0, 1.0, rng)
    preds = [coefficient_predict(X, B, Z) for X, B, Z in zip(inputs, coefs, Zs)]
    # shrink the random start so that it perturbs rather than dominates
    target = cfg.init_scale * float(np.linalg.norm(Y))
    total = float(np.linalg.norm(sum(preds)))
    if total > 0:
        s = target / total
        for B, P in zip(coefs, preds):
            B.core *= s
            P *= s

    diag = FitDiagnostics()
    state = None
    A = sum(preds)
    obj = trmv_objective(Y, A, cfg.lam, weights, modes)
    stall = 0
    for k in range(1, cfg.max_iter + 1):
        # -- response completion
        Y_new, adiag = admm_complete(A, Y0, mask, admm_cfg,
                                     init=state if cfg.warm_start else None)
        state = adiag.state
        obj_new = trmv_objective(Y_new, A, cfg.lam, weights, modes)
        rejected = obj_new > obj
        if not rejected:
            Y, obj = Y_new, obj_new
        diag.y_rejected.append(rejected)
        diag.admm_iterations.append(adiag.iterations)
        diag.admm_converged.append(adiag.converged)

        # -- rank estimate and coefficient updates
        ranks = cfg.output_ranks or estimate_response_rank(Y, cfg.rank_ratio)
        n_rejected = 0
        for j in range(len(inputs)):
            W = Y - (A - preds[j])
            res = als_bcd_fit(W, inputs[j], bases[j], ranks, init=coefs[j],
                              sweeps=cfg.als_sweeps, rng=rng, Z=Zs[j])
            new_pred = coefficient_predict(inputs[j], res.coefficient, Zs[j])
            old_fit = float(np.sum((W - preds[j]) ** 2))
            new_fit = float(np.sum((W - new_pred) ** 2))
            if new_fit <= old_fit or tuple(ranks) != coefs[j].output_ranks:
                A = A - preds[j] + new_pred
                coefs[j], preds[j] = res.coefficient, new_pred
            else:
                n_rejected += 1
        diag.b_rejected.append(n_rejected)

        prev = obj
        obj = trmv_objective(Y, A, cfg.lam, weights, modes)
        diag.objective.append(obj)
        diag.ranks.append(tuple(ranks))
        diag.observed_deviation.append(
            float(np.max(np.abs(Y.reshape(-1)[obs] - Y0.reshape(-1)[obs]))) if obs.size else 0.0
        )
        diag.iterations = k
        if callback is not None:
            callback(k, Y, coefs)

        if abs(prev - obj) <= cfg.tol * max(abs(prev), 1e-300):
            stall += 1
            if stall >= cfg.patience:
                diag.converged = True
                break
        else:
            stall = 0

    diag.seconds = time.perf_counter() - t0
    return TrmvModel(coefs, tuple(diag.ranks[-1]), cfg, diag, Y)
