"""
Seeded synthetic data: functional curve-on-curve data, Fourier-basis
tensor data, and wafer overlay fields.

Every generator draws from named substreams of one master seed, so changing
the noise level leaves the structural draws untouched.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .io import load_mask, load_tensor, save_mask, save_tensor
from .tensor import ObservationMask, batched_contract, multi_mode_product

__all__ = [
    "SyntheticDataset",
    "substream",
    "cov_sigma1",
    "cov_sigma2",
    "gram_matrix",
    "gp_sample",
    "midpoint_grid",
    "procedure_a",
    "fourier_basis",
    "procedure_b",
    "overlay_basis",
    "overlay_field",
    "wafer_points",
    "overlay_generate",
    "gen_mask",
    "save_dataset",
    "load_dataset",
]

log = logging.getLogger(__name__)

_STREAMS = {"structure": 0, "noise": 1, "mask": 2, "init": 3, "split": 4, "cv": 5}


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(_STREAMS[name],)))


@dataclass
class SyntheticDataset:
    """Inputs and complete response for all samples plus a training mask.

    ``mask`` covers the training rows of ``response`` only, i.e. its shape is
    ``(len(train), Q_1, ..., Q_d)``.
    """

    inputs: List[np.ndarray]
    response: np.ndarray
    mask: ObservationMask
    train: np.ndarray
    test: np.ndarray
    provenance: dict = field(default_factory=dict)
    coefficients: Optional[list] = None

    def __post_init__(self):
        m = self.response.shape[0]
        for X in self.inputs:
            if X.shape[0] != m:
                raise ValueError("inputs and response disagree on the sample count")
        self.train = np.asarray(self.train, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        if self.mask.shape != (len(self.train),) + self.response.shape[1:]:
            raise ValueError("mask must cover exactly the training responses")

    @property
    def train_inputs(self) -> List[np.ndarray]:
        return [X[self.train] for X in self.inputs]

    @property
    def test_inputs(self) -> List[np.ndarray]:
        return [X[self.test] for X in self.inputs]

    @property
    def train_response(self) -> np.ndarray:
        return self.response[self.train]

    @property
    def test_response(self) -> np.ndarray:
        return self.response[self.test]

    @property
    def observed_response(self) -> np.ndarray:
        """Training response with unobserved entries zeroed."""
        Y = np.zeros(self.mask.shape)
        Y.reshape(-1)[self.mask.observed] = self.train_response.reshape(-1)[self.mask.observed]
        return Y

    def with_mask(self, mask: ObservationMask, **extra) -> "SyntheticDataset":
        prov = dict(self.provenance, **extra)
        return SyntheticDataset(self.inputs, self.response, mask, self.train, self.test,
                                prov, self.coefficients)

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for X in self.inputs:
            h.update(np.ascontiguousarray(X).tobytes())
        h.update(np.ascontiguousarray(self.response).tobytes())
        h.update(self.mask.observed.tobytes())
        h.update(self.train.tobytes())
        return h.hexdigest()[:16]


# -- Gaussian processes -----------------------------------------------------

def cov_sigma1(z, zp):
    """Matern-5/2 style kernel ``(1 + 20d + (20d)^2 / 3) exp(-20d)``."""
    a = 20.0 * np.abs(np.asarray(z, dtype=float) - np.asarray(zp, dtype=float))
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


def cov_sigma2(z, zp):
    """Squared-exponential kernel ``exp(-(2d)^2)``."""
    d = 2.0 * np.abs(np.asarray(z, dtype=float) - np.asarray(zp, dtype=float))
    return np.exp(-d * d)


def gram_matrix(grid, cov: Callable) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    return cov(g[:, None], g[None, :])


def _jittered_cholesky(K: np.ndarray) -> np.ndarray:
    jitter = 1e-10
    n = K.shape[0]
    while jitter <= 1e-4 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("gram matrix is not positive definite even with jitter 1e-4")


def gp_sample(grid, cov: Callable, rng: np.random.Generator, size: Optional[int] = None):
    """Zero-mean Gaussian process draw(s) on ``grid``.

    Returns a vector, or an array of shape ``(size, len(grid))``.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or np.unique(g).size != g.size:
        raise ValueError("grid must be a vector of distinct points")
    L = _jittered_cholesky(gram_matrix(g, cov))
    n = 1 if size is None else int(size)
    draws = rng.standard_normal((n, g.size)) @ L.T
    return draws[0] if size is None else draws


def midpoint_grid(n: int, lo: float, hi: float) -> np.ndarray:
    """``n`` equidistant interior points of ``(lo, hi)`` (cell midpoints)."""
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5)


def _split(m_train: int, m_test: int):
    return np.arange(m_train), np.arange(m_train, m_train + m_test)


# -- procedure A: curve-on-curve -------------------------------------------

def procedure_a(
    m_train: int = 100,
    m_test: int = 100,
    p: int = 2,
    rho_c: float = 0.0,
    sigma: float = 0.0,
    n_s: int = 100,
    n_t: int = 100,
    n_terms: int = 3,
    missing: float = 0.0,
    mask_policy: str = "global",
    seed: int = 0,
) -> SyntheticDataset:
    """Functional regression data with ``p`` correlated input curves.

    Inputs live on ``n_s`` points of ``(0, 2)``, the output on ``n_t`` points
    of ``(0, 1)``. The integral over ``s`` is a rectangle rule with weight
    ``2 / n_s``; the returned coefficient tensors already carry that weight,
    so ``sum_j X_j * B_j`` reproduces the noiseless response.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if not 0 <= rho_c < 1:
        raise ValueError("rho_c must lie in [0, 1)")
    m = m_train + m_test
    s = midpoint_grid(n_s, 0.0, 2.0)
    t = midpoint_grid(n_t, 0.0, 1.0)
    ds = 2.0 / n_s
    rng = substream(seed, "structure")

    S = np.full((p, p), rho_c) + (1.0 - rho_c) * np.eye(p)
    evals, evecs = np.linalg.eigh(S)
    if np.any(evals < -1e-12):
        raise ValueError("correlation matrix is not positive semidefinite")
    Delta = evecs * np.sqrt(np.clip(evals, 0.0, None))

    coefficients = []
    for _ in range(p):
        gamma = gp_sample(t, cov_sigma1, rng, size=n_terms)
        psi = gp_sample(s, cov_sigma1, rng, size=n_terms)
        B = psi.T @ gamma / p ** 2  # (n_s, n_t)
        coefficients.append(B * ds)

    w = gp_sample(s, cov_sigma2, rng, size=m * p).reshape(m, p, n_s)
    x = np.einsum("mjs,kj->mks", w, Delta)  # x(s) = w(s) Delta^T
    inputs = [np.ascontiguousarray(x[:, j, :]) for j in range(p)]

    Y = sum(X @ B for X, B in zip(inputs, coefficients))
    Y = Y + sigma * substream(seed, "noise").standard_normal(Y.shape)

    train, test = _split(m_train, m_test)
    mask = gen_mask((m_train, n_t), missing, mask_policy, seed)
    prov = dict(generator="procedure_a", m_train=m_train, m_test=m_test, p=p, rho_c=rho_c,
                sigma=sigma, n_s=n_s, n_t=n_t, n_terms=n_terms, missing=missing,
                mask_policy=mask_policy, seed=seed)
    return SyntheticDataset(inputs, Y, mask, train, test, prov, coefficients)


# -- procedure B: Fourier-basis tensors -------------------------------------

def fourier_basis(P: int, R: int) -> np.ndarray:
    """``P x R`` matrix; column ``t`` (1-based) is ``cos(2 pi t x)`` for odd
    ``t`` and ``sin(2 pi t x)`` for even ``t``, sampled at ``x_j = j / P``."""
    if R > P:
        raise ValueError(f"rank {R} exceeds dimension {P}")
    x = np.arange(1, P + 1) / P
    cols = []
    for t in range(1, R + 1):
        f = np.cos if t % 2 == 1 else np.sin
        cols.append(f(2 * np.pi * t * x))
    return np.column_stack(cols)


def procedure_b(
    input_dims: Sequence[Sequence[int]] = ((60,), (50, 50)),
    output_dims: Sequence[int] = (60, 40),
    input_ranks: Sequence[int] = (3, 3),
    output_rank: int = 5,
    sigma: float = 0.0,
    m_train: int = 100,
    m_test: int = 100,
    missing: float = 0.0,
    mask_policy: str = "global",
    seed: int = 0,
) -> SyntheticDataset:
    """Tensor inputs and outputs built from Fourier bases and Gaussian cores."""
    input_dims = [tuple(int(p) for p in dims) for dims in input_dims]
    output_dims = tuple(int(q) for q in output_dims)
    input_ranks = [int(r) for r in np.broadcast_to(np.asarray(input_ranks), (len(input_dims),))]
    if len(input_ranks) != len(input_dims):
        raise ValueError("one input rank per input tensor")
    for dims, r in zip(input_dims, input_ranks):
        if not dims or min(dims) < r or r < 1:
            raise ValueError(f"input rank {r} invalid for dims {dims}")
    if not output_dims or min(output_dims) < output_rank or output_rank < 1:
        raise ValueError(f"output rank {output_rank} invalid for dims {output_dims}")
    m = m_train + m_test
    rng = substream(seed, "structure")

    V = [fourier_basis(Q, output_rank) for Q in output_dims]
    inputs, coefficients = [], []
    for dims, r in zip(input_dims, input_ranks):
        U = [fourier_basis(P, r) for P in dims]
        D = rng.standard_normal((m,) + (r,) * len(dims))
        X = multi_mode_product(D, U, modes=range(1, len(dims) + 1))
        C = rng.standard_normal((r,) * len(dims) + (output_rank,) * len(output_dims))
        inputs.append(X)
        # Fourier columns are not orthonormal; keep the generating factors as-is
        coefficients.append(multi_mode_product(C, U + V))

    Y = sum(batched_contract(X, B) for X, B in zip(inputs, coefficients))
    Y = Y + sigma * substream(seed, "noise").standard_normal(Y.shape)
    train, test = _split(m_train, m_test)
    mask = gen_mask((m_train,) + output_dims, missing, mask_policy, seed)
    prov = dict(generator="procedure_b", input_dims=[list(d) for d in input_dims],
                output_dims=list(output_dims), input_ranks=input_ranks,
                output_rank=output_rank, sigma=sigma, m_train=m_train, m_test=m_test,
                missing=missing, mask_policy=mask_policy, seed=seed)
    return SyntheticDataset(inputs, Y, mask, train, test, prov, coefficients)


# -- overlay fields ---------------------------------------------------------

def overlay_basis(points) -> np.ndarray:
    """Cubic monomial basis, shape ``(10, n)``: 1, x, y, x^2, xy, y^2, x^3, x^2y, xy^2, y^3."""
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    one = np.ones_like(x)
    return np.vstack([one, x, y, x * x, x * y, y * y, x ** 3, x * x * y, x * y * y, y ** 3])


def overlay_field(k, points) -> np.ndarray:
    """Overlay components ``F = k . b`` at every point for 10-term signature(s) ``k``."""
    return np.asarray(k, dtype=float) @ overlay_basis(points)


def wafer_points(n: int) -> np.ndarray:
    """``n`` quasi-uniform points on the unit disk (sunflower pattern)."""
    i = np.arange(n) + 0.5
    r = np.sqrt(i / n)
    theta = i * np.pi * (3.0 - np.sqrt(5.0))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def overlay_generate(
    n_points: int = 100,
    m_train: int = 100,
    m_test: int = 100,
    scales: Sequence[float] = (1.0,) * 6,
    sigma: float = 0.0,
    points=None,
    missing: float = 0.0,
    mask_policy: str = "global",
    seed: int = 0,
) -> SyntheticDataset:
    """Wafer overlay data with only the six linear signature terms active.

    Inputs are the signatures ``(k_1, ..., k_6)``, shape ``(m, 6)``. The
    response stacks ``(F_x, F_y)`` at every point: shape ``(m, 2, n)``.
    """
    pts = wafer_points(n_points) if points is None else np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if len(pts) < 2 or np.allclose(pts, pts[0]):
        raise ValueError("degenerate wafer point set")
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (6,):
        raise ValueError("need six coefficient scales")
    m = m_train + m_test
    rng = substream(seed, "structure")
    K = rng.standard_normal((m, 6)) * scales
    Kx = np.zeros((m, 10))
    Ky = np.zeros((m, 10))
    Kx[:, :3] = K[:, 0::2]  # k1, k3, k5
    Ky[:, :3] = K[:, 1::2]  # k2, k4, k6
    basis = overlay_basis(pts)
    Y = np.stack([Kx @ basis, Ky @ basis], axis=1)
    Y = Y + sigma * substream(seed, "noise").standard_normal(Y.shape)

    # exact linear map from the signature to the stacked field
    B = np.zeros((6, 2, len(pts)))
    B[0::2, 0, :] = basis[:3]
    B[1::2, 1, :] = basis[:3]

    train, test = _split(m_train, m_test)
    mask = gen_mask((m_train, 2, len(pts)), missing, mask_policy, seed)
    prov = dict(generator="overlay", n_points=len(pts), m_train=m_train, m_test=m_test,
                scales=scales.tolist(), sigma=sigma, missing=missing,
                mask_policy=mask_policy, seed=seed)
    return SyntheticDataset([K], Y, mask, train, test, prov, [B])


# -- masks ------------------------------------------------------------------

def gen_mask(shape, missing: float, policy: str = "global", seed: int = 0) -> ObservationMask:
    """Remove a fraction ``missing`` of entries uniformly without replacement.

    ``policy="global"`` removes ``round(missing * N)`` entries of the whole
    tensor; ``policy="per-sample"`` removes that fraction from each sample
    (leading mode) separately.
    """
    shape = tuple(int(s) for s in shape)
    if not 0 <= missing < 1:
        raise ValueError("missing fraction must lie in [0, 1)")
    rng = substream(seed, "mask")
    N = int(np.prod(shape))
    if policy == "global":
        keep = N - int(round(missing * N))
        idx = np.sort(rng.choice(N, size=keep, replace=False))
        mask = ObservationMask(shape, idx)
        per = mask.bitmap().reshape(shape[0], -1).sum(axis=1)
        if np.any(per == 0):
            warnings.warn("some samples have no observed entries", RuntimeWarning, stacklevel=2)
        return mask
    if policy == "per-sample":
        n = N // shape[0]
        keep = n - int(round(missing * n))
        if keep < 1:
            raise ValueError("per-sample removal leaves a sample with no observed entries")
        parts = [i * n + np.sort(rng.choice(n, size=keep, replace=False)) for i in range(shape[0])]
        return ObservationMask(shape, np.concatenate(parts))
    raise ValueError(f"unknown mask policy {policy!r}")


# -- persistence ------------------------------------------------------------

def save_dataset(ds: SyntheticDataset, directory) -> None:
    """Write a dataset directory: manifest plus one tensor file per array."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for j, X in enumerate(ds.inputs, start=1):
        save_tensor(d / f"X{j}.tnsr", X)
    save_tensor(d / "Y.tnsr", ds.response)
    save_mask(d / "mask.mask", ds.mask)
    n_coef = 0
    if ds.coefficients is not None:
        for j, B in enumerate(ds.coefficients, start=1):
            save_tensor(d / f"B{j}.tnsr", B)
        n_coef = len(ds.coefficients)
    manifest = dict(
        provenance=ds.provenance,
        n_inputs=len(ds.inputs),
        n_coefficients=n_coef,
        train=ds.train.tolist(),
        test=ds.test.tolist(),
    )
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory) -> SyntheticDataset:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    inputs = [load_tensor(d / f"X{j}.tnsr") for j in range(1, manifest["n_inputs"] + 1)]
    coefs = [load_tensor(d / f"B{j}.tnsr") for j in range(1, manifest["n_coefficients"] + 1)]
    return SyntheticDataset(
        inputs,
        load_tensor(d / "Y.tnsr"),
        load_mask(d / "mask.mask"),
        np.asarray(manifest["train"]),
        np.asarray(manifest["test"]),
        manifest["provenance"],
        coefs or None,
    )
