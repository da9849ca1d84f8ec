import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import contract_oracle, subspace_gap
from trmv.regression import (
    CoefficientTensor,
    als_bcd_fit,
    assemble,
    coefficient_predict,
    learn_input_bases,
    predict,
    predict_assembled,
    random_orthonormal,
    reduce_inputs,
)
from trmv.tensor import batched_contract, multi_mode_product


def _lowrank_inputs(rng, m, shape, ranks):
    """Stacked inputs whose non-sample modes live in known subspaces."""
    bases = [random_orthonormal(P, r, rng) for P, r in zip(shape, ranks)]
    G = rng.standard_normal((m,) + tuple(ranks))
    X = multi_mode_product(G, [None] + bases)
    return X, bases


def _true_coefficient(rng, in_bases, out_shape, out_ranks):
    V = [random_orthonormal(Q, r, rng) for Q, r in zip(out_shape, out_ranks)]
    core = rng.standard_normal(tuple(U.shape[1] for U in in_bases) + tuple(out_ranks))
    return CoefficientTensor(core, in_bases, V)


# -- input bases ------------------------------------------------------------------

def test_learned_bases_span_true_subspaces(rng):
    X, bases = _lowrank_inputs(rng, 40, (8, 7), (3, 2))
    learned = learn_input_bases(X, ranks=(3, 2))
    for U, T in zip(learned, bases):
        assert U.shape == T.shape
        assert np.allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-10)
        assert subspace_gap(U, T) <= 1e-6


def test_learned_bases_by_ratio(rng):
    X, _ = _lowrank_inputs(rng, 40, (8, 7), (3, 2))
    assert [U.shape[1] for U in learn_input_bases(X, ratio=0.9999)] == [3, 2]


def test_single_rank_one_sample():
    X = np.outer([1.0, 2.0, 0.0], [0.0, 1.0, 1.0, 3.0])[None]
    U1, U2 = learn_input_bases(X, ratio=0.99)
    assert U1.shape == (3, 1) and U2.shape == (4, 1)


def test_full_bases_default(rng):
    X = rng.standard_normal((3, 5))  # fewer samples than features
    (U,) = learn_input_bases(X)
    assert U.shape == (5, 5)
    assert np.allclose(U.T @ U, np.eye(5), atol=1e-10)


def test_invalid_input_rank(rng):
    with pytest.raises(ValueError):
        learn_input_bases(rng.standard_normal((4, 3)), ranks=[4])


def test_reduce_inputs_with_full_bases_preserves_norm(rng):
    X = rng.standard_normal((5, 3, 4))
    Z = reduce_inputs(X, learn_input_bases(X))
    assert Z.shape == (5, 12)
    assert np.allclose(np.linalg.norm(Z, axis=1), np.linalg.norm(X.reshape(5, -1), axis=1))


# -- coefficient tensors ---------------------------------------------------------------

def test_assemble_matches_explicit_products(rng):
    B = _true_coefficient(rng, [random_orthonormal(4, 2, rng)], (3, 5), (2, 2))
    full = assemble(B)
    assert full.shape == (4, 3, 5)
    want = np.einsum("abc,ia,jb,kc->ijk", B.core, B.input_factors[0], *B.output_factors)
    assert np.allclose(full, want, atol=1e-12)


def test_predict_two_paths_agree(rng):
    X, bases = _lowrank_inputs(rng, 6, (4, 3), (2, 2))
    B = _true_coefficient(rng, bases, (5, 2), (2, 1))
    fast = coefficient_predict(X, B)
    slow = batched_contract(X, assemble(B))
    assert np.allclose(fast, slow, atol=1e-10)
    assert np.allclose(fast[2], contract_oracle(X[2], assemble(B)), atol=1e-10)


def test_predict_is_linear_in_inputs(rng):
    X1, bases = _lowrank_inputs(rng, 4, (5,), (5,))
    X2 = rng.standard_normal(X1.shape)
    B = _true_coefficient(rng, bases, (3, 3), (2, 2))
    lhs = coefficient_predict(2.0 * X1 - 3.0 * X2, B)
    rhs = 2.0 * coefficient_predict(X1, B) - 3.0 * coefficient_predict(X2, B)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_zero_coefficients_predict_zero(rng):
    X = rng.standard_normal((3, 4))
    B = CoefficientTensor.zeros([np.eye(4)], [random_orthonormal(5, 2, rng)])
    assert not np.any(predict([X], [B]))


def test_predict_sums_over_inputs(rng):
    X1, b1 = _lowrank_inputs(rng, 5, (4,), (4,))
    X2, b2 = _lowrank_inputs(rng, 5, (3, 3), (3, 3))
    B1 = _true_coefficient(rng, b1, (4, 2), (2, 2))
    B2 = _true_coefficient(rng, b2, (4, 2), (2, 2))
    got = predict([X1, X2], [B1, B2])
    assert np.allclose(got, coefficient_predict(X1, B1) + coefficient_predict(X2, B2))
    assert np.allclose(got, predict_assembled([X1, X2], [B1, B2]), atol=1e-10)


def test_predict_mismatches(rng):
    B = CoefficientTensor.zeros([np.eye(4)], [np.eye(2)])
    with pytest.raises(ValueError):
        predict([np.zeros((2, 4)), np.zeros((2, 4))], [B])
    with pytest.raises(ValueError):
        coefficient_predict(np.zeros((2, 3)), B)


def test_coefficient_shape_validation():
    with pytest.raises(ValueError):
        CoefficientTensor(np.zeros((2, 2)), [np.eye(3)], [np.eye(2)])


# -- ALS ------------------------------------------------------------------------

def test_als_recovers_exact_coefficient(rng):
    X, bases = _lowrank_inputs(rng, 60, (6, 5), (2, 2))
    B = _true_coefficient(rng, bases, (7, 4), (3, 2))
    W = coefficient_predict(X, B)
    res = als_bcd_fit(W, X, bases, (3, 2), sweeps=50)
    err = np.linalg.norm(assemble(res.coefficient) - assemble(B)) / np.linalg.norm(assemble(B))
    assert err <= 1e-6
    assert res.objective[-1] <= 1e-12 * np.sum(W ** 2)


def test_als_zero_response_gives_zero(rng):
    X, bases = _lowrank_inputs(rng, 10, (4,), (2,))
    res = als_bcd_fit(np.zeros((10, 3, 3)), X, bases, (2, 2))
    assert not np.any(assemble(res.coefficient))


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_als_sweeps_do_not_increase_objective(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((15, 4, 3))
    bases = learn_input_bases(X, ranks=(2, 2))
    W = rng.standard_normal((15, 5, 4))
    res = als_bcd_fit(W, X, bases, (2, 2), sweeps=15, rng=rng)
    obj = np.asarray(res.objective)
    assert np.all(np.diff(obj) <= 1e-9 * obj[0])
    for V in res.coefficient.output_factors:
        assert np.allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-10)


def test_als_objective_matches_residual(rng):
    X = rng.standard_normal((12, 5))
    bases = learn_input_bases(X, ranks=[3])
    W = rng.standard_normal((12, 4, 3))
    res = als_bcd_fit(W, X, bases, (2, 2), sweeps=3)
    direct = np.sum((W - coefficient_predict(X, res.coefficient)) ** 2)
    assert res.objective[-1] == pytest.approx(direct, rel=1e-8)


def test_als_ridge_on_rank_deficient_design(rng):
    # duplicate samples times a wide basis: reduced gram is singular
    x = rng.standard_normal((1, 6))
    X = np.repeat(x, 4, axis=0)
    bases = [np.eye(6)]
    W = rng.standard_normal((4, 3, 3))
    res = als_bcd_fit(W, X, bases, (2, 2))
    assert res.ridge
    assert np.all(np.isfinite(res.coefficient.core))


def test_als_warm_start_keeps_bases(rng):
    X, bases = _lowrank_inputs(rng, 30, (5,), (3,))
    B = _true_coefficient(rng, bases, (6, 4), (2, 2))
    W = coefficient_predict(X, B)
    res = als_bcd_fit(W, X, bases, (2, 2), init=B, sweeps=0)
    assert np.allclose(assemble(res.coefficient), assemble(B), atol=1e-8)


@pytest.mark.parametrize("ranks", [(0, 2), (5, 2), (2,)])
def test_als_invalid_ranks(rng, ranks):
    X = rng.standard_normal((5, 3))
    with pytest.raises(ValueError):
        als_bcd_fit(rng.standard_normal((5, 4, 3)), X, [np.eye(3)], ranks)


def test_als_rejects_nonfinite(rng):
    W = np.full((3, 2, 2), np.nan)
    with pytest.raises(ValueError):
        als_bcd_fit(W, rng.standard_normal((3, 2)), [np.eye(2)], (1, 1))
