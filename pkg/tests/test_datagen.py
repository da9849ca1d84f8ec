import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trmv.datagen import (
    cov_sigma1,
    cov_sigma2,
    fourier_basis,
    gen_mask,
    gp_sample,
    gram_matrix,
    load_dataset,
    midpoint_grid,
    overlay_basis,
    overlay_field,
    overlay_generate,
    procedure_a,
    procedure_b,
    save_dataset,
    substream,
    wafer_points,
)
from trmv.linalg import tucker_rank_estimate
from trmv.metrics import spe
from trmv.tensor import batched_contract


# -- kernels and GP draws ----------------------------------------------------------

def test_kernels_at_zero_distance():
    assert cov_sigma1(0.3, 0.3) == 1.0
    assert cov_sigma2(0.3, 0.3) == 1.0


def test_sigma1_example():
    assert cov_sigma1(0.0, 0.05) == pytest.approx((1 + 1 + 1 / 3) * np.exp(-1.0), rel=1e-14)


def test_sigma2_example():
    assert cov_sigma2(0.0, 0.5) == pytest.approx(np.exp(-1.0), rel=1e-14)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_kernels_symmetric_and_bounded(z, zp):
    for k in (cov_sigma1, cov_sigma2):
        assert k(z, zp) == k(zp, z)
        assert 0.0 <= k(z, zp) <= 1.0 + 1e-15


def test_gp_monte_carlo_covariance():
    grid = np.array([0.0, 0.1, 0.25, 0.5, 0.9])
    draws = gp_sample(grid, cov_sigma2, substream(3, "structure"), size=10_000)
    emp = draws.T @ draws / draws.shape[0]
    K = gram_matrix(grid, cov_sigma2)
    big = K > 0.2  # relative comparison where the covariance is not tiny
    assert np.all(np.abs(emp[big] - K[big]) <= 0.05 * K[big])
    assert np.all(np.abs(emp[~big] - K[~big]) <= 0.05)


def test_gp_identity_kernel_is_white_noise():
    grid = np.arange(6.0)
    draws = gp_sample(grid, lambda a, b: (a == b).astype(float), np.random.default_rng(0), 5000)
    assert np.allclose(draws.var(axis=0), 1.0, atol=0.06)


def test_gp_is_seeded():
    grid = midpoint_grid(20, 0, 1)
    a = gp_sample(grid, cov_sigma1, substream(5, "structure"))
    b = gp_sample(grid, cov_sigma1, substream(5, "structure"))
    assert a.shape == (20,) and np.array_equal(a, b)


def test_gp_rejects_duplicate_points():
    with pytest.raises(ValueError):
        gp_sample([0.0, 0.0, 1.0], cov_sigma1, np.random.default_rng(0))


def test_gp_non_pd_fails():
    with pytest.raises(np.linalg.LinAlgError):
        gp_sample([0.0, 1.0], lambda a, b: -np.ones_like(a - b), np.random.default_rng(0))


def test_midpoint_grid():
    assert np.allclose(midpoint_grid(4, 0, 2), [0.25, 0.75, 1.25, 1.75])


# -- procedure A -----------------------------------------------------------------------

def test_procedure_a_default_shapes():
    ds = procedure_a(m_train=5, m_test=3)
    assert len(ds.inputs) == 2
    assert ds.inputs[0].shape == (8, 100) and ds.response.shape == (8, 100)
    assert ds.mask.shape == (5, 100) and ds.mask.is_full
    assert ds.coefficients[0].shape == (100, 100)


def test_procedure_a_self_consistent():
    ds = procedure_a(m_train=10, m_test=10, n_s=40, n_t=30, seed=4)
    Y = sum(batched_contract(X, B) for X, B in zip(ds.inputs, ds.coefficients))
    assert spe(ds.response, Y) <= 1e-10


def test_procedure_a_input_correlation():
    ds = procedure_a(m_train=10_000, m_test=0, rho_c=0.6, n_s=5, n_t=5, seed=1)
    x1, x2 = ds.inputs[0][:, 2], ds.inputs[1][:, 2]
    assert np.corrcoef(x1, x2)[0, 1] == pytest.approx(0.6, abs=0.05)
    ds0 = procedure_a(m_train=10_000, m_test=0, rho_c=0.0, n_s=5, n_t=5, seed=1)
    assert abs(np.corrcoef(ds0.inputs[0][:, 2], ds0.inputs[1][:, 2])[0, 1]) <= 0.05


def test_procedure_a_sigma_changes_only_noise():
    a = procedure_a(m_train=6, m_test=2, n_s=20, n_t=20, sigma=0.0, missing=0.5, seed=9)
    b = procedure_a(m_train=6, m_test=2, n_s=20, n_t=20, sigma=0.1, missing=0.5, seed=9)
    for Xa, Xb in zip(a.inputs, b.inputs):
        assert np.array_equal(Xa, Xb)
    assert a.mask == b.mask
    noise = b.response - a.response
    assert 0.05 < noise.std() < 0.15


@pytest.mark.parametrize("kw", [{"p": 0}, {"rho_c": 1.0}, {"rho_c": -0.1}])
def test_procedure_a_invalid(kw):
    with pytest.raises(ValueError):
        procedure_a(m_train=2, m_test=1, n_s=5, n_t=5, **kw)


# -- procedure B -----------------------------------------------------------------------------

def test_fourier_basis_first_columns():
    F = fourier_basis(8, 3)
    x = np.arange(1, 9) / 8
    assert np.allclose(F[:, 0], np.cos(2 * np.pi * x))
    assert np.allclose(F[:, 1], np.sin(4 * np.pi * x))
    assert np.allclose(F[:, 2], np.cos(6 * np.pi * x))
    with pytest.raises(ValueError):
        fourier_basis(3, 4)


def test_procedure_b_default_shapes():
    ds = procedure_b(m_train=2, m_test=1)
    assert ds.inputs[0].shape == (3, 60) and ds.inputs[1].shape == (3, 50, 50)
    assert ds.response.shape == (3, 60, 40)
    assert ds.coefficients[0].shape == (60, 60, 40)
    assert ds.coefficients[1].shape == (50, 50, 60, 40)


def test_procedure_b_self_consistent_and_low_rank():
    ds = procedure_b(input_dims=((20,), (15, 15)), output_dims=(20, 12), output_rank=4,
                     m_train=20, m_test=5, seed=2)
    Y = sum(batched_contract(X, B) for X, B in zip(ds.inputs, ds.coefficients))
    assert spe(ds.response, Y) <= 1e-10
    ranks = tucker_rank_estimate(ds.response, 1 - 1e-9, modes=[1, 2])
    assert all(r <= 4 for r in ranks)


def test_procedure_b_invalid_ranks():
    with pytest.raises(ValueError):
        procedure_b(input_dims=((4,),), output_dims=(5, 5), input_ranks=(5,), output_rank=2)
    with pytest.raises(ValueError):
        procedure_b(input_dims=((4,),), output_dims=(5, 3), input_ranks=(2,), output_rank=4)


# -- overlay --------------------------------------------------------------------------------

def test_overlay_basis_selection_is_exact():
    pts = wafer_points(50)
    kx = np.zeros(10)
    kx[1] = 1.0
    assert np.array_equal(overlay_field(kx, pts), pts[:, 0])
    ky = np.zeros(10)
    ky[2] = 1.0
    assert np.array_equal(overlay_field(ky, pts), pts[:, 1])
    assert not np.any(overlay_field(np.zeros(10), pts))


def test_overlay_basis_terms():
    b = overlay_basis([[2.0, 3.0]])[:, 0]
    assert np.array_equal(b, [1, 2, 3, 4, 6, 9, 8, 12, 18, 27])


def test_wafer_points_in_unit_disk():
    pts = wafer_points(200)
    assert pts.shape == (200, 2)
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 1.0)


def test_overlay_generate_layout_and_consistency():
    ds = overlay_generate(n_points=30, m_train=100, m_test=100, seed=1)
    assert ds.inputs[0].shape == (200, 6) and ds.response.shape == (200, 2, 30)
    assert len(ds.train) == 100 and len(ds.test) == 100
    K = ds.inputs[0]
    pts = wafer_points(30)
    # F_x = k1 + k3 x + k5 y and F_y = k2 + k4 x + k6 y
    assert np.allclose(ds.response[:, 0], K[:, [0]] + K[:, [2]] * pts[:, 0] + K[:, [4]] * pts[:, 1])
    assert np.allclose(ds.response[:, 1], K[:, [1]] + K[:, [3]] * pts[:, 0] + K[:, [5]] * pts[:, 1])
    assert spe(ds.response, batched_contract(K, ds.coefficients[0])) <= 1e-10


def test_overlay_zero_signature_gives_zero_field():
    ds = overlay_generate(n_points=10, m_train=3, m_test=0, scales=[0.0] * 6)
    assert not np.any(ds.response)


def test_overlay_degenerate_points():
    with pytest.raises(ValueError):
        overlay_generate(points=np.zeros((5, 2)), m_train=2, m_test=0)


# -- masks ---------------------------------------------------------------------------------

def test_mask_counts():
    assert gen_mask((100, 100), 0.8).count == 2000
    assert gen_mask((4, 5), 0.0).is_full


def test_per_sample_mask():
    m = gen_mask((10, 20), 0.75, "per-sample", seed=3)
    assert np.all(m.bitmap().sum(axis=1) == 5)
    with pytest.raises(ValueError):
        gen_mask((3, 2), 0.9, "per-sample")


def test_global_mask_warns_on_empty_sample():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gen_mask((50, 2), 0.9, seed=0)
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 0.95), st.integers(0, 1000))
def test_mask_is_seeded_and_exact(a, b, r, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m1 = gen_mask((a, b), r, seed=seed)
        m2 = gen_mask((a, b), r, seed=seed)
    assert m1 == m2
    assert m1.count == a * b - int(round(r * a * b))


@pytest.mark.parametrize("bad", [1.0, -0.1])
def test_mask_invalid_fraction(bad):
    with pytest.raises(ValueError):
        gen_mask((3, 3), bad)


def test_mask_unknown_policy():
    with pytest.raises(ValueError):
        gen_mask((3, 3), 0.5, "rows")


# -- datasets ---------------------------------------------------------------------------------

def test_observed_response_zeroes_missing():
    ds = procedure_b(input_dims=((6,),), output_dims=(5, 4), input_ranks=(2,), output_rank=2,
                     m_train=4, m_test=2, missing=0.5, seed=0)
    Yo = ds.observed_response
    bm = ds.mask.bitmap()
    assert np.array_equal(Yo[bm], ds.train_response[bm])
    assert not np.any(Yo[~bm])


def test_save_load_roundtrip(tmp_path):
    ds = procedure_a(m_train=4, m_test=2, n_s=10, n_t=8, missing=0.5, seed=3)
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.checksum() == ds.checksum()
    assert back.provenance == ds.provenance
    for a, b in zip(back.coefficients, ds.coefficients):
        assert np.array_equal(a, b)


def test_generators_are_deterministic():
    a = overlay_generate(n_points=10, m_train=5, m_test=5, missing=0.3, seed=8)
    b = overlay_generate(n_points=10, m_train=5, m_test=5, missing=0.3, seed=8)
    c = overlay_generate(n_points=10, m_train=5, m_test=5, missing=0.3, seed=9)
    assert a.checksum() == b.checksum() != c.checksum()
