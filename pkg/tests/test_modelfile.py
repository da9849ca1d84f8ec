import zipfile

import numpy as np
import pytest

from trmv.io import FormatError
from trmv.modelfile import load_model, save_model
from trmv.regression import CoefficientTensor, random_orthonormal
from trmv.solver import TrmvModel, default_config


def _model(rng):
    B1 = CoefficientTensor(rng.standard_normal((2, 2, 3)), [random_orthonormal(5, 2, rng)],
                           [random_orthonormal(4, 2, rng), random_orthonormal(6, 3, rng)])
    B2 = CoefficientTensor(rng.standard_normal((2, 1, 2, 3)),
                           [random_orthonormal(3, 2, rng), random_orthonormal(3, 1, rng)],
                           [random_orthonormal(4, 2, rng), random_orthonormal(6, 3, rng)])
    return TrmvModel([B1, B2], (2, 3), default_config((7, 4, 6), lam=0.5))


def test_roundtrip_predicts_identically(tmp_path, rng):
    model = _model(rng)
    save_model(model, tmp_path / "m.zip")
    back = load_model(tmp_path / "m.zip")
    X = [rng.standard_normal((3, 5)), rng.standard_normal((3, 3, 3))]
    assert np.array_equal(back.predict(X), model.predict(X))
    assert back.response_rank == (2, 3)
    assert back.config == model.config


def test_bytes_are_reproducible(tmp_path, rng):
    model = _model(rng)
    save_model(model, tmp_path / "a.zip")
    save_model(model, tmp_path / "b.zip")
    assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()


def test_rejects_non_model(tmp_path):
    (tmp_path / "x").write_bytes(b"not a zip")
    with pytest.raises(FormatError):
        load_model(tmp_path / "x")
    with zipfile.ZipFile(tmp_path / "y.zip", "w") as zf:
        zf.writestr("other.txt", "hi")
    with pytest.raises(FormatError):
        load_model(tmp_path / "y.zip")


def test_rejects_missing_block(tmp_path, rng):
    save_model(_model(rng), tmp_path / "m.zip")
    with zipfile.ZipFile(tmp_path / "m.zip") as src, \
            zipfile.ZipFile(tmp_path / "cut.zip", "w") as dst:
        for item in src.infolist():
            if item.filename != "B2/V1.tnsr":
                dst.writestr(item, src.read(item))
    with pytest.raises(FormatError):
        load_model(tmp_path / "cut.zip")
