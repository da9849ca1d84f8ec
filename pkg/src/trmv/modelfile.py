"""
Fitted-model files.

A model is a zip archive holding ``manifest.json`` and one TNSR block per
core and basis matrix. Entry timestamps are fixed, so saving the same model
twice gives identical bytes.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

from . import __version__
from .io import FormatError, tensor_from_bytes, tensor_to_bytes
from .regression import CoefficientTensor
from .solver import TrmvConfig, TrmvModel

__all__ = ["MODEL_FORMAT", "save_model", "load_model"]

MODEL_FORMAT = 1
_STAMP = (1980, 1, 1, 0, 0, 0)


def _write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_STAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_model(model: TrmvModel, path) -> None:
    manifest = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "config": model.config.to_dict(),
        "response_rank": list(model.response_rank),
        "coefficients": [
            {
                "input_modes": B.n_input_modes,
                "output_modes": len(B.output_factors),
                "input_shape": list(B.input_shape),
                "output_shape": list(B.output_shape),
                "input_ranks": list(B.input_ranks),
                "output_ranks": list(B.output_ranks),
            }
            for B in model.coefficients
        ],
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode())
        for j, B in enumerate(model.coefficients, start=1):
            _write(zf, f"B{j}/core.tnsr", tensor_to_bytes(B.core))
            for i, U in enumerate(B.input_factors, start=1):
                _write(zf, f"B{j}/U{i}.tnsr", tensor_to_bytes(U))
            for i, V in enumerate(B.output_factors, start=1):
                _write(zf, f"B{j}/V{i}.tnsr", tensor_to_bytes(V))


def load_model(path) -> TrmvModel:
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise FormatError(f"{path} is not a model file") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as exc:
            raise FormatError(f"{path} has no manifest") from exc
        if manifest.get("format") != MODEL_FORMAT:
            raise FormatError(f"unsupported model format {manifest.get('format')!r}")
        coefs = []
        try:
            for j, meta in enumerate(manifest["coefficients"], start=1):
                core = tensor_from_bytes(zf.read(f"B{j}/core.tnsr"))
                U = [tensor_from_bytes(zf.read(f"B{j}/U{i}.tnsr"))
                     for i in range(1, meta["input_modes"] + 1)]
                V = [tensor_from_bytes(zf.read(f"B{j}/V{i}.tnsr"))
                     for i in range(1, meta["output_modes"] + 1)]
                coefs.append(CoefficientTensor(core, U, V))
        except KeyError as exc:
            raise FormatError(f"{path} is missing a block: {exc}") from exc
    cfg = TrmvConfig(**manifest["config"])
    return TrmvModel(coefs, tuple(manifest["response_rank"]), cfg)
