"""
Replicated comparisons of the joint fit against the two-stage baseline.

An :class:`ExperimentConfig` names a generator, its fixed parameters, the
grid of cells to sweep (missing fraction, noise level, and any other
generator parameter) and the seeds to replicate each cell over. Every seed
produces one dataset that both methods see, so the comparison is paired.
Configs are stored as JSON.
"""

from __future__ import annotations

import csv
import inspect
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baseline import tc_mtot_fit
from .datagen import overlay_generate, procedure_a, procedure_b, substream
from .metrics import spe, tspe, tspe_defined
from .solver import TrmvConfig, default_config, fit
from .tensor import ObservationMask

__all__ = [
    "GENERATORS",
    "METHODS",
    "ExperimentConfig",
    "ExperimentReport",
    "RECORD_FIELDS",
    "SUMMARY_FIELDS",
    "run_experiment",
    "run_replicate",
    "cross_validate_lambda",
]

log = logging.getLogger(__name__)

GENERATORS = {
    "procedure_a": procedure_a,
    "procedure_b": procedure_b,
    "overlay": overlay_generate,
}
METHODS = ("trmv", "tcmtot")

RECORD_FIELDS = [
    "method", "generator", "cell", "missing", "sigma", "seed", "status",
    "spe", "tspe", "tspe_defined", "ranks", "iterations", "seconds",
    "checksum", "error",
]
SUMMARY_FIELDS = [
    "method", "generator", "cell", "missing", "sigma", "n", "failed",
    "spe_mean", "spe_sd", "tspe_mean", "tspe_sd", "out_of_domain",
]


@dataclass
class ExperimentConfig:
    """A grid of cells, each replicated over ``seeds``.

    ``params`` are fixed generator keyword arguments; ``sweep`` maps further
    generator arguments to the values to vary. ``solver`` overrides
    :class:`trmv.solver.TrmvConfig` fields for both methods.
    """

    generator: str = "procedure_b"
    params: Dict = field(default_factory=dict)
    missing: List[float] = field(default_factory=lambda: [0.8, 0.9])
    sigma: List[float] = field(default_factory=lambda: [0.0])
    sweep: Dict[str, list] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    solver: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        accepted = set(inspect.signature(GENERATORS[self.generator]).parameters)
        reserved = {"missing", "sigma", "seed"}
        for key in list(self.params) + list(self.sweep):
            if key not in accepted or key in reserved:
                raise ValueError(f"{self.generator} has no settable parameter {key!r}")
        bad = [mth for mth in self.methods if mth not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be drawn from {METHODS}")
        unknown = set(self.solver) - set(TrmvConfig.__dataclass_fields__) - {"seed"}
        if unknown:
            raise ValueError(f"unknown solver settings {sorted(unknown)}")
        if not self.seeds or not self.missing or not self.sigma:
            raise ValueError("seeds, missing and sigma must be nonempty")
        self.missing = [float(r) for r in self.missing]
        self.sigma = [float(s) for s in self.sigma]
        self.seeds = [int(s) for s in self.seeds]

    def cells(self) -> List[dict]:
        """Every combination of swept parameters, missing level and noise."""
        keys = sorted(self.sweep)
        out = []
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            for r in self.missing:
                for s in self.sigma:
                    out.append(dict(zip(keys, combo), missing=r, sigma=s))
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment settings {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _cell_label(cell: dict) -> str:
    extra = {k: v for k, v in cell.items() if k not in ("missing", "sigma")}
    return json.dumps(extra, sort_keys=True) if extra else ""


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: List[dict] = field(default_factory=list)

    def summary(self) -> List[dict]:
        """Mean and sample standard deviation per cell and method.

        TSPE statistics cover only replicates where the transform is
        defined; ``out_of_domain`` counts the rest, so a nonzero value flags
        the cell.
        """
        groups: Dict[tuple, List[dict]] = {}
        for rec in self.records:
            key = (rec["method"], rec["generator"], rec["cell"], rec["missing"], rec["sigma"])
            groups.setdefault(key, []).append(rec)
        rows = []
        for key, recs in groups.items():
            ok = [r for r in recs if r["status"] == "ok"]
            spes = np.array([r["spe"] for r in ok])
            ts = np.array([r["tspe"] for r in ok if r["tspe_defined"]])
            rows.append(dict(
                zip(("method", "generator", "cell", "missing", "sigma"), key),
                n=len(recs),
                failed=len(recs) - len(ok),
                spe_mean=_mean(spes),
                spe_sd=_sd(spes),
                tspe_mean=_mean(ts),
                tspe_sd=_sd(ts),
                out_of_domain=len(ok) - len(ts),
            ))
        return rows

    def records_csv(self, timing: bool = True) -> str:
        rows = []
        for rec in self.records:
            rec = dict(rec)
            if not timing:
                rec["seconds"] = ""
            rows.append(rec)
        return _to_csv(RECORD_FIELDS, rows)

    def summary_csv(self) -> str:
        return _to_csv(SUMMARY_FIELDS, self.summary())

    def write(self, directory, timing: bool = True) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "records.csv").write_text(self.records_csv(timing))
        (d / "summary.csv").write_text(self.summary_csv())
        (d / "config.json").write_text(self.config.to_json())


def _mean(a: np.ndarray) -> float:
    return float(np.mean(a)) if a.size else float("nan")


def _sd(a: np.ndarray) -> float:
    return float(np.std(a, ddof=1)) if a.size > 1 else float("nan")


def _to_csv(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def run_replicate(cfg: ExperimentConfig, cell: dict, seed: int) -> List[dict]:
    """Generate one dataset for ``cell`` and fit every configured method on it."""
    kwargs = dict(cfg.params)
    kwargs.update(cell)
    ds = GENERATORS[cfg.generator](seed=seed, **kwargs)
    checksum = ds.checksum()
    Y0 = ds.observed_response
    base = dict(generator=cfg.generator, cell=_cell_label(cell), missing=cell["missing"],
                sigma=cell["sigma"], seed=seed, checksum=checksum)
    out = []
    for method in cfg.methods:
        rec = dict(base, method=method, status="ok", spe=float("nan"), tspe=float("nan"),
                   tspe_defined=False, ranks="", iterations=0, seconds=0.0, error="")
        t0 = time.perf_counter()
        try:
            solver_cfg = default_config(Y0.shape, **dict(cfg.solver, seed=seed))
            runner = fit if method == "trmv" else tc_mtot_fit
            model = runner(ds.train_inputs, Y0, ds.mask, solver_cfg)
            err = spe(ds.test_response, model.predict(ds.test_inputs))
            if not np.isfinite(err):
                raise FloatingPointError("prediction is not finite")
            rec.update(spe=err, tspe=tspe(err), tspe_defined=tspe_defined(err),
                       ranks="x".join(str(r) for r in model.response_rank),
                       iterations=model.diagnostics.iterations)
        except Exception as exc:  # recorded, not dropped
            log.warning("%s failed on seed %d: %s", method, seed, exc)
            rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        rec["seconds"] = time.perf_counter() - t0
        out.append(rec)
    return out


def _run_task(args):
    cfg, cell, seed = args
    return run_replicate(cfg, cell, seed)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, progress=None) -> ExperimentReport:
    """Run every cell and seed of ``cfg``.

    With ``workers > 1`` replicates run in separate processes; records are
    still ordered by cell, then seed, then method.
    """
    tasks = [(cfg, cell, seed) for cell in cfg.cells() for seed in cfg.seeds]
    report = ExperimentReport(cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = []
        for i, task in enumerate(tasks):
            results.append(_run_task(task))
            if progress is not None:
                progress(i + 1, len(tasks))
    for recs in results:
        report.records.extend(recs)
    return report


def cross_validate_lambda(
    inputs: Sequence,
    Y0,
    mask: ObservationMask,
    grid: Sequence[float],
    folds: int = 3,
    cfg: Optional[TrmvConfig] = None,
    seed: int = 0,
    return_scores: bool = False,
):
    """Pick ``lam`` from ``grid`` by hiding folds of the observed entries.

    Each fold's entries are removed from the mask, the model is fitted on
    the rest, and its prediction is scored by SPE on the hidden entries.
    The grid value with the smallest mean score wins; ties go to the
    earlier value.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty lambda grid")
    if folds < 2:
        raise ValueError("need at least two folds")
    Y0 = np.asarray(Y0, dtype=np.float64)
    obs = mask.observed
    if obs.size < folds:
        raise ValueError("fewer observed entries than folds")
    base = cfg or default_config(Y0.shape)
    order = substream(seed, "cv").permutation(obs.size)
    parts = np.array_split(order, folds)
    flat = Y0.reshape(-1)
    scores = []
    for lam in grid:
        fold_scores = []
        for part in parts:
            held = obs[np.sort(part)]
            keep = np.setdiff1d(obs, held, assume_unique=True)
            sub = ObservationMask(mask.shape, keep)
            c = TrmvConfig(**dict(base.to_dict(), lam=lam))
            model = fit(inputs, Y0, sub, c)
            pred = model.predict(inputs).reshape(-1)
            fold_scores.append(spe(flat[held], pred[held]))
        scores.append(float(np.mean(fold_scores)))
    best = grid[int(np.argmin(scores))]
    return (best, scores) if return_scores else best
