"""
Command-line entry point: ``trmv gen | fit | predict | eval | bench``.

Exit codes: 0 success, 2 usage error, 3 data error (missing or malformed
files, inconsistent shapes, invalid parameters), 4 numerical failure.
Where a subcommand takes ``--config``, values from that JSON file override
flags, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baseline import tc_mtot_fit
from .datagen import load_dataset, overlay_generate, procedure_a, procedure_b, save_dataset
from .experiments import ExperimentConfig, run_experiment
from .io import FormatError, load_tensor, save_tensor
from .metrics import spe, tspe
from .modelfile import load_model, save_model
from .solver import default_config, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("trmv")


class UsageError(Exception):
    pass


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _dims_list(text: str) -> tuple:
    # "60;50,50" -> ((60,), (50, 50))
    return tuple(_ints(part) for part in text.split(";"))


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _read_config(path) -> dict:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _merge(defaults: dict, flags: dict, config: dict) -> dict:
    out = dict(defaults)
    out.update({k: v for k, v in flags.items() if v is not None})
    out.update(config)
    return out


# -- gen ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.overlay == (args.proc is not None):
        raise UsageError("choose exactly one of --proc or --overlay")
    m_train, m_test = args.train, args.test
    if args.samples is not None:
        m_train = m_train if m_train is not None else args.samples // 2
        m_test = m_test if m_test is not None else args.samples - m_train
    flags = dict(m_train=m_train, m_test=m_test, sigma=args.sigma, missing=args.missing,
                 mask_policy=args.mask_policy)
    if args.overlay:
        generator = overlay_generate
        flags.update(n_points=args.points,
                     scales=_floats(args.scales) if args.scales else None)
    elif args.proc == "a":
        generator = procedure_a
        grid = _ints(args.grid) if args.grid else (None, None)
        if len(grid) == 1:
            grid = grid * 2
        flags.update(p=args.p, rho_c=args.rho_c, n_s=grid[0], n_t=grid[1])
    else:
        generator = procedure_b
        flags.update(
            input_dims=_dims_list(args.input_dims) if args.input_dims else None,
            output_dims=_ints(args.output_dims) if args.output_dims else None,
            input_ranks=_ints(args.input_ranks) if args.input_ranks else None,
            output_rank=args.output_rank,
        )
    params = _merge({}, flags, _read_config(args.config))
    params["seed"] = params.get("seed", args.seed)
    ds = generator(**params)
    save_dataset(ds, args.out)
    shapes = ", ".join(f"X{j}{tuple(X.shape)}" for j, X in enumerate(ds.inputs, start=1))
    print(f"wrote {args.out}: {shapes}, Y{tuple(ds.response.shape)}, "
          f"{ds.mask.count} observed training entries")
    return EXIT_OK


# -- fit ---------------------------------------------------------------------

def _solver_flags(args) -> dict:
    return dict(lam=args.lam, rho=args.rho, max_iter=args.max_iter,
                admm_max_iter=args.admm_max_iter, rank_ratio=args.rank_ratio,
                seed=args.seed)


def cmd_fit(args) -> int:
    ds = load_dataset(args.data)
    Y0 = ds.observed_response
    settings = _merge({}, _solver_flags(args), _read_config(args.config))
    cfg = default_config(Y0.shape, **settings)
    runner = fit if args.method == "trmv" else tc_mtot_fit
    model = runner(ds.train_inputs, Y0, ds.mask, cfg)
    diag = model.diagnostics
    if not np.all(np.isfinite(diag.objective)):
        raise FloatingPointError("objective became non-finite")
    save_model(model, args.model)
    if args.diagnostics:
        header = dict(method=args.method, data=args.data, **cfg.to_dict())
        Path(args.diagnostics).write_text(diag.to_csv(header))
    print(f"{args.method}: {diag.iterations} iterations, response rank "
          f"{'x'.join(map(str, model.response_rank))}, objective {diag.objective[-1]:.6g}")
    return EXIT_OK


# -- predict / eval ----------------------------------------------------------

def _split_rows(ds, split: str):
    return {"train": ds.train, "test": ds.test, "all": np.arange(ds.response.shape[0])}[split]


def cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data)
    rows = _split_rows(ds, args.split)
    Yhat = model.predict([X[rows] for X in ds.inputs])
    save_tensor(args.out, Yhat)
    print(f"wrote {args.out}: shape {tuple(Yhat.shape)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.truth is None and args.data is None:
        raise UsageError("eval needs --truth or --data")
    pred = load_tensor(args.pred)
    if args.truth is not None:
        truth = load_tensor(args.truth)
    else:
        ds = load_dataset(args.data)
        truth = ds.response[_split_rows(ds, args.split)]
    value = spe(truth, pred)
    t = tspe(value)
    shown = "undefined (SPE >= 1)" if np.isnan(t) else f"{t:.6g}"
    print(f"SPE {value:.6g}")
    print(f"TSPE {shown}")
    return EXIT_OK


# -- bench -------------------------------------------------------------------

def preset(name: str) -> dict:
    """Built-in desk-scale experiment grids."""
    desk_b = dict(input_dims=[[30], [25, 25]], output_dims=[30, 20], input_ranks=[3, 3])
    if name == "table3":
        return dict(generator="procedure_b", params=dict(desk_b, output_rank=5),
                    missing=[0.6, 0.7, 0.8, 0.9],
                    sigma=[0.0, 0.002, 0.004, 0.006, 0.008, 0.01])
    if name == "fig10":
        return dict(generator="procedure_b",
                    params=dict(input_dims=[[30], [20, 20]], output_dims=[20, 30],
                                input_ranks=[2, 2]),
                    missing=[0.8, 0.9], sweep=dict(output_rank=[3, 4, 5, 6, 7, 8]))
    if name == "curves":
        return dict(generator="procedure_a", params=dict(n_s=50, n_t=50), missing=[0.8, 0.9])
    if name == "overlay":
        return dict(generator="overlay", missing=[0.8, 0.9])
    raise UsageError(f"unknown preset {name!r}")


def cmd_bench(args) -> int:
    if args.preset is None and args.config is None:
        raise UsageError("bench needs --preset, --config or both")
    data = preset(args.preset) if args.preset else {}
    if args.seeds is not None:
        data["seeds"] = list(range(args.seeds))
    # a config file refines the preset key by key
    for key, value in _read_config(args.config).items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = dict(data[key], **value)
        else:
            data[key] = value
    cfg = ExperimentConfig.from_dict(data)

    def progress(i, n):
        log.info("replicate %d/%d", i, n)

    report = run_experiment(cfg, workers=args.workers, progress=progress)
    report.write(args.out, timing=not args.no_timing)
    failed = sum(r["status"] != "ok" for r in report.records)
    print(f"wrote {args.out}: {len(report.records)} records, "
          f"{len(report.summary())} summary rows, {failed} failed")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trmv", description="Tensor regression with a partially observed response.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset directory")
    g.add_argument("--proc", choices=["a", "b"], help="functional (a) or Fourier-tensor (b) data")
    g.add_argument("--overlay", action="store_true", help="wafer overlay data")
    g.add_argument("--defaults", action="store_true", help="use the generator defaults (no-op)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--samples", type=int, help="total samples, split evenly")
    g.add_argument("--train", type=int)
    g.add_argument("--test", type=int)
    g.add_argument("--missing", type=float, help="fraction of training entries removed")
    g.add_argument("--sigma", type=float, help="noise standard deviation")
    g.add_argument("--mask-policy", choices=["global", "per-sample"])
    g.add_argument("--p", type=int, help="number of input curves (a)")
    g.add_argument("--rho-c", type=float, help="input cross-correlation (a)")
    g.add_argument("--grid", help="grid sizes n_s,n_t (a)")
    g.add_argument("--input-dims", help="e.g. '60;50,50' (b)")
    g.add_argument("--output-dims", help="e.g. '60,40' (b)")
    g.add_argument("--input-ranks", help="e.g. '3,3' (b)")
    g.add_argument("--output-rank", type=int, help="(b)")
    g.add_argument("--points", type=int, help="wafer points (overlay)")
    g.add_argument("--scales", help="six comma-separated coefficient scales (overlay)")
    g.add_argument("--config", help="JSON object of generator arguments")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit a model on a dataset directory")
    f.add_argument("data")
    f.add_argument("--method", choices=["trmv", "tcmtot"], default="trmv")
    f.add_argument("--model", required=True, help="output model file")
    f.add_argument("--diagnostics", help="output per-iteration CSV")
    f.add_argument("--config", help="JSON object of solver settings")
    f.add_argument("--lam", type=float)
    f.add_argument("--rho", type=float)
    f.add_argument("--max-iter", type=int)
    f.add_argument("--admm-max-iter", type=int)
    f.add_argument("--rank-ratio", type=float)
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict responses for a dataset split")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--split", choices=["train", "test", "all"], default="test")
    pr.add_argument("-o", "--out", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="print SPE and TSPE of a prediction")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", help="reference tensor file")
    e.add_argument("--data", help="dataset directory holding the reference")
    e.add_argument("--split", choices=["train", "test", "all"], default="test")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run a replicated comparison and write CSV reports")
    b.add_argument("--preset", help="table3, fig10, curves or overlay")
    b.add_argument("--config", help="JSON experiment config; refines --preset when both are given")
    b.add_argument("--seeds", type=int, help="replicates per cell (seeds 0..N-1)")
    b.add_argument("--workers", type=int, default=1, help="parallel replicates")
    b.add_argument("--no-timing", action="store_true", help="leave wall times blank")
    b.add_argument("-o", "--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"trmv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"trmv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"trmv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
