"""Command-line harness: data generation, training, evaluation, benchmark
sweeps and well-data fitting.

Exit codes: 0 success, 2 usage, 3 input-data error, 4 numerical failure.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import REGIONS, SCENARIOS, generate, read_measurements, read_wells, write_measurements
from .fd_solver import SolverError, mae, max_abs_error, resample
from .fields import FieldGrid, read_field_csv, write_field_csv
from .geometry import BoxDomain
from .kernels import CoincidentPointsError
from .pibi import PibiModel, PointSourceSet, evaluate_field, gradient_field, init_sources
from .pinn import PinnConfig, PinnModel, evaluate_pinn_field, lambda_cross_validate, pinn_train
from .training import Dataset, NumericalError, TrainConfig, train

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4
OUTPUT_ENV = "PIBINET_OUTPUT_DIR"
DEFAULT_CELLS = ((50, "theta_ring"), (200, "theta_ring"), (100, "full_omega"), (500, "full_omega"))


class InputError(Exception):
    """Bad input files or arguments detected after parsing."""


# ---------------------------------------------------------------------------
# configuration plumbing


def _parse_bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _flag_name(field_name):
    return "lambda" if field_name == "lam" else field_name


def add_config_flags(parser, cls):
    """One ``--kebab-case`` flag per config field; unset flags stay ``None``."""
    for f in dataclasses.fields(cls):
        name = _flag_name(f.name)
        flag = "--" + name.replace("_", "-")
        default = f.default
        if isinstance(default, bool):
            kind = _parse_bool
        elif isinstance(default, int):
            kind = int
        elif isinstance(default, float):
            kind = float
        elif isinstance(default, tuple):
            kind = _int_list if f.name == "hidden" else _float_list
        else:
            kind = str
        parser.add_argument(flag, dest=f"cfg_{name}", type=kind, default=None,
                            metavar=name.upper())


def build_config(cls, args):
    """Merge ``--config`` JSON with explicit flags (flags win)."""
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
    known = {_flag_name(f.name) for f in dataclasses.fields(cls)}
    data = {k: v for k, v in data.items() if k in known}
    for name in known:
        value = getattr(args, f"cfg_{name}", None)
        if value is not None:
            data[name] = value
    try:
        return cls.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def default_output_dir():
    return Path(os.environ.get(OUTPUT_ENV, "pibinet-out"))


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir, command, config, seeds, inputs, outputs, started, extra=None):
    """Record what a command read and wrote; every listed output must exist."""
    out_dir = Path(out_dir)
    missing = [str(p) for p in outputs if not Path(p).exists()]
    if missing:
        raise RuntimeError(f"outputs missing at exit: {missing}")
    manifest = {
        "command": command,
        "config": config,
        "seeds": list(seeds),
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
        "wall_clock": time.perf_counter() - started,
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


def _parse_points(text, d=2):
    if not text:
        return None
    rows = [tuple(float(v) for v in item.split(",")) for item in text.split(";") if item.strip()]
    if any(len(r) != d for r in rows):
        raise InputError(f"expected {d} coordinates per point in {text!r}")
    return np.array(rows)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    started = time.perf_counter()
    out = Path(args.out or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    scenario = generate(args.scenario, args.region, args.n, args.seed, args.noise_std,
                        args.fd_spacing, args.n_sources,
                        outlier=False if args.no_outlier else None,
                        source_mode=args.source_mode)
    meas = out / "measurements.csv"
    truth = out / "truth.csv"
    write_measurements(scenario.data, meas)
    write_field_csv(scenario.truth, truth)
    write_manifest(out, "gen-data", scenario.info, [args.seed], [], [meas, truth], started,
                   {"sources": scenario.info["rhs_sources"],
                    "model_sources": scenario.info["model_sources"]})
    return 0


def _sources_from_args(args, domain, seed):
    m = args.sources or 0
    if m == 0:
        return PointSourceSet.empty(domain.dim)
    guesses = _parse_points(args.source_guess, domain.dim)
    if guesses is not None and len(guesses) != m:
        raise InputError(f"--source-guess gives {len(guesses)} points for {m} sources")
    return init_sources(m, domain, seed, guesses)


def _load_dataset(path):
    try:
        return read_measurements(path)
    except OSError as exc:
        raise InputError(str(exc)) from exc


def fit_pibi(data, config, sources=None, domain=None):
    domain = domain or BoxDomain.square()
    model = PibiModel.create(domain, sources=sources, integration_points=config.integration_points,
                             mode=config.sampling_mode, seed=config.seed,
                             epsilon=config.epsilon_enlarge,
                             layer_sizes=(domain.dim, *config.hidden, 1))
    return train(model, data, config)


def cmd_train(args):
    started = time.perf_counter()
    out = Path(args.out or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    data = _load_dataset(args.data)
    inputs = [args.data] + ([args.config] if args.config else [])
    domain = BoxDomain.square()
    outputs = []
    if args.method == "pibi":
        config = build_config(TrainConfig, args)
        sources = _sources_from_args(args, domain, config.seed)
        model, report = fit_pibi(data, config, sources, domain)
    else:
        config = build_config(PinnConfig, args)
        sources = _sources_from_args(args, domain, config.seed)
        if args.cfg_lambda_grid is not None:
            truth = None
            if args.truth:
                truth = read_field_csv(args.truth)
                inputs.append(args.truth)
            cv = lambda_cross_validate(data, config, domain, reference=truth, sources=sources)
            scores = out / "lambda_scores.csv"
            cv.write_csv(scores)
            outputs.append(scores)
            model, report = cv.model, cv.report
            report.config["lambda_physics"] = cv.best_lambda
        else:
            model, report = pinn_train(data, config, domain, sources)
    model_path, trace_path, report_path = out / "model.json", out / "loss_trace.csv", out / "report.json"
    write_json(model_path, model.to_dict())
    names = ("obs_loss", "boundary_loss", "total") if args.method == "pibi" else \
        ("data_loss", "physics_loss", "total")
    report.write_trace_csv(trace_path, names)
    write_json(report_path, report.to_dict())
    outputs += [model_path, trace_path, report_path]
    write_manifest(out, f"train {args.method}", report.config, [config.seed], inputs, outputs, started)
    return 0


def load_model(path):
    try:
        data = json.loads(Path(path).read_text())
        kind = data["kind"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    if kind not in ("pibi", "pinn"):
        raise InputError(f"unknown model kind {kind!r}")
    try:
        return PibiModel.from_dict(data) if kind == "pibi" else PinnModel.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model file {path}: {exc!r}") from exc


def evaluate_model(model, grid):
    if isinstance(model, PinnModel):
        return evaluate_pinn_field(model, grid)
    return evaluate_field(model, grid)


def score(model, truth, spacing=0.02):
    """Evaluate on a ``spacing`` grid spanning the truth grid and compare."""
    grid = FieldGrid.covering(truth.origin, truth.upper, spacing)
    field = evaluate_model(model, grid)
    ref = resample(truth, grid)
    metrics = {
        "mae": mae(field, ref),
        "max_abs_error": max_abs_error(field, ref),
        "masked_nodes": int(np.count_nonzero(field.mask | ref.mask)),
        "eval_spacing": spacing,
    }
    return field, metrics


def cmd_evaluate(args):
    started = time.perf_counter()
    out = Path(args.out or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    try:
        truth = read_field_csv(args.truth)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    lo, hi = np.asarray(truth.origin), np.asarray(truth.upper)
    domain = model.data_domain if isinstance(model, PibiModel) else model.domain
    if np.any(lo < np.asarray(domain.lower) - 1e-9) or np.any(hi > np.asarray(domain.upper) + 1e-9):
        raise InputError("truth grid extends beyond the model's domain")
    field, metrics = score(model, truth, args.spacing)
    field_path, metrics_path = out / "field.csv", out / "metrics.json"
    write_field_csv(field, field_path)
    write_json(metrics_path, metrics)
    write_manifest(out, "evaluate", {"spacing": args.spacing}, [], [args.model, args.truth],
                   [field_path, metrics_path], started)
    return 0


def run_cell(method, n, region, seed, config_dict, cell_dir, noise_std=0.2):
    """One benchmark cell: generate data, fit, score.  Writes into ``cell_dir``."""
    cell_dir = Path(cell_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    scenario = generate("laplace_eq15", region, n, seed, noise_std)
    write_measurements(scenario.data, cell_dir / "measurements.csv")
    write_field_csv(scenario.truth, cell_dir / "truth.csv")
    if method == "pibi":
        config = TrainConfig.from_dict({k: v for k, v in config_dict.items()
                                        if k in {_flag_name(f.name) for f in dataclasses.fields(TrainConfig)}})
        config = dataclasses.replace(config, seed=seed)
        model, report = fit_pibi(scenario.data, config)
        extra = {}
    else:
        config = dataclasses.replace(PinnConfig.from_dict(config_dict), seed=seed)
        cv = lambda_cross_validate(scenario.data, config, reference=scenario.truth)
        cv.write_csv(cell_dir / "lambda_scores.csv")
        model, report = cv.model, cv.report
        extra = {"best_lambda": cv.best_lambda}
    _, metrics = score(model, scenario.truth)
    metrics.update(extra, method=method, n=n, region=region, seed=seed)
    write_json(cell_dir / "model.json", model.to_dict())
    write_json(cell_dir / "metrics.json", metrics)
    return metrics


def _parse_cells(text):
    cells = []
    for item in text.split(","):
        n, _, region = item.partition(":")
        if region not in REGIONS:
            raise InputError(f"unknown region {region!r} in --cells")
        cells.append((int(n), region))
    return tuple(cells)


def cmd_benchmark(args):
    started = time.perf_counter()
    out = Path(args.out or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    methods = tuple(m for m in args.methods.split(",") if m)
    if any(m not in ("pibi", "pinn") for m in methods):
        raise InputError(f"unknown method in --methods {args.methods!r}")
    cells = _parse_cells(args.cells) if args.cells else DEFAULT_CELLS
    seeds = args.seeds if args.seeds is not None else tuple(range(10))
    config = build_config(PinnConfig, args).to_dict()
    jobs = [(m, n, r, s, config, out / f"{m}_n{n}_{r}" / f"seed{s}")
            for m in methods for n, r in cells for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(run_cell, *zip(*jobs)))
    else:
        results = [run_cell(*job) for job in jobs]

    table = out / "table.csv"
    lines = ["method,n,region,mean_mae,std_mae,seeds"]
    for m in methods:
        for n, r in cells:
            maes = np.array([res["mae"] for res in results
                             if res["method"] == m and res["n"] == n and res["region"] == r])
            lines.append(f"{m},{n},{r},{maes.mean():.17g},{maes.std():.17g},{len(maes)}")
    table.write_text("\n".join(lines) + "\n")
    outputs = [table] + [job[5] / name for job in jobs for name in
                         ("measurements.csv", "truth.csv", "model.json", "metrics.json")]
    outputs += [job[5] / "lambda_scores.csv" for job in jobs if job[0] == "pinn"]
    write_manifest(out, "benchmark", config, seeds, [], outputs, started,
                   {"cells": [list(c) for c in cells], "methods": list(methods)})
    return 0


def wells_transform(wells):
    """Isotropic map of well coordinates into [-1, 1]^2 and head standardisation.

    A single scale factor keeps the Laplacian invariant up to a constant.
    """
    xy = np.array([[w.x, w.y] for w in wells])
    heads = np.array([w.head for w in wells])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    center = 0.5 * (lo + hi)
    scale = 0.5 * float(np.max(hi - lo))
    if scale <= 0:
        raise InputError("all wells share the same location")
    centered = xy - xy.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-6 * sv[0]:
        warnings.warn("well locations are (nearly) collinear; the fit is poorly constrained",
                      stacklevel=2)
    std = float(heads.std())
    return {"center": center.tolist(), "scale": scale,
            "head_mean": float(heads.mean()), "head_std": std if std > 0 else 1.0}


def cmd_wells(args):
    started = time.perf_counter()
    out = Path(args.out or default_output_dir())
    out.mkdir(parents=True, exist_ok=True)
    try:
        wells = read_wells(args.wells)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    if len(wells) < 3:
        raise InputError("need at least 3 well records")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tf = wells_transform(wells)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    center, scale = np.asarray(tf["center"]), tf["scale"]
    mean, std = tf["head_mean"], tf["head_std"]
    points = (np.array([[w.x, w.y] for w in wells]) - center) / scale
    values = (np.array([w.head for w in wells]) - mean) / std
    data = Dataset(points, values)

    if args.cfg_integration_points is None:
        args.cfg_integration_points = 500
    config = build_config(TrainConfig, args)
    domain = BoxDomain.square()
    m = args.sources or 0
    sources = PointSourceSet.empty()
    if m:
        guesses = _parse_points(args.source_guess)
        if guesses is not None:
            if len(guesses) != m:
                raise InputError(f"--source-guess gives {len(guesses)} points for {m} sources")
            guesses = (guesses - center) / scale
        sources = init_sources(m, domain, config.seed, guesses)
    model, report = fit_pibi(data, config, sources, domain)

    grid = FieldGrid.covering(domain.lower, domain.upper, args.spacing)
    field = evaluate_field(model, grid)
    g1, g2 = gradient_field(field)
    user_origin = center + scale * np.asarray(grid.origin)
    user_field = FieldGrid(user_origin, scale * grid.spacing, mean + std * field.values, field.mask)
    field_path = out / "field.csv"
    write_field_csv(user_field, field_path)

    grad_path = out / "gradient.csv"
    nodes = user_field.nodes()
    with open(grad_path, "w") as fh:
        fh.write("x1,x2,du_dx1,du_dx2,masked\n")
        factor = std / scale
        for i in range(grid.shape[0]):
            for j in range(grid.shape[1]):
                fh.write(f"{nodes[i, j, 0]:.17g},{nodes[i, j, 1]:.17g},"
                         f"{factor * g1.values[i, j]:.17g},{factor * g2.values[i, j]:.17g},"
                         f"{int(g1.mask[i, j])}\n")

    fitted = [{"x": float(center[0] + scale * loc[0]), "y": float(center[1] + scale * loc[1]),
               "magnitude": float(std * c)}
              for loc, c in zip(model.sources.locations, model.sources.magnitudes)]
    sources_path = out / "sources.json"
    write_json(sources_path, {"sources": fitted, "transform": tf})
    model_path, trace_path, report_path = out / "model.json", out / "loss_trace.csv", out / "report.json"
    write_json(model_path, {**model.to_dict(), "transform": tf})
    report.write_trace_csv(trace_path)
    write_json(report_path, report.to_dict())
    write_manifest(out, "wells", report.config, [config.seed],
                   [args.wells] + ([args.config] if args.config else []),
                   [field_path, grad_path, sources_path, model_path, trace_path, report_path],
                   started, {"transform": tf})
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="pibinet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic measurement set")
    p.add_argument("--scenario", choices=SCENARIOS, default="laplace_eq15")
    p.add_argument("--region", choices=REGIONS, default="theta_ring")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.2)
    p.add_argument("--fd-spacing", type=float, default=0.2)
    p.add_argument("--n-sources", type=int, default=5)
    p.add_argument("--source-mode", choices=("bilinear", "gaussian"), default="bilinear")
    p.add_argument("--no-outlier", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a measurement CSV")
    p.add_argument("--method", required=True, choices=("pibi", "pinn"))
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--truth", help="reference field for lambda cross-validation")
    p.add_argument("--sources", type=int, default=0, help="number of unknown point sources")
    p.add_argument("--source-guess", help="initial locations 'x,y;x,y;...'")
    p.add_argument("--out")
    add_config_flags(p, PinnConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model against a reference field")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--spacing", type=float, default=0.02)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="sweep methods x sample sizes x seeds")
    p.add_argument("--methods", default="pibi,pinn")
    p.add_argument("--cells", help="comma list of N:region (default: 50 and 200 on the ring, 100 and 500 on the full square)")
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--out")
    add_config_flags(p, PinnConfig)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("wells", help="fit well head measurements with point sources")
    p.add_argument("--wells", required=True)
    p.add_argument("--config")
    p.add_argument("--sources", type=int, default=0)
    p.add_argument("--source-guess", help="initial locations in user units 'x,y;x,y;...'")
    p.add_argument("--spacing", type=float, default=0.02, help="export spacing in scaled units")
    p.add_argument("--out")
    add_config_flags(p, TrainConfig)
    p.set_defaults(func=cmd_wells)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "cfg_lambda_grid", None) is not None and getattr(args, "method", None) == "pibi":
        parser.error("--lambda-grid applies to the pinn method only")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, SolverError, CoincidentPointsError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
