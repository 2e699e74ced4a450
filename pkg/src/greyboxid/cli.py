"""Command line front end.

Subcommands cover the full pipeline:

    greybox simulate   synthesize a benchmark (or user system) dataset
    greybox identify   subspace estimate, optional ML refinement, diagram
    greybox convert    physical nonlinear coefficients from a model
    greybox export     plot-ready error/FRF tables and figures

Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical
failure, 5 finished without convergence (results still written).
Every output file embeds the configuration and seed that produced it,
so a rerun with the same flags is byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmark, plots, report
from .basis import BasisFunctionSet
from .coefficients import coefficient_summary, convert_coefficients
from .dataio import (
    Dataset,
    read_dataset,
    read_model,
    read_system,
    write_dataset,
    write_model,
)
from .exceptions import DataFormatError, GreyBoxError, NumericalError
from .optimize import LMConfig, MLProblem, cost_value, levenberg_marquardt
from .signals import (
    MultisineSpec,
    add_output_noise,
    default_estimation_lines,
    dft_lines,
    effective_weights,
    estimate_noise_variance,
    generate_multisine,
    trim_transient,
)
from .simulate import IntegratorConfig, simulate_newton
from .subspace import (
    SubspaceConfig,
    build_extended_input_spectra,
    fnsi_identify,
    stabilization_diagram,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_NO_CONVERGENCE = 5


class UsageError(GreyBoxError):
    pass


def _config_string(args, skip=("func", "config")):
    items = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        items.append(f"{key}={getattr(args, key)}")
    return " ".join(items)


def _parse_range(text):
    try:
        if ":" in text:
            a, b = text.split(":")
            return list(range(int(a), int(b) + 1))
        return [int(text)]
    except ValueError:
        raise UsageError(f"cannot parse order range {text!r}") from None


def _parse_line_set(text):
    try:
        a, b = text.split(":")
        return np.arange(int(a), int(b) + 1)
    except ValueError:
        raise UsageError(f"cannot parse line range {text!r} (expected a:b)") from None


# ----------------------------------------------------------------- simulate

def cmd_simulate(args):
    if args.system_file:
        sys_spec, _ = read_system(args.system_file)
    else:
        sys_spec = benchmark.duffing_benchmark()
    mspec = MultisineSpec(
        f_min=args.fmin, f_max=args.fmax, fs=args.fs,
        samples_per_period=args.samples_per_period,
        rms_amplitude=args.rms, periods=args.periods, rng_seed=args.seed,
    )
    u = generate_multisine(mspec)
    cfg = IntegratorConfig(oversampling=args.oversample, interpolation=args.interp)
    y = simulate_newton(sys_spec, u, cfg)
    if args.output_snr_db is not None:
        y, _ = add_output_noise(y, args.output_snr_db, args.noise_seed)
    rec_data = np.vstack([u.data, y.data])
    suffix = (lambda lab, k: lab[k:]) if len(y.labels) > 1 else (lambda lab, k: "")
    out_labels, out_units = [], []
    for lab in y.labels:
        if lab.startswith("qd"):
            out_labels.append("velocity" + suffix(lab, 2))
            out_units.append("m/s")
        else:
            out_labels.append("displacement" + suffix(lab, 1))
            out_units.append("m")
    labels = ("force",) + tuple(out_labels)
    units = ("N",) + tuple(out_units)
    from .signals import SignalRecord

    rec = SignalRecord(rec_data, mspec.fs, mspec.samples_per_period, labels=labels)
    dataset = Dataset(
        rec, input_channels=("force",), units=units,
        excited_lines=mspec.excited_lines(), seed=args.seed,
        meta={"config": _config_string(args)},
    )
    write_dataset(args.out, dataset, fmt=args.format)
    print(f"wrote {args.out}: {rec.n_channels} channels x {rec.periods} periods "
          f"x {rec.period_length} samples")
    return EXIT_OK


# ----------------------------------------------------------------- identify

def _load_processed(args):
    dataset = read_dataset(args.data)
    if args.discard:
        record = trim_transient(dataset.record, args.discard)
    else:
        record = dataset.record
    basis = BasisFunctionSet.from_text(args.basis)
    u_rec = record.select(dataset.input_channels)
    y_rec = record.select([s for s in record.labels if s not in dataset.input_channels])
    if args.lines:
        lines = _parse_line_set(args.lines)
    else:
        if dataset.excited_lines.size == 0:
            raise UsageError("dataset has no excited-line metadata; pass --lines a:b")
        f_max = dataset.excited_lines.max() * record.fs / record.period_length
        lines = default_estimation_lines(basis, f_max, record.fs, record.period_length)
    return dataset, u_rec, y_rec, basis, lines


def _noise_and_weights(y_rec, lines):
    if y_rec.periods < 2:
        return None, None
    per_period = dft_lines(y_rec, lines, "per-period")
    noise = estimate_noise_variance(per_period)
    weights = effective_weights(noise, per_period)
    if np.all(weights == 1.0):
        return noise, None
    return noise, weights


def cmd_identify(args):
    dataset, u_rec, y_rec, basis, lines = _load_processed(args)
    config = _config_string(args)
    meta = {"config": config, "data": str(args.data)}
    if dataset.seed is not None:
        meta["seed"] = str(dataset.seed)
    ext = build_extended_input_spectra(u_rec, y_rec, basis, lines)
    ysp = dft_lines(y_rec, lines)
    noise, weights = _noise_and_weights(y_rec, lines)

    if args.diagram:
        cfg = SubspaceConfig(order=max(2, args.order), block_rows=args.block_rows,
                             weighting=args.weighting)
        orders = _parse_range(args.orders)
        diagram = stabilization_diagram(ext, ysp, orders, cfg, noise)
        comments = [f"config: {config}", "singular_values: "
                    + " ".join(f"{v:.6e}" for v in diagram.singular_values[:max(orders) + 2])]
        cols = {"order": [], "frequency_hz": [], "damping_ratio": [],
                "frequency_stable": [], "damping_stable": []}
        for order, f, z, fst, zst in diagram.rows():
            cols["order"].append(order)
            cols["frequency_hz"].append(f)
            cols["damping_ratio"].append(z)
            cols["frequency_stable"].append(int(fst))
            cols["damping_stable"].append(int(zst))
        report.write_csv(args.diagram, {k: np.asarray(v) for k, v in cols.items()},
                         comments)
        if not args.no_plots:
            plots.save_stabilization(Path(args.diagram).with_suffix(".png"), diagram)
        print(f"wrote {args.diagram} ({len(cols['order'])} poles over orders "
              f"{min(orders)}..{max(orders)})")

    if args.method == "ml":
        if not args.init:
            raise UsageError("--method ml requires --init MODEL")
        model0, _ = read_model(args.init)
    else:
        cfg = SubspaceConfig(order=args.order, block_rows=args.block_rows,
                             weighting=args.weighting)
        model0 = fnsi_identify(ext, ysp, cfg, basis, u_rec.n_channels, noise)
        if args.out_init:
            write_model(args.out_init, model0, meta)
            print(f"wrote {args.out_init}")

    if not (args.optimize or args.method == "ml"):
        return EXIT_OK

    problem = MLProblem(u_rec, ysp, model0, weights=weights,
                        settle_periods=args.settle)
    lm_cfg = LMConfig(max_iterations=args.max_iter)
    v0 = cost_value(model0, problem)
    final, trace = levenberg_marquardt(problem, lm_cfg, verbose=args.verbose)
    v1 = trace.accepted_costs()[-1] if trace.accepted_costs() else v0
    print(f"ml refinement: cost {v0:.6e} -> {v1:.6e} over {len(trace)} trials "
          f"({trace.message})")
    if args.out_final:
        write_model(args.out_final, final, meta)
        print(f"wrote {args.out_final}")
    if args.trace:
        cols = {
            "iteration": np.array([r["iteration"] for r in trace.iterations]),
            "cost": np.array([r["cost"] for r in trace.iterations]),
            "lambda": np.array([r["lambda"] for r in trace.iterations]),
            "step_norm": np.array([r["step_norm"] for r in trace.iterations]),
            "accepted": np.array([int(r["accepted"]) for r in trace.iterations]),
        }
        report.write_csv(args.trace, cols, [f"config: {config}"])
        if not args.no_plots and len(trace):
            plots.save_trace(Path(args.trace).with_suffix(".png"), trace)
        print(f"wrote {args.trace}")
    return EXIT_OK if trace.converged else EXIT_NO_CONVERGENCE


# ------------------------------------------------------------------ convert

def cmd_convert(args):
    model, _ = read_model(args.model)
    dataset = read_dataset(args.data) if args.data else None
    if args.lines:
        lines = _parse_line_set(args.lines)
    elif dataset is not None and dataset.excited_lines.size:
        lines = dataset.excited_lines
    else:
        raise UsageError("pass --lines a:b or --data with excited-line metadata")
    if lines.size == 0:
        raise UsageError("empty line set")
    n_grid = args.n_grid or (dataset.record.period_length if dataset else None)
    if n_grid is None:
        raise UsageError("pass --n-grid or --data to define the frequency grid")
    estimates = convert_coefficients(
        model, lines, n_grid,
        force_input_column=args.force_column,
        nl_location_output=args.output_index,
    )
    comments = [f"config: {_config_string(args)}", f"model: {args.model}"]
    cols = {"frequency_hz": estimates[0].frequencies[estimates[0].included]}
    for a, est in enumerate(estimates):
        keep = est.included
        cols[f"c{a}_re"] = est.series.real[keep]
        cols[f"c{a}_im"] = est.series.imag[keep]
        summary = coefficient_summary(est)
        comments.append(
            f"c{a}: mean_real={summary['mean_real']:.17g} "
            f"log10_ratio={summary['log10_ratio']:.6g} "
            f"excluded_lines={est.n_excluded}"
        )
    report.write_csv(args.out, cols, comments)
    if not args.no_plots:
        plots.save_coefficients(Path(args.out).with_suffix(".png"), estimates)
    for line in comments[2:]:
        print(line)
    print(f"wrote {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- export

def cmd_export(args):
    dataset = read_dataset(args.data)
    record = trim_transient(dataset.record, args.discard) if args.discard else dataset.record
    u_rec = record.select(dataset.input_channels)
    y_rec = record.select([s for s in record.labels if s not in dataset.input_channels])
    models = {}
    if args.init_model:
        models["initial"], _ = read_model(args.init_model)
    if args.final_model:
        models["final"], _ = read_model(args.final_model)
    if not models:
        raise UsageError("pass at least one of --init-model / --final-model")
    if dataset.excited_lines.size == 0:
        raise UsageError("dataset has no excited-line metadata")
    lines = dataset.excited_lines
    noise = None
    if y_rec.periods >= 2:
        noise = estimate_noise_variance(dft_lines(y_rec, lines, "per-period"))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    comments = [f"config: {_config_string(args)}"]

    spec_cols = report.error_spectra_series(
        u_rec, y_rec, lines, models, noise, settle_periods=args.settle)
    report.write_csv(outdir / "error_spectra.csv", spec_cols, comments)

    time_cols = report.time_error_series(u_rec, y_rec, models,
                                         settle_periods=args.settle)
    report.write_csv(outdir / "time_errors.csv", time_cols, comments)

    frf_cols = report.frf_series(u_rec, y_rec, lines, models)
    report.write_csv(outdir / "frf.csv", frf_cols, comments)

    if not args.no_plots:
        plots.save_error_spectra(outdir / "error_spectra.png", spec_cols)
        plots.save_time_errors(outdir / "time_errors.png", time_cols)
        plots.save_frf(outdir / "frf.png", frf_cols)
    print(f"wrote error_spectra.csv, time_errors.csv, frf.csv in {outdir}")
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(
        prog="greybox",
        description="grey-box nonlinear state-space identification toolkit",
    )
    parser.add_argument("--config", help="JSON file with default argument values")
    parser.add_argument("--threads", type=int, default=1,
                        help="cap on internal worker parallelism (recorded in outputs)")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="synthesize a multisine dataset")
    ps.add_argument("--out", required=True)
    ps.add_argument("--system-file", help="system description file (default: built-in benchmark)")
    ps.add_argument("--rms", type=float, default=benchmark.HIGH_LEVEL_RMS)
    ps.add_argument("--periods", type=int, default=25)
    ps.add_argument("--fs", type=float, default=benchmark.SAMPLE_RATE_HZ)
    ps.add_argument("--samples-per-period", type=int, default=benchmark.SAMPLES_PER_PERIOD)
    ps.add_argument("--fmin", type=float, default=benchmark.EXCITED_BAND_HZ[0])
    ps.add_argument("--fmax", type=float, default=benchmark.EXCITED_BAND_HZ[1])
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--oversample", type=int, default=8)
    ps.add_argument("--interp", choices=("spectral", "zoh"), default="spectral")
    ps.add_argument("--output-snr-db", type=float, default=None,
                    help="add white output noise at this SNR")
    ps.add_argument("--noise-seed", type=int, default=1)
    ps.add_argument("--format", choices=("text", "binary"), default="text")
    ps.set_defaults(func=cmd_simulate)

    pi = sub.add_parser("identify", help="estimate a model from a dataset")
    pi.add_argument("--data", required=True)
    pi.add_argument("--basis", required=True,
                    help="monomial descriptors, e.g. \"(0,0,2);(0,0,3)\" (empty for linear)")
    pi.add_argument("--order", type=int, default=2)
    pi.add_argument("--block-rows", type=int, default=20)
    pi.add_argument("--discard", type=int, default=0,
                    help="transient periods to drop before processing")
    pi.add_argument("--lines", help="processed line range a:b (default: harmonic band)")
    pi.add_argument("--weighting", choices=("none", "noise-variance"), default="none")
    pi.add_argument("--method", choices=("subspace", "ml"), default="subspace")
    pi.add_argument("--init", help="initial model file for --method ml")
    pi.add_argument("--optimize", action="store_true",
                    help="chain ML refinement after the subspace step")
    pi.add_argument("--out-init", help="where to write the subspace model")
    pi.add_argument("--out-final", help="where to write the refined model")
    pi.add_argument("--trace", help="where to write the optimizer trace CSV")
    pi.add_argument("--orders", default="2:10", help="order range a:b for --diagram")
    pi.add_argument("--diagram", help="where to write the stabilization diagram CSV")
    pi.add_argument("--settle", type=int, default=2,
                    help="settle periods per model evaluation")
    pi.add_argument("--max-iter", type=int, default=100)
    pi.add_argument("--no-plots", action="store_true")
    pi.add_argument("--verbose", action="store_true")
    pi.set_defaults(func=cmd_identify)

    pc = sub.add_parser("convert", help="physical nonlinear coefficients")
    pc.add_argument("--model", required=True)
    pc.add_argument("--out", required=True)
    pc.add_argument("--data", help="dataset supplying the line set and grid")
    pc.add_argument("--lines", help="line range a:b")
    pc.add_argument("--n-grid", type=int, default=None,
                    help="samples per period defining the frequency grid")
    pc.add_argument("--force-column", type=int, default=0)
    pc.add_argument("--output-index", type=int, default=0)
    pc.add_argument("--no-plots", action="store_true")
    pc.set_defaults(func=cmd_convert)

    pe = sub.add_parser("export", help="plot-ready tables and figures")
    pe.add_argument("--data", required=True)
    pe.add_argument("--init-model")
    pe.add_argument("--final-model")
    pe.add_argument("--outdir", required=True)
    pe.add_argument("--discard", type=int, default=0)
    pe.add_argument("--settle", type=int, default=2)
    pe.add_argument("--no-plots", action="store_true")
    pe.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    parser = build_parser()
    preliminary, _ = parser.parse_known_args(argv)
    namespace = None
    if getattr(preliminary, "config", None):
        try:
            with open(preliminary.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config file: {exc}", file=sys.stderr)
            return EXIT_DATA
        namespace = argparse.Namespace(**defaults)
    args = parser.parse_args(argv, namespace)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
