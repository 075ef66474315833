"""Command-line orchestration.

Subcommands: validate, embed, extend, kernel-stats, compare-sinkhorn.
Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 numerical
failure, 4 argument error.
"""

from __future__ import annotations

import argparse
import sys
from types import SimpleNamespace

import numpy as np

from .affinity import (
    DEFAULT_MIN_DENSITY,
    compute_densities,
    gaussian_affinity,
    load_affinity,
    load_affinity_values,
    median_bandwidth,
    normalize_affinity,
    validate_assumptions,
)
from .data_model import FLOAT_FORMAT, load_measure, load_points, select_reference, uniform_measure
from .embedding import diffusion_coordinates, extend_new_points, write_embedding
from .errors import (
    AssumptionViolationError,
    DegenerateDataError,
    ExtensionError,
    IngestionError,
    NumericalError,
)
from .persistence import load_model, save_model
from .sinkhorn import SymmetricKernel, sinkhorn_balance
from .spectral import (
    DEFAULT_SPECTRAL_CUTOFF,
    DENSE_SIZE_GUARD,
    bistochastic_residual,
    eigendecompose,
    extend_eigenfunctions,
    gram,
    materialize_kernel,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 4


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse normally exits with code 2 on bad arguments; the contract
    # here reserves 2 for I/O, so raise instead and map to 4 in main().
    def error(self, message):
        raise _ArgumentError(message)


def _g(x):
    return FLOAT_FORMAT % x


def _add_io_options(p):
    p.add_argument("--delimiter", default=",", help="field separator (default ',')")
    p.add_argument("--header", action="store_true",
                   help="skip one header line in input files")


def _add_data_options(p):
    p.add_argument("--points", help="point file, one row per point")
    p.add_argument("--measure", help="weight file, one positive number per line "
                                     "(uniform when omitted)")
    p.add_argument("--affinity", help="precomputed affinity grid instead of the "
                                      "Gaussian builder (disables extension)")


def _add_reference_options(p):
    p.add_argument("--ref-strategy", choices=("all", "uniform", "fps"), default=None,
                   help="reference selection (default all)")
    p.add_argument("--ref-size", type=int, default=None,
                   help="reference size for uniform/fps")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for the uniform draw (default 0)")


def _add_kernel_options(p):
    p.add_argument("--epsilon", default=None,
                   help="Gaussian bandwidth, or 'median' (default)")
    p.add_argument("--cutoff", type=float, default=DEFAULT_SPECTRAL_CUTOFF,
                   help="relative spectral cutoff (default 1e-12)")
    p.add_argument("--min-density", type=float, default=DEFAULT_MIN_DENSITY,
                   help="warn when a density falls below this (default 1e-12)")


def _add_dense_options(p):
    p.add_argument("--max-m", type=int, default=DENSE_SIZE_GUARD,
                   help=f"refuse dense kernels above this size (default {DENSE_SIZE_GUARD})")
    p.add_argument("--force-dense", action="store_true",
                   help="override the dense-size guard")


def _resolve_epsilon(value):
    if value is None or value == "median":
        return "median"
    try:
        epsilon = float(value)
    except ValueError:
        raise _ArgumentError(f"--epsilon must be 'median' or a number, got {value!r}") from None
    if epsilon <= 0.0:
        raise _ArgumentError(f"--epsilon must be positive, got {epsilon!r}")
    return epsilon


def _check_affinity_exclusivity(args):
    if args.affinity and (args.epsilon is not None or args.ref_strategy is not None
                          or args.ref_size is not None or args.seed is not None):
        raise _ArgumentError("--affinity cannot be combined with --epsilon, "
                             "--ref-strategy, --ref-size or --seed")


def _load_measure_for(args, m):
    if args.measure:
        measure = load_measure(args.measure, skip_header=args.header)
        if len(measure) != m:
            raise IngestionError(f"measure file has {len(measure)} weights but the data "
                                 f"has {m} points")
        return measure
    return uniform_measure(m)


def _build_affinity(args):
    """Common ingestion: points/affinity + measure + reference selection."""
    _check_affinity_exclusivity(args)
    if args.affinity:
        alpha = load_affinity(args.affinity, delimiter=args.delimiter,
                              skip_header=args.header)
        points = None
        reference = None
        m = alpha.shape[0]
    else:
        if not args.points:
            raise _ArgumentError("--points is required unless --affinity is given")
        points = load_points(args.points, delimiter=args.delimiter,
                             skip_header=args.header)
        strategy = args.ref_strategy or "all"
        reference = select_reference(points, strategy, size=args.ref_size,
                                     seed=args.seed if args.seed is not None else 0)
        epsilon = _resolve_epsilon(args.epsilon)
        if epsilon == "median":
            epsilon = median_bandwidth(points, reference)
        alpha = gaussian_affinity(points, reference, epsilon)
        m = len(points)
    measure = _load_measure_for(args, m)
    return SimpleNamespace(points=points, reference=reference, alpha=alpha,
                           measure=measure)


def _build_kernel_stage(args):
    """Ingestion plus validation, densities and the normalized affinity."""
    stage = _build_affinity(args)
    report = validate_assumptions(stage.alpha, stage.measure)
    if not report.passed:
        raise AssumptionViolationError("validation stage failed:\n" + report.summary(),
                                       rows=report.failed_rows,
                                       columns=report.failed_columns)
    if min(report.min_data_density, report.min_reference_density) < args.min_density:
        print(f"warning: minimum density below --min-density={args.min_density:g} "
              f"(per-point {report.min_data_density:.3e}, per-reference "
              f"{report.min_reference_density:.3e}); results may be ill-conditioned",
              file=sys.stderr)
    densities, weighted = compute_densities(stage.alpha, stage.measure)
    stage.densities = densities
    stage.weighted = weighted
    stage.beta = normalize_affinity(stage.alpha, densities)
    return stage


def _cmd_validate(args):
    _check_affinity_exclusivity(args)
    if args.affinity:
        values, _digest = load_affinity_values(args.affinity, delimiter=args.delimiter,
                                               skip_header=args.header)
        m = values.shape[0]
    else:
        if not args.points:
            raise _ArgumentError("--points is required unless --affinity is given")
        points = load_points(args.points, delimiter=args.delimiter,
                             skip_header=args.header)
        strategy = args.ref_strategy or "all"
        reference = select_reference(points, strategy, size=args.ref_size,
                                     seed=args.seed if args.seed is not None else 0)
        epsilon = _resolve_epsilon(args.epsilon)
        if epsilon == "median":
            epsilon = median_bandwidth(points, reference)
        values = gaussian_affinity(points, reference, epsilon).values
        m = len(points)
    measure = _load_measure_for(args, m)
    report = validate_assumptions(values, measure)
    print(report.summary())
    if report.passed and min(report.min_data_density,
                             report.min_reference_density) < args.min_density:
        print(f"warning: minimum density below --min-density={args.min_density:g}; "
              f"results may be ill-conditioned")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _spectrum_summary(model):
    lam = model.eigenvalues
    head = ", ".join(_g(v) for v in lam[:8])
    if lam.size > 8:
        head += ", ..."
    return f"spectrum: retained r={model.n_retained} of n={model.n_references} [{head}]"


def _cmd_embed(args):
    stage = _build_kernel_stage(args)
    A = gram(stage.beta, stage.weighted)
    model = eigendecompose(A, cutoff=args.cutoff, reference=stage.reference,
                           densities=stage.densities, provenance=stage.alpha.provenance,
                           n_samples=len(stage.measure))
    psi = extend_eigenfunctions(model, stage.beta)
    embedding = diffusion_coordinates(model, psi, time=args.time,
                                      n_components=args.components)
    write_embedding(embedding, args.out, delimiter=args.delimiter,
                    header=args.out_header)
    if model.lambda_max_warning:
        print(f"warning: {model.lambda_max_warning}", file=sys.stderr)
    print(_spectrum_summary(model))
    print(f"bi-stochastic residual (weighted measure): "
          f"{_g(bistochastic_residual(stage.beta, stage.weighted))}")
    print(f"wrote embedding {args.out} "
          f"({embedding.coordinates.shape[0]} x {embedding.n_components})")
    if args.model_dir:
        save_model(model, args.model_dir, delimiter=args.delimiter,
                   extras={"embed_time": _g(args.time),
                           "embed_components": str(args.components)})
        print(f"wrote model {args.model_dir}")
    return EXIT_OK


def _cmd_extend(args):
    model, extras = load_model(args.model_dir, delimiter=args.delimiter)
    time = args.time if args.time is not None else float(extras.get("embed_time", 0.0))
    if args.components is not None:
        components = args.components
    elif "embed_components" in extras:
        components = int(extras["embed_components"])
    else:
        components = None
    points = load_points(args.points_new, delimiter=args.delimiter,
                         skip_header=args.header)
    embedding = extend_new_points(model, points, time=time, n_components=components)
    write_embedding(embedding, args.out, delimiter=args.delimiter,
                    header=args.out_header)
    print(f"wrote embedding {args.out} "
          f"({embedding.coordinates.shape[0]} x {embedding.n_components})")
    return EXIT_OK


def _cmd_kernel_stats(args):
    stage = _build_kernel_stage(args)
    kernel = materialize_kernel(stage.beta, max_m=args.max_m, force=args.force_dense)
    p = kernel.values
    w = stage.weighted.weights
    A = gram(stage.beta, stage.weighted)

    lam_ref = np.linalg.eigvalsh(A.values)[::-1]
    root_w = np.sqrt(w)
    lam_dense = np.linalg.eigvalsh(root_w[:, None] * p * root_w[None, :])[::-1]
    threshold = 1e-8 * lam_ref[0]
    above_ref = lam_ref[lam_ref > threshold]
    above_dense = lam_dense[lam_dense > threshold]

    print(f"kernel size: {kernel.size} x {kernel.size}")
    print(f"symmetry error (raw product): {_g(kernel.symmetry_defect)}")
    print(f"min eigenvalue: {_g(lam_dense[-1])}")
    print(f"weighted row-sum residual: {_g(np.max(np.abs(p @ w - 1.0)))}")
    if above_ref.size != above_dense.size:
        print(f"spectrum match vs reference Gram: MULTIPLICITY MISMATCH "
              f"({above_dense.size} dense vs {above_ref.size} reference above "
              f"{threshold:.3g})")
        return EXIT_NUMERICAL
    err = float(np.max(np.abs(above_dense - above_ref) / above_ref))
    print(f"spectrum match vs reference Gram: {_g(err)} relative "
          f"(over {above_ref.size} eigenvalues above {threshold:.3g})")
    return EXIT_OK


def _cmd_compare_sinkhorn(args):
    stage = _build_kernel_stage(args)
    kernel = materialize_kernel(stage.beta, max_m=args.max_m, force=args.force_dense)
    construction_residual = bistochastic_residual(stage.beta, stage.weighted)
    print("one-pass construction, normalization target: weighted measure "
          "(squared density x point mass)")
    print(f"  residual: {_g(construction_residual)}")
    print("  iterations: 0")
    result = sinkhorn_balance(SymmetricKernel(kernel.values), tol=args.tol,
                              max_iter=args.max_iter)
    print("iterative balancing, normalization target: counting measure "
          "(plain row/column sums)")
    print(f"  residual: {_g(result.residual)}")
    print(f"  iterations: {result.iterations}")
    print(f"  converged: {'yes' if result.converged else 'NO (max-iter reached)'}")
    print("  trajectory: " + " ".join(f"{r:.6e}" for r in result.residuals))
    print("note: the two residuals measure different normalization targets "
          "and are not comparable")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="bistomap",
                     description="Bi-stochastic reference-set kernels and diffusion "
                                 "embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the affinity assumptions and report")
    _add_io_options(p)
    _add_data_options(p)
    _add_reference_options(p)
    _add_kernel_options(p)
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("embed", help="fit the model and write diffusion coordinates")
    _add_io_options(p)
    _add_data_options(p)
    _add_reference_options(p)
    _add_kernel_options(p)
    p.add_argument("--components", type=int, default=2,
                   help="embedding dimension (default 2)")
    p.add_argument("--time", type=float, default=0.0,
                   help="diffusion time (default 0)")
    p.add_argument("--out", required=True, help="embedding output file")
    p.add_argument("--model-dir", help="directory to persist the fitted model")
    p.add_argument("--out-header", action="store_true",
                   help="write column names and a metadata comment line")
    p.set_defaults(handler=_cmd_embed)

    p = sub.add_parser("extend", help="embed new points with a persisted model")
    _add_io_options(p)
    p.add_argument("--model-dir", required=True, help="persisted model directory")
    p.add_argument("--points-new", required=True, help="new points file")
    p.add_argument("--out", required=True, help="embedding output file")
    p.add_argument("--time", type=float, default=None,
                   help="diffusion time (default: value recorded at embed time)")
    p.add_argument("--components", type=int, default=None,
                   help="embedding dimension (default: value recorded at embed time)")
    p.add_argument("--out-header", action="store_true",
                   help="write column names and a metadata comment line")
    p.set_defaults(handler=_cmd_extend)

    p = sub.add_parser("kernel-stats",
                       help="materialize the dense kernel and print diagnostics")
    _add_io_options(p)
    _add_data_options(p)
    _add_reference_options(p)
    _add_kernel_options(p)
    _add_dense_options(p)
    p.set_defaults(handler=_cmd_kernel_stats)

    p = sub.add_parser("compare-sinkhorn",
                       help="compare the one-pass construction against iterative "
                            "balancing")
    _add_io_options(p)
    _add_data_options(p)
    _add_reference_options(p)
    _add_kernel_options(p)
    _add_dense_options(p)
    p.add_argument("--tol", type=float, default=1e-8,
                   help="balancing residual target (default 1e-8)")
    p.add_argument("--max-iter", type=int, default=1000,
                   help="balancing iteration budget (default 1000)")
    p.set_defaults(handler=_cmd_compare_sinkhorn)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssumptionViolationError, DegenerateDataError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IngestionError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, ExtensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
