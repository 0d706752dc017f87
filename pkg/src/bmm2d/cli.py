"""Command-line front end.

Exit status: 0 on success, 1 on usage errors (bad flags, malformed or
unknown config keys), 2 on data and domain errors raised while running.
The fully resolved configuration of every run, including the seeds that
were derived from it, is echoed to stderr as one JSON line so any output
can be reproduced from its log.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .contamination import (
    AdditiveGaussian,
    ContaminationSpec,
    ReplaceAr,
    ReplaceStudentT,
    ReplaceWhiteNoise,
    contaminate,
)
from .errors import Bmm2dError
from .estimators import METHODS, OptimizerConfig, estimate
from .grid import (
    ArParams,
    DEFAULT_BURN_IN,
    GaussianNoise,
    StudentTNoise,
    load_csv,
    save_csv,
    simulate_ar2d,
)
from .imaging import ImageGray, approximate_image, cq_index, cq_max, read_pgm, segment_image, ssim, write_pgm
from .montecarlo import ExperimentConfig, emit_raw, emit_report, replication_seeds, run_experiment

_INDEX_LAGS = ((0, 1), (1, 0), (1, 1), (1, -1))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through UsageError
    # instead so usage problems map to exit 1 and data problems keep 2
    def error(self, message):
        raise UsageError(message)


def _echo_resolved(subcommand: str, resolved: dict) -> None:
    print(json.dumps({"subcommand": subcommand, **resolved}), file=sys.stderr)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            parsed = json.load(fh)
    except ValueError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(parsed, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return parsed


def _check_keys(obj: dict, allowed: tuple[str, ...], what: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise UsageError(f"unknown {what} config keys: {', '.join(unknown)}")


def _params_from(value) -> ArParams:
    try:
        p1, p2, p3 = (float(v) for v in value)
    except (TypeError, ValueError):
        raise UsageError(f"true_params must be three numbers, got {value!r}") from None
    return ArParams(p1, p2, p3)


def optimizer_from_dict(obj: dict) -> OptimizerConfig:
    _check_keys(obj, ("restarts", "max_evals", "tolerance", "zeta"), "optimizer")
    return OptimizerConfig(**obj)


def contamination_from_dict(obj: dict) -> ContaminationSpec:
    kind = obj.get("kind")
    payload = {
        "additive_gaussian": ("variance",),
        "replace_white_noise": ("variance",),
        "replace_student_t": ("df",),
        "replace_ar": ("params", "variance", "burn_in"),
    }
    if kind not in payload:
        raise UsageError(f"unknown contamination kind {kind!r}")
    _check_keys(obj, ("alpha", "kind") + payload[kind], "contamination")
    if "alpha" not in obj:
        raise UsageError("contamination config requires 'alpha'")
    alpha = float(obj["alpha"])
    if kind == "additive_gaussian":
        outliers = AdditiveGaussian(float(obj.get("variance", 50.0)))
    elif kind == "replace_white_noise":
        outliers = ReplaceWhiteNoise(float(obj.get("variance", 50.0)))
    elif kind == "replace_student_t":
        outliers = ReplaceStudentT(float(obj.get("df", 2.3)))
    else:
        kwargs = {}
        if "params" in obj:
            kwargs["params"] = _params_from(obj["params"])
        if "variance" in obj:
            kwargs["noise"] = GaussianNoise(0.0, float(obj["variance"]))
        if "burn_in" in obj:
            kwargs["burn_in"] = int(obj["burn_in"])
        outliers = ReplaceAr(**kwargs)
    return ContaminationSpec(alpha=alpha, kind=outliers)


def experiment_from_dict(obj: dict, master_seed: int) -> ExperimentConfig:
    _check_keys(
        obj,
        ("true_params", "window", "replications", "methods", "contamination", "optimizer"),
        "experiment",
    )
    for key in ("true_params", "window", "replications"):
        if key not in obj:
            raise UsageError(f"experiment config requires '{key}'")
    kwargs = {
        "true_params": _params_from(obj["true_params"]),
        "window": int(obj["window"]),
        "replications": int(obj["replications"]),
        "master_seed": master_seed,
    }
    if obj.get("methods") is not None:
        kwargs["methods"] = tuple(str(m) for m in obj["methods"])
    if obj.get("contamination") is not None:
        kwargs["contamination"] = contamination_from_dict(obj["contamination"])
    if obj.get("optimizer") is not None:
        kwargs["optimizer"] = optimizer_from_dict(obj["optimizer"])
    return ExperimentConfig(**kwargs)


def _optimizer_from_args(args) -> OptimizerConfig:
    base = _load_json(args.config) if getattr(args, "config", None) else {}
    for key in ("restarts", "max_evals", "tolerance", "zeta"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    return optimizer_from_dict(base)


# -- subcommand handlers ------------------------------------------------------


def _cmd_simulate(args) -> int:
    params = ArParams(*args.params)
    if args.noise == "gaussian":
        noise = GaussianNoise(0.0, args.noise_variance)
    else:
        if args.noise_df is None:
            raise UsageError("--noise student-t requires --noise-df")
        noise = StudentTNoise(args.noise_df)
    _echo_resolved(
        "simulate",
        {
            "params": list(params.as_array()),
            "rows": args.rows,
            "cols": args.cols,
            "noise": args.noise,
            "burn_in": args.burn_in,
            "seed": args.seed,
            "out": args.out,
        },
    )
    y = simulate_ar2d(params, args.rows, args.cols, noise, args.burn_in, args.seed)
    if args.out.endswith(".pgm"):
        write_pgm(ImageGray(y.values), args.out, rescale=True)
    else:
        save_csv(y, args.out)
    return 0


def _cmd_contaminate(args) -> int:
    base = _load_json(args.config) if args.config else {}
    if args.alpha is not None:
        base["alpha"] = args.alpha
    if args.kind is not None:
        base["kind"] = args.kind
    spec = contamination_from_dict(base)
    _echo_resolved(
        "contaminate",
        {"in": args.infile, "out": args.out, "seed": args.seed, "config": base},
    )
    y = load_csv(args.infile)
    result = contaminate(y, spec, args.seed)
    save_csv(result.z, args.out)
    print(f"replaced {result.n_replaced} of {result.z.values.size} cells", file=sys.stderr)
    return 0


def _cmd_estimate(args) -> int:
    config = _optimizer_from_args(args)
    _echo_resolved(
        "estimate",
        {
            "in": args.infile,
            "method": args.method,
            "optimizer": {
                "restarts": config.restarts,
                "max_evals": config.max_evals,
                "tolerance": config.tolerance,
                "zeta": config.zeta,
            },
        },
    )
    y = load_csv(args.infile)
    res = estimate(y, args.method, config)
    p = res.params
    print("method,phi1,phi2,phi3,scale,objective,branch,warning")
    warning = res.warning or ""
    print(
        f"{res.method},{p.phi1:.12g},{p.phi2:.12g},{p.phi3:.12g},"
        f"{res.scale:.12g},{res.objective:.12g},{res.branch},{warning}"
    )
    return 0


def _cmd_mc(args) -> int:
    obj = _load_json(args.config)
    if args.replications is not None:
        obj["replications"] = args.replications
    if args.methods is not None:
        obj["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    config = experiment_from_dict(obj, args.seed)
    first_field, first_contam = replication_seeds(config.master_seed, 0)
    _echo_resolved(
        "mc",
        {
            "config": args.config,
            "master_seed": config.master_seed,
            "replications": config.replications,
            "window": config.window,
            "methods": list(config.methods),
            "jobs": args.jobs,
            "first_replication_seeds": [first_field, first_contam],
            "out": args.out,
            "raw": args.raw,
        },
    )
    report = run_experiment(config, jobs=args.jobs)
    if args.out:
        emit_report(report, args.out)
    else:
        sys.stdout.write("method,param,true,mean,variance,mse,n\n")
        for method, param, true, mean, var, mse, n in report.rows():
            sys.stdout.write(f"{method},{param},{true:.12g},{mean:.12g},{var:.12g},{mse:.12g},{n}\n")
    if args.raw:
        emit_raw(report, args.raw)
    if report.excluded:
        print(f"excluded replications: {list(report.excluded)}", file=sys.stderr)
    if args.time:
        for method in config.methods:
            print(f"time {method}: {report.seconds(method):.3f}s", file=sys.stderr)
    return 0


def _cmd_filter(args) -> int:
    config = _optimizer_from_args(args)
    _echo_resolved(
        "filter",
        {
            "in": args.infile,
            "out": args.out,
            "residual": args.residual,
            "block": args.block,
            "method": args.method,
            "jobs": args.jobs,
        },
    )
    image = read_pgm(args.infile)
    approx = approximate_image(image, args.block, args.method, config, jobs=args.jobs)
    write_pgm(approx.approx, args.out, rescale=False)
    if args.residual:
        residual = segment_image(image, approx)
        write_pgm(residual, args.residual, rescale=True)
    if approx.n_skipped:
        print(f"skipped {approx.n_skipped} degenerate blocks", file=sys.stderr)
    return 0


def _cmd_indices(args) -> int:
    _echo_resolved("indices", {"a": args.image_a, "b": args.image_b})
    a = read_pgm(args.image_a)
    b = read_pgm(args.image_b)
    print("index,value")
    print(f"ssim,{ssim(a, b):.12g}")
    for lag in _INDEX_LAGS:
        try:
            value = f"{cq_index(a, b, lag):.12g}"
        except Bmm2dError:
            value = "nan"
        print(f"cq_{lag[0]}_{lag[1]},{value}")
    print(f"cq_max,{cq_max(a, b):.12g}")
    return 0


# -- parser -------------------------------------------------------------------


def _add_optimizer_flags(sub) -> None:
    sub.add_argument("--config", help="optimizer config JSON")
    sub.add_argument("--restarts", type=int)
    sub.add_argument("--max-evals", dest="max_evals", type=int)
    sub.add_argument("--tolerance", type=float)
    sub.add_argument("--zeta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bmm2d", description="Robust 2-D autoregression toolkit")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    sim = subs.add_parser("simulate", help="simulate a stationary field")
    sim.add_argument("--params", type=float, nargs=3, required=True, metavar=("P1", "P2", "P3"))
    sim.add_argument("--rows", type=int, required=True)
    sim.add_argument("--cols", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--burn-in", dest="burn_in", type=int, default=DEFAULT_BURN_IN)
    sim.add_argument("--noise", choices=("gaussian", "student-t"), default="gaussian")
    sim.add_argument("--noise-variance", dest="noise_variance", type=float, default=1.0)
    sim.add_argument("--noise-df", dest="noise_df", type=float)
    sim.add_argument("--out", required=True, help="output path (.csv or .pgm)")
    sim.set_defaults(func=_cmd_simulate)

    con = subs.add_parser("contaminate", help="contaminate a stored field")
    con.add_argument("--in", dest="infile", required=True)
    con.add_argument("--out", required=True)
    con.add_argument("--seed", type=int, required=True)
    con.add_argument("--config", help="contamination config JSON")
    con.add_argument("--alpha", type=float)
    con.add_argument("--kind")
    con.set_defaults(func=_cmd_contaminate)

    est = subs.add_parser("estimate", help="estimate parameters of a stored field")
    est.add_argument("--in", dest="infile", required=True)
    est.add_argument("--method", choices=METHODS, required=True)
    _add_optimizer_flags(est)
    est.set_defaults(func=_cmd_estimate)

    mc = subs.add_parser("mc", help="run a replication experiment")
    mc.add_argument("--config", required=True, help="experiment config JSON")
    mc.add_argument("--seed", type=int, required=True)
    mc.add_argument("--out", help="report CSV path (default: stdout)")
    mc.add_argument("--raw", help="per-replication CSV path")
    mc.add_argument("--jobs", type=int, default=1)
    mc.add_argument("--replications", type=int, help="override config replications")
    mc.add_argument("--methods", help="override config methods, comma separated")
    mc.add_argument("--time", action="store_true", help="print per-method wall time to stderr")
    mc.set_defaults(func=_cmd_mc)

    flt = subs.add_parser("filter", help="approximate and segment a PGM image")
    flt.add_argument("--in", dest="infile", required=True)
    flt.add_argument("--out", required=True, help="approximated image PGM")
    flt.add_argument("--residual", help="segmentation residual PGM (rescaled)")
    flt.add_argument("--block", type=int, default=57)
    flt.add_argument("--method", choices=METHODS, default="bmm")
    flt.add_argument("--jobs", type=int, default=1)
    _add_optimizer_flags(flt)
    flt.set_defaults(func=_cmd_filter)

    idx = subs.add_parser("indices", help="similarity indices between two PGMs")
    idx.add_argument("image_a")
    idx.add_argument("image_b")
    idx.set_defaults(func=_cmd_indices)

    return parser


def dispatch(argv: list[str]) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (Bmm2dError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return int(code) if isinstance(code, int) else 0


def entry() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    entry()
