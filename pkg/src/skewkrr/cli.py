"""Command line entry point: ``skewkrr {simulate,fit,predict,bench,diagnose}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys

import numpy as np

from skewkrr.dac import load_model, model_to_dict, predict_dac, save_model
from skewkrr.estimators import ESTIMATORS, resolve_hyperparameters
from skewkrr.exceptions import SkewKrrError
from skewkrr.harness import (
    ExperimentConfig,
    csv_text,
    load_csv,
    parse_csv,
    report_csv_text,
    run_csv_experiment,
    run_experiment,
    write_report_json,
)
from skewkrr.kernels import KERNEL_FAMILIES, spectrum
from skewkrr.krr import BANDWIDTH_PROBE
from skewkrr.partition import format_rule, make_slices
from skewkrr.synthdata import DEFAULT_NOISE_SD, SHAPES, SynthSpec, generate

log = logging.getLogger("skewkrr")

WORKERS_ENV = "SKEWKRR_WORKERS"
DEFAULT_SLICING = ["scott"]
DIAGNOSE_RULES = ("scott", "sturges", "freedman_diaconis", "fixed:10")


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return value


def _nonneg_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text!r}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text!r}")
    return value


def _list_of(cast):
    def parse(text):
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return [cast(t.strip()) for t in items]

    return parse


def _tau_value(text):
    try:
        value = float(text.split("/")[0]) / float(text.split("/")[1]) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid tau {text!r}") from None
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"tau must lie in (0, 1], got {text!r}")
    return value


def _rule(text):
    try:
        return format_rule(text)
    except SkewKrrError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--workers", type=_positive_int, default=None,
                   help=f"parallel workers (default ${WORKERS_ENV} or 1)")
    g.add_argument("--kernel", choices=KERNEL_FAMILIES, default="gaussian")
    g.add_argument("--sigma", type=_positive_float, default=None, help="Gaussian scale; omit to select it")
    g.add_argument("--degree", type=_positive_int, default=2, help="polynomial degree")
    g.add_argument("--lambda", dest="lam", type=_positive_float, default=None,
                   help="regularization; omit for holdout grid selection")
    g.add_argument("--bandwidth-rule", choices=("median", "holdout"), default="median",
                   help="median heuristic, or a joint (sigma, lambda) holdout search")
    g.add_argument("--nodes", type=_list_of(_positive_int), default=[20], help="node count k (bench: list)")
    g.add_argument("--slicing", type=_list_of(_rule), default=None,
                   help="fixed:L | scott | sturges | fd (default scott; bench: list)")
    g.add_argument("--tau", type=_list_of(_tau_value), default=[1.0], help="oversampling scale in (0,1] (bench: list)")
    g.add_argument("--estimator", choices=tuple(ESTIMATORS), default="odac")
    g.add_argument("--out", default=None, help="output path (default stdout)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _data_options(p: argparse.ArgumentParser, required: bool = True):
    if required:
        p.add_argument("data", help="input CSV with a header row")
    p.add_argument("--response", default="y", help="response column (default y)")
    p.add_argument("--features", type=_list_of(str), default=None, help="feature columns (default: all others)")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="skewkrr",
        description="Divide-and-conquer kernel ridge regression with response-adaptive oversampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset as CSV")
    p.add_argument("--shape", choices=SHAPES, default="uni_peak")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--d", type=_positive_int, default=1)
    p.add_argument("--noise-sd", type=_nonneg_float, default=DEFAULT_NOISE_SD)

    p = sub.add_parser("fit", parents=[common], help="fit a model from CSV and write model JSON")
    _data_options(p)

    p = sub.add_parser("predict", parents=[common], help="predict from a model JSON and a CSV")
    p.add_argument("model", help="model JSON written by `fit`")
    p.add_argument("data", help="CSV holding the model's feature columns")

    p = sub.add_parser("bench", parents=[common], help="run a replicated benchmark")
    p.add_argument("--config", default=None, help="flat key=value file mirroring these flags")
    p.add_argument("--estimators", type=_list_of(str), default=["full", "dac", "odac"])
    p.add_argument("--n", type=_list_of(_positive_int), default=[2000])
    p.add_argument("--d", type=_list_of(_positive_int), default=[1])
    p.add_argument("--shape", choices=SHAPES, default="uni_peak")
    p.add_argument("--noise-sd", type=_nonneg_float, default=DEFAULT_NOISE_SD)
    p.add_argument("--replicates", type=_positive_int, default=20)
    p.add_argument("--test-grid-size", type=_positive_int, default=2000)
    p.add_argument("--csv-out", default=None, help="flat CSV of cells (default: --out with .csv)")
    p.add_argument("--data", default=None, help="run the held-out pipeline on this CSV instead of synthetic data")
    p.add_argument("--response", default="y")
    p.add_argument("--features", type=_list_of(str), default=None)
    p.add_argument("--test-fraction", type=_positive_float, default=0.1)

    p = sub.add_parser("diagnose", parents=[common], help="effective dimension and slice histograms")
    _data_options(p)
    p.add_argument("--probe", type=_positive_int, default=BANDWIDTH_PROBE,
                   help="rows used for the spectrum (default 1000)")
    return parser


def _config_tokens(path: str) -> list[str]:
    """Turn ``key = value`` lines into ``--key value`` tokens."""
    tokens = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":" if ":" in line else None
            if sep is None:
                raise SkewKrrError(f"{path}:{line_no}: expected key = value")
            key, value = (part.strip() for part in line.split(sep, 1))
            tokens += [f"--{key.replace('_', '-')}", *shlex.split(value)]
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    if not argv or argv[0] != "bench":
        return argv
    for i, tok in enumerate(argv):
        path = None
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        if path is not None:
            # file values first so explicit flags override them
            return [argv[0], *_config_tokens(path), *argv[1:]]
    return argv


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise SkewKrrError(f"${WORKERS_ENV} must be an integer, got {env!r}") from None
        return max(1, value)
    return 1


def _single(args, name):
    values = getattr(args, name)
    if len(values) != 1:
        raise SkewKrrError(f"--{name} takes a single value for this command")
    return values[0]


def _write_text(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_simulate(args) -> int:
    data, _ = generate(SynthSpec(args.shape, args.n, args.d, args.noise_sd, args.seed))
    _write_text(csv_text(data), args.out)
    return 0


def cmd_fit(args) -> int:
    if args.slicing is None:
        args.slicing = DEFAULT_SLICING
    data = load_csv(args.data, args.response, args.features)
    common = dict(kernel=args.kernel, sigma=args.sigma, degree=args.degree, lam=args.lam,
                  bandwidth_rule=args.bandwidth_rule, random_state=args.seed)
    k = _single(args, "nodes")
    if args.estimator == "full":
        est = ESTIMATORS["full"](**common)
    elif args.estimator == "dac":
        est = ESTIMATORS["dac"](n_nodes=k, n_jobs=_workers(args), **common)
    else:
        est = ESTIMATORS["odac"](n_nodes=k, slicing=_single(args, "slicing"), tau=_single(args, "tau"),
                                 n_jobs=_workers(args), **common)
    est.fit(data.X, data.y)
    extra = {"estimator": args.estimator, "feature_names": list(data.feature_names), "response": data.response_name}
    if args.out in (None, "-"):
        sys.stdout.write(json.dumps(model_to_dict(est.dac_model_, **extra)) + "\n")
    else:
        save_model(est.dac_model_, args.out, **extra)
    info = est.dac_model_.plan_info
    log.info("fit %s: sigma=%.6g lambda=%.6g k=%d post_dedup_total=%s", args.estimator, est.sigma_,
             est.lambda_, est.dac_model_.k, info.get("post_dedup_total"))
    return 0


def cmd_predict(args) -> int:
    model, doc = load_model(args.model)
    features = doc.get("feature_names")
    response = doc.get("response", "y")
    data = load_csv(args.data, response_column=response, feature_columns=features) if _has_column(
        args.data, response) else _load_features(args.data, features)
    pred = predict_dac(model, data.X)
    lines = ["prediction"] + [repr(float(v)) for v in pred]
    _write_text("\n".join(lines) + "\n", args.out)
    return 0


def _has_column(path, name) -> bool:
    with open(path) as fh:
        header = fh.readline()
    return name in [h.strip() for h in header.split(",")]


def _load_features(path, features):
    # a response-free table: parse with a dummy response column appended
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SkewKrrError(f"{path}: file is empty")
    text = "\n".join([lines[0] + ",__response__"] + [ln + ",0" for ln in lines[1:] if ln.strip()])
    return parse_csv(text, "__response__", features, source=path)


def cmd_bench(args) -> int:
    workers = _workers(args)
    if args.data:
        data = load_csv(args.data, args.response, args.features)
        report = run_csv_experiment(
            data, estimators=args.estimators, k_values=args.nodes,
            slicing_rules=args.slicing or DEFAULT_SLICING, tau=args.tau,
            replicates=args.replicates, test_fraction=args.test_fraction, master_seed=args.seed,
            kernel=args.kernel, sigma=args.sigma, lam=args.lam, bandwidth_rule=args.bandwidth_rule,
            workers=workers,
        )
    else:
        config = ExperimentConfig(
            estimators=args.estimators, n_values=args.n, d_values=args.d, k_values=args.nodes,
            slicing_rules=args.slicing or DEFAULT_SLICING, tau=args.tau, replicates=args.replicates, master_seed=args.seed,
            test_grid_size=args.test_grid_size, noise_sd=args.noise_sd, shape=args.shape, kernel=args.kernel,
            sigma=args.sigma, lam=args.lam, bandwidth_rule=args.bandwidth_rule,
        )
        report = run_experiment(config, workers=workers)
    if args.out in (None, "-"):
        json.dump(report.to_dict(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        write_report_json(report, args.out)
    csv_path = args.csv_out
    if csv_path is None and args.out not in (None, "-"):
        root, _ = os.path.splitext(args.out)
        csv_path = root + ".csv"
    if csv_path:
        _write_text(report_csv_text(report), csv_path)
    for f in report.failures:
        log.warning("replicate failure: %s", f)
    return 0


def cmd_diagnose(args) -> int:
    data = load_csv(args.data, args.response, args.features)
    spec, lam = resolve_hyperparameters(
        data, kernel=args.kernel, sigma=args.sigma, degree=args.degree, lam=args.lam,
        bandwidth_rule=args.bandwidth_rule, seed=args.seed,
    )
    probe = data
    if data.n > args.probe:
        rows = np.random.default_rng(args.seed).choice(data.n, size=args.probe, replace=False)
        probe = data.subset(np.sort(rows))
    diag = spectrum(spec, probe.X, lam)
    rules = args.slicing or list(DIAGNOSE_RULES)
    out = {
        "n": data.n,
        "d": data.d,
        "kernel": spec.to_dict(),
        "lambda": lam,
        "spectrum_rows": probe.n,
        "d_lambda": diag.d_lambda,
        "leading_eigenvalues": diag.eigenvalues[:20].tolist(),
        "slices": [make_slices(data.y, r).to_dict() for r in rules],
    }
    _write_text(json.dumps(out, indent=2) + "\n", args.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except (OSError, SkewKrrError) as exc:
        parser.print_usage(sys.stderr)
        print(f"skewkrr: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SkewKrrError, OSError) as exc:
        print(f"skewkrr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
