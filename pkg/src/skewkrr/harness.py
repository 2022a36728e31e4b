"""Benchmark harness: CSV I/O, stratified splits and replicated MSE experiments.

Every random draw in an experiment is derived from ``(master_seed, cell,
replicate)``, so serial and threaded runs emit the same numbers. Timing
fields (any key containing ``seconds``) are the only nondeterministic
outputs; :func:`report_body` strips them.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from skewkrr._rng import STREAM_SPLIT, STREAM_TEST_GRID, derive_seed, rng_for
from skewkrr.dac import fit_dac, predict_dac
from skewkrr.estimators import resolve_hyperparameters
from skewkrr.exceptions import InputError
from skewkrr.krr import Dataset, fit, predict
from skewkrr.partition import SliceSpec, classical_plan, format_rule, make_slices, oversample_plan
from skewkrr.synthdata import DEFAULT_NOISE_SD, SynthSpec, generate

log = logging.getLogger(__name__)

ESTIMATOR_NAMES = ("full", "classical_dac", "oversampled_dac")
ESTIMATOR_ALIASES = {"dac": "classical_dac", "odac": "oversampled_dac", "classical": "classical_dac",
                     "oversampled": "oversampled_dac"}

CSV_COLUMNS = (
    "n", "d", "k", "estimator", "slicing", "tau", "replicates", "n_failed",
    "mean_mse", "se_mse", "mean_fit_seconds",
    "node_size_min", "node_size_mean", "node_size_max",
    "pre_dedup_mean", "post_dedup_mean", "slices_mean", "ntilde_bound_ok",
)


def mse_against_truth(predictions, truth) -> float:
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.shape != truth.shape:
        raise InputError(f"length mismatch: {predictions.size} predictions vs {truth.size} truth values")
    if predictions.size == 0:
        raise InputError("need at least one evaluation point")
    return float(np.mean((predictions - truth) ** 2))


# --------------------------------------------------------------------- CSV I/O


def load_csv(path, response_column: str = "y", feature_columns=None) -> Dataset:
    """Read a comma-separated numeric table with a header row.

    Rows keep their file order as ``origin_ids``. Without ``feature_columns``
    every column other than the response is a feature.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    return parse_csv(text, response_column, feature_columns, source=str(path))


def parse_csv(text: str, response_column: str = "y", feature_columns=None, source: str = "<csv>") -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InputError(f"{source}: file is empty") from None
    if not any(header):
        raise InputError(f"{source}: missing header row")
    if feature_columns is None:
        feature_columns = [h for h in header if h != response_column]
    else:
        feature_columns = list(feature_columns)
    for name in [response_column, *feature_columns]:
        if name not in header:
            raise InputError(f"{source}: column {name!r} not found in header {header}")
    pos = {h: i for i, h in enumerate(header)}
    wanted = [*feature_columns, response_column]
    rows = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        values = []
        for name in wanted:
            i = pos[name]
            cell = row[i].strip() if i < len(row) else ""
            try:
                value = float(cell)
            except ValueError:
                raise InputError(
                    f"{source}: row {row_no} (line {row_no + 1}), column {name!r}: cannot parse {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise InputError(f"{source}: row {row_no} (line {row_no + 1}), column {name!r}: non-finite {cell!r}")
            values.append(value)
        rows.append(values)
    if not rows:
        raise InputError(f"{source}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :-1], arr[:, -1], feature_names=tuple(feature_columns), response_name=response_column)


def csv_text(data: Dataset) -> str:
    """Features then response; floats use repr so they round-trip exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*data.feature_names, data.response_name])
    for x, y in zip(data.X, data.y):
        w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
    return buf.getvalue()


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(data))


def stratified_split(data: Dataset, test_fraction: float, strata: SliceSpec, seed: int = 0):
    """Sample ``floor(fraction * count)`` rows from each response stratum into the test set.

    Strata with at least two members contribute at least one test row;
    singleton strata stay entirely in training.
    """
    if not 0 < test_fraction < 1:
        raise InputError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = strata.assign(data.y)
    rng = rng_for(seed, STREAM_SPLIT)
    test_rows = []
    for j in range(strata.l):
        members = np.flatnonzero(labels == j)
        c = members.size
        if c == 0:
            continue
        take = math.floor(test_fraction * c)
        if c >= 2:
            take = max(take, 1)
        else:
            take = 0
        if take:
            test_rows.append(rng.choice(members, size=take, replace=False))
    test_idx = np.sort(np.concatenate(test_rows)) if test_rows else np.empty(0, dtype=np.int64)
    train_idx = np.setdiff1d(np.arange(data.n), test_idx)
    if train_idx.size == 0:
        raise InputError("stratified split left the training set empty")
    if test_idx.size == 0:
        raise InputError("stratified split left the test set empty")
    return data.subset(train_idx), data.subset(test_idx)


# ------------------------------------------------------------------ experiments


def _as_list(value, cast):
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    if isinstance(value, str):
        return [cast(v) for v in value.split(",") if v.strip()]
    return [cast(value)]


def _tau(value) -> float:
    if isinstance(value, str) and "/" in value:
        num, den = value.split("/")
        return float(num) / float(den)
    return float(value)


def _estimator(name: str) -> str:
    name = ESTIMATOR_ALIASES.get(name.strip(), name.strip())
    if name not in ESTIMATOR_NAMES:
        raise InputError(f"unknown estimator {name!r}")
    return name


@dataclass
class ExperimentConfig:
    estimators: list = field(default_factory=lambda: list(ESTIMATOR_NAMES))
    n_values: list = field(default_factory=lambda: [2000])
    d_values: list = field(default_factory=lambda: [1])
    k_values: list = field(default_factory=lambda: [20])
    slicing_rules: list = field(default_factory=lambda: ["scott"])
    tau: list = field(default_factory=lambda: [1.0])
    replicates: int = 20
    master_seed: int = 0
    test_grid_size: int = 2000
    noise_sd: float = DEFAULT_NOISE_SD
    shape: str = "uni_peak"
    kernel: str = "gaussian"
    sigma: float | None = None
    lam: float | None = None
    bandwidth_rule: str = "median"

    def __post_init__(self):
        self.estimators = [_estimator(e) for e in _as_list(self.estimators, str)]
        self.n_values = _as_list(self.n_values, int)
        self.d_values = _as_list(self.d_values, int)
        self.k_values = _as_list(self.k_values, int)
        self.slicing_rules = [format_rule(r) for r in _as_list(self.slicing_rules, str)]
        self.tau = _as_list(self.tau, _tau)
        self.replicates = int(self.replicates)
        if self.replicates < 1:
            raise InputError("replicates must be at least 1")
        if not self.estimators:
            raise InputError("no estimators requested")
        if any(t <= 0 or t > 1 for t in self.tau):
            raise InputError("tau values must lie in (0, 1]")
        if any(n < 2 for n in self.n_values) or any(d < 1 for d in self.d_values):
            raise InputError("n must be at least 2 and d at least 1")
        if any(k < 1 or k > n for k in self.k_values for n in self.n_values):
            raise InputError("every k must satisfy 1 <= k <= n")
        if self.test_grid_size < 1:
            raise InputError("test_grid_size must be positive")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be nonnegative")

    def cells(self) -> list[tuple[int, int, int]]:
        return list(itertools.product(self.n_values, self.d_values, self.k_values))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**mapping)


@dataclass
class ExperimentReport:
    config: dict
    records: list
    failures: list = field(default_factory=list)
    total_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"config": self.config, "records": self.records, "failures": self.failures,
                "total_seconds": self.total_seconds}


def evaluation_points(d: int, q: int, seed: int) -> np.ndarray:
    """Evaluation points in [0, 1]^d: an even grid for d=1, a seeded uniform sample otherwise."""
    if d == 1:
        return np.linspace(0.0, 1.0, q)[:, None]
    return rng_for(seed, STREAM_TEST_GRID).uniform(0.0, 1.0, size=(q, d))


def _estimator_keys(cfg: ExperimentConfig):
    for name in cfg.estimators:
        if name == "oversampled_dac":
            for rule in cfg.slicing_rules:
                for tau in cfg.tau:
                    yield name, rule, tau
        else:
            yield name, None, None


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def fit_and_score(data, spec, lam, key, k, seed, Xeval, target) -> dict:
    """Fit one estimator variant and score it against ``target`` at ``Xeval``."""
    name, rule, tau = key
    rec = {}
    if name == "full":
        model, secs = _timed(lambda: fit(data, spec, lam))
        pred = predict(model, Xeval)
        rec.update(node_sizes=[data.n], pre=data.n, post=data.n, l=1)
    else:
        if name == "classical_dac":
            plan_fn = lambda: classical_plan(data.n, k, seed)  # noqa: E731
            l = 1
        else:
            slices = make_slices(data.y, rule)
            plan_fn = lambda: oversample_plan(data.y, slices, tau, k, seed)  # noqa: E731
            l = slices.l

        def run():
            plan = plan_fn()
            return plan, fit_dac(data, plan, spec, lam)

        (plan, model), secs = _timed(run)
        pred = predict_dac(model, Xeval)
        rec.update(node_sizes=plan.node_sizes, pre=plan.pre_dedup_total, post=plan.post_dedup_total, l=l)
    rec["mse"] = mse_against_truth(pred, target)
    rec["fit_seconds"] = secs
    rec["ntilde_bound_ok"] = bool(rec["post"] <= rec["pre"] <= rec["l"] * data.n)
    return rec


def _run_replicate(cfg: ExperimentConfig, cell_index: int, cell, rep: int) -> dict:
    n, d, k = cell
    seed = derive_seed(cfg.master_seed, cell_index, rep)
    data, eta = generate(SynthSpec(cfg.shape, n, d, cfg.noise_sd, seed))
    Xeval = evaluation_points(d, cfg.test_grid_size, seed)
    truth = eta(Xeval)
    out = {"seed": seed}
    try:
        spec, lam = resolve_hyperparameters(
            data, kernel=cfg.kernel, sigma=cfg.sigma, lam=cfg.lam, bandwidth_rule=cfg.bandwidth_rule, seed=seed
        )
    except Exception as exc:  # recorded, other cells keep running
        out["error"] = f"hyperparameter selection: {type(exc).__name__}: {exc}"
        return out
    out["sigma"], out["lambda"] = spec.sigma, lam
    for key in _estimator_keys(cfg):
        try:
            out[key] = fit_and_score(data, spec, lam, key, k, seed, Xeval, truth)
        except Exception as exc:
            out[key] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def _summarize(values) -> float | None:
    # None rather than NaN keeps the JSON report strict
    return float(np.mean(values)) if len(values) else None


def aggregate(cell, key, reps: list[dict], n_replicates: int) -> dict:
    n, d, k = cell
    name, rule, tau = key
    ok = [r for r in reps if "error" not in r]
    mses = [r["mse"] for r in ok]
    se = float(np.std(mses, ddof=1) / math.sqrt(len(mses))) if len(mses) > 1 else 0.0
    sizes = [r["node_sizes"] for r in ok]
    return {
        "n": n, "d": d, "k": k, "estimator": name, "slicing": rule, "tau": tau,
        "replicates": n_replicates,
        "n_failed": n_replicates - len(ok),
        "errors": sorted({r["error"] for r in reps if "error" in r}),
        "mean_mse": _summarize(mses),
        "se_mse": se,
        "mses": mses,
        "mean_fit_seconds": _summarize([r["fit_seconds"] for r in ok]),
        "node_size_min": int(min(min(s) for s in sizes)) if sizes else None,
        "node_size_mean": _summarize([np.mean(s) for s in sizes]),
        "node_size_max": int(max(max(s) for s in sizes)) if sizes else None,
        "pre_dedup_mean": _summarize([r["pre"] for r in ok]),
        "post_dedup_mean": _summarize([r["post"] for r in ok]),
        "slices_mean": _summarize([r["l"] for r in ok]),
        "ntilde_bound_ok": all(r["ntilde_bound_ok"] for r in ok),
    }


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Replicated comparison of the requested estimators over every (n, d, k) cell.

    Hyperparameters are selected once per replicate and shared by all
    estimators, so estimator comparisons are paired.
    """
    start = time.perf_counter()
    cells = config.cells()
    tasks = [(ci, cell, rep) for ci, cell in enumerate(cells) for rep in range(config.replicates)]

    def work(task):
        ci, cell, rep = task
        return _run_replicate(config, ci, cell, rep)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    by_cell: dict[int, list[dict]] = {}
    for (ci, _, _), res in zip(tasks, results):
        by_cell.setdefault(ci, []).append(res)

    records, failures = [], []
    for ci, cell in enumerate(cells):
        reps = by_cell[ci]
        for rep_index, r in enumerate(reps):
            if "error" in r:
                failures.append({"n": cell[0], "d": cell[1], "k": cell[2], "replicate": rep_index, "error": r["error"]})
        for key in _estimator_keys(config):
            per_rep = [r.get(key, {"error": r.get("error", "missing")}) for r in reps]
            rec = aggregate(cell, key, per_rep, config.replicates)
            rec["sigma_mean"] = _summarize([r["sigma"] for r in reps if "sigma" in r])
            lams = [r["lambda"] for r in reps if "lambda" in r]
            rec["lambda_median"] = float(np.median(lams)) if lams else None
            if not rec["ntilde_bound_ok"]:
                log.warning("post-dedup total exceeded l*n in cell %s %s", cell, key)
            records.append(rec)
    return ExperimentReport(config.to_dict(), records, failures, time.perf_counter() - start)


def run_csv_experiment(
    data: Dataset,
    estimators=ESTIMATOR_NAMES,
    k_values=(10, 30, 50),
    slicing_rules=("scott",),
    tau=(1.0,),
    replicates: int = 10,
    test_fraction: float = 0.1,
    strata_rule: str = "scott",
    master_seed: int = 0,
    kernel: str = "gaussian",
    sigma: float | None = None,
    lam: float | None = None,
    bandwidth_rule: str = "median",
    workers: int = 1,
) -> ExperimentReport:
    """Held-out test MSE on a real table for a sweep over node counts.

    Each replicate draws a stratified test split, selects hyperparameters on
    the training part and fits every estimator for every ``k``.
    """
    estimators = [_estimator(e) for e in estimators]
    rules = [format_rule(r) for r in slicing_rules]
    taus = [_tau(t) for t in tau]
    strata = make_slices(data.y, strata_rule)
    keys = [(e, r, t) for e in estimators if e == "oversampled_dac" for r in rules for t in taus]
    keys = [(e, None, None) for e in estimators if e != "oversampled_dac"] + keys
    start = time.perf_counter()

    def work(rep):
        seed = derive_seed(master_seed, 0, rep)
        train, test = stratified_split(data, test_fraction, strata, seed)
        spec, lam_ = resolve_hyperparameters(
            train, kernel=kernel, sigma=sigma, lam=lam, bandwidth_rule=bandwidth_rule, seed=seed
        )
        out = {"sigma": spec.sigma, "lambda": lam_, "n_train": train.n}
        for k in k_values:
            for key in keys:
                if key[0] == "full" and k != k_values[0]:
                    continue
                try:
                    out[(k, key)] = fit_and_score(train, spec, lam_, key, k, seed, test.X, test.y)
                except Exception as exc:
                    out[(k, key)] = {"error": f"{type(exc).__name__}: {exc}"}
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(replicates)))
    else:
        results = [work(r) for r in range(replicates)]

    n_train = results[0]["n_train"]
    records = []
    for k in k_values:
        for key in keys:
            if key[0] == "full" and k != k_values[0]:
                continue
            rec = aggregate((n_train, data.d, k), key, [r[(k, key)] for r in results], replicates)
            records.append(rec)
    config = {
        "source": "csv", "n": data.n, "d": data.d, "features": list(data.feature_names),
        "response": data.response_name, "estimators": estimators, "k_values": list(k_values),
        "slicing_rules": rules, "tau": taus, "replicates": replicates, "test_fraction": test_fraction,
        "strata_rule": strata_rule, "master_seed": master_seed, "kernel": kernel, "sigma": sigma, "lam": lam,
        "bandwidth_rule": bandwidth_rule,
    }
    return ExperimentReport(config, records, [], time.perf_counter() - start)


# ---------------------------------------------------------------- report output


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if "seconds" not in k}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def report_body(report: ExperimentReport) -> str:
    """Canonical JSON text of the report without timing fields."""
    return json.dumps(_strip_timing(report.to_dict()), sort_keys=True)


def write_report_json(report: ExperimentReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


def report_csv_text(report: ExperimentReport) -> str:
    """One row per record; the config echo is written as leading ``#`` lines."""
    buf = io.StringIO()
    for key, value in sorted(report.config.items()):
        buf.write(f"# {key}={json.dumps(value)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in report.records:
        w.writerow(["" if rec.get(c) is None else rec.get(c) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_report_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(report_csv_text(report))
