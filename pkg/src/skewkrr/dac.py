"""Divide-and-conquer fitting over a partition plan and the averaged predictor."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from skewkrr.exceptions import InputError, NodeFitError, PlanError
from skewkrr.kernels import KernelSpec
from skewkrr.krr import Dataset, KrrModel, fit_with_ridge, predict
from skewkrr.partition import PartitionPlan

MODEL_FORMAT = "skewkrr-dac-model"
MODEL_VERSION = 1


@dataclass
class DacModel:
    """Ordered local models; predictions are their plain average.

    ``plan`` is the materialized plan right after fitting and ``None`` after
    loading from JSON, where only ``plan_info`` (seed, parameters, totals)
    is kept.
    """

    locals: list[KrrModel]
    spec: KernelSpec
    lambda_global: float
    plan: PartitionPlan | None = None
    plan_info: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.locals)


def node_ridge(plan: PartitionPlan, lambda_global: float) -> float:
    """Ridge shared by every node: the post-de-duplication total times lambda."""
    return plan.post_dedup_total * lambda_global


def fit_dac(
    data: Dataset,
    plan: PartitionPlan,
    spec: KernelSpec,
    lambda_global: float,
    workers: int = 1,
) -> DacModel:
    if not lambda_global > 0:
        raise InputError(f"lambda_global must be positive, got {lambda_global}")
    if len(plan.node_assignments) != plan.k:
        raise PlanError("plan has the wrong number of nodes")
    for i, rows in enumerate(plan.node_assignments):
        if len(rows) == 0:
            raise PlanError(f"node {i} is empty")
        if rows.min() < 0 or rows.max() >= data.n:
            raise PlanError(f"node {i} references rows outside the dataset")
    ridge = node_ridge(plan, lambda_global)

    def fit_node(i: int) -> KrrModel:
        try:
            return fit_with_ridge(data.subset(plan.node_assignments[i]), spec, ridge)
        except Exception as exc:
            raise NodeFitError(i, exc) from exc

    if workers > 1 and plan.k > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map() yields in submission order and re-raises the first failure
            local_models = list(pool.map(fit_node, range(plan.k)))
    else:
        local_models = [fit_node(i) for i in range(plan.k)]
    return DacModel(local_models, spec, float(lambda_global), plan=plan, plan_info=plan.reference())


def predict_dac(model: DacModel, Xnew) -> NDArray[np.float64]:
    total = None
    for local in model.locals:
        pred = predict(local, Xnew)
        total = pred if total is None else total + pred
    return total / model.k


def model_to_dict(model: DacModel, **extra) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        **extra,
        "spec": model.spec.to_dict(),
        "lambda_global": model.lambda_global,
        "plan": model.plan_info,
        "nodes": [
            {"lambda": m.lam, "centers": m.centers.tolist(), "coefficients": m.coefficients.tolist()}
            for m in model.locals
        ],
    }


def model_from_dict(d: dict) -> DacModel:
    if d.get("format") != MODEL_FORMAT:
        raise InputError(f"not a {MODEL_FORMAT} document")
    spec = KernelSpec.from_dict(d["spec"])
    local_models = []
    for node in d["nodes"]:
        centers = np.asarray(node["centers"], dtype=float)
        if centers.ndim == 1:
            centers = centers.reshape(-1, 1)
        local_models.append(
            KrrModel(centers, np.asarray(node["coefficients"], dtype=float), spec, float(node["lambda"]))
        )
    return DacModel(local_models, spec, float(d["lambda_global"]), plan=None, plan_info=dict(d.get("plan") or {}))


def save_model(model: DacModel, path, **extra) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, **extra), fh)


def load_model(path) -> tuple[DacModel, dict]:
    """Return the model and the full JSON document (for feature names etc.)."""
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_dict(doc), doc
