"""Response slicing and node-partition plans.

Two plan builders live here: ``classical_plan`` deals a random permutation
into ``k`` even blocks, and ``oversample_plan`` replicates observations
from sparse response slices before dealing each slice across the nodes and
de-duplicating inside every node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from skewkrr._rng import STREAM_PARTITION, rng_for
from skewkrr.exceptions import InputError, PlanError

RULE_ALIASES = {"fd": "freedman_diaconis", "freedman-diaconis": "freedman_diaconis"}
DATA_RULES = ("scott", "sturges", "freedman_diaconis")


def parse_rule(rule) -> tuple[str, int | None]:
    """Normalize ``"fixed:5"``, ``("fixed", 5)``, ``"scott"``, ``"fd"`` ..."""
    if isinstance(rule, tuple):
        name, l = rule
    elif isinstance(rule, int):
        name, l = "fixed", rule
    else:
        text = str(rule).strip().lower()
        name, _, arg = text.partition(":")
        name = RULE_ALIASES.get(name, name)
        l = None
        if name == "fixed":
            try:
                l = int(arg)
            except ValueError:
                raise InputError(f"fixed slicing needs an integer count, got {rule!r}") from None
    if name == "fixed":
        if l is None or l < 1:
            raise InputError(f"fixed slicing needs l >= 1, got {l}")
        return "fixed", int(l)
    if name not in DATA_RULES:
        raise InputError(f"unknown slicing rule {rule!r}")
    return name, None


def format_rule(rule) -> str:
    name, l = parse_rule(rule)
    return f"fixed:{l}" if name == "fixed" else name


def slice_count(y, rule) -> int:
    """Number of equally spaced response slices chosen by ``rule``."""
    name, l = parse_rule(rule)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n < 1:
        raise InputError("slice_count needs a nonempty response")
    if name == "fixed":
        return int(min(max(l, 1), n))
    span = float(np.max(y) - np.min(y))
    if n < 2 or span == 0:
        return 1
    if name == "sturges":
        count = math.ceil(math.log2(n)) + 1
    else:
        width = None
        if name == "freedman_diaconis":
            q75, q25 = np.percentile(y, [75, 25])
            iqr = float(q75 - q25)
            if iqr > 0:
                width = 2.0 * iqr * n ** (-1.0 / 3.0)
        if width is None:
            width = 3.49 * float(np.std(y, ddof=1)) * n ** (-1.0 / 3.0)
        count = math.ceil(span / width)
    return int(min(max(count, 1), n))


@dataclass
class SliceSpec:
    """Equally spaced slices over the response range.

    Intervals are right-open except the last, which is closed.
    """

    boundaries: NDArray[np.float64]
    rule: str
    counts: NDArray[np.int64]

    @property
    def l(self) -> int:
        return len(self.counts)

    def assign(self, y) -> NDArray[np.int64]:
        """Slice index of every response value."""
        y = np.asarray(y, dtype=float).ravel()
        idx = np.searchsorted(self.boundaries, y, side="right") - 1
        return np.clip(idx, 0, self.l - 1).astype(np.int64)

    def to_dict(self) -> dict:
        return {"rule": self.rule, "boundaries": self.boundaries.tolist(), "counts": self.counts.tolist()}


def make_slices(y, rule) -> SliceSpec:
    y = np.asarray(y, dtype=float).ravel()
    l = slice_count(y, rule)
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi == lo:
        half = 0.5 * max(1.0, abs(lo))
        bounds = np.array([lo - half, lo + half])
        l = 1
    else:
        bounds = np.linspace(lo, hi, l + 1)
    spec = SliceSpec(boundaries=bounds, rule=format_rule(rule), counts=np.zeros(l, dtype=np.int64))
    spec.counts = np.bincount(spec.assign(y), minlength=l).astype(np.int64)
    return spec


def copy_count(count_max: int, count_j: int, tau: float = 1.0) -> int:
    """Total copies of each element in a slice of size ``count_j``.

    ``max(1, floor(tau * count_max / count_j))``; a copy count of one means
    no duplication.
    """
    if count_j < 1:
        raise InputError("copy_count is undefined for an empty slice")
    if count_max < count_j:
        raise InputError(f"count_max={count_max} is smaller than count_j={count_j}")
    if not 0 < tau <= 1:
        raise InputError(f"tau must lie in (0, 1], got {tau}")
    # the epsilon keeps exact ratios such as 0.2 * 100 / 20 from flooring down
    return max(1, math.floor(tau * count_max / count_j + 1e-9))


@dataclass
class PartitionPlan:
    """Per-node lists of original-sample indices.

    ``pre_dedup_total`` counts every dealt copy; ``post_dedup_total`` is the
    sum of node sizes after de-duplication.
    """

    node_assignments: list[NDArray[np.int64]]
    k: int
    pre_dedup_total: int
    post_dedup_total: int
    seed: int
    method: str = "classical"
    params: dict = field(default_factory=dict)

    @property
    def node_sizes(self) -> list[int]:
        return [len(a) for a in self.node_assignments]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "nodes": [np.asarray(a).tolist() for a in self.node_assignments],
            "pre_dedup_total": self.pre_dedup_total,
            "post_dedup_total": self.post_dedup_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionPlan":
        nodes = [np.asarray(a, dtype=np.int64) for a in d["nodes"]]
        if len(nodes) != int(d["k"]):
            raise PlanError("node list length does not match k")
        post = sum(len(a) for a in nodes)
        if post != int(d["post_dedup_total"]):
            raise PlanError("post_dedup_total does not match the node sizes")
        return cls(nodes, int(d["k"]), int(d["pre_dedup_total"]), post, int(d["seed"]))

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        return cls.from_dict(json.loads(text))

    def reference(self) -> dict:
        """Compact description (no indices) used when persisting models."""
        return {
            "method": self.method,
            "k": self.k,
            "seed": self.seed,
            **self.params,
            "node_sizes": self.node_sizes,
            "pre_dedup_total": self.pre_dedup_total,
            "post_dedup_total": self.post_dedup_total,
        }


def classical_plan(n: int, k: int, seed: int = 0) -> PartitionPlan:
    """Random even split of ``range(n)`` into ``k`` blocks, larger blocks first."""
    if k < 1:
        raise PlanError(f"k must be positive, got {k}")
    if k > n:
        raise PlanError(f"cannot split {n} observations over {k} nodes")
    perm = rng_for(seed, STREAM_PARTITION).permutation(n)
    nodes = [np.sort(block) for block in np.array_split(perm, k)]
    return PartitionPlan(nodes, k, n, n, seed, method="classical")


def slice_order(slices: SliceSpec) -> list[int]:
    """Slice indices ranked by count descending, ties by lower boundary."""
    return sorted(range(slices.l), key=lambda j: (-int(slices.counts[j]), j))


def oversample_plan(y, slices: SliceSpec, tau: float, k: int, seed: int = 0) -> PartitionPlan:
    """Replicate sparse-slice observations, deal each slice over ``k`` nodes, de-duplicate.

    Each nonempty slice's multiset of copies is shuffled and dealt round-robin.
    The starting node for a slice continues where the previous slice stopped,
    so the total deal is one long round-robin and nodes never differ by more
    than one dealt entry.
    """
    y = np.asarray(y, dtype=float).ravel()
    if k < 1:
        raise PlanError(f"k must be positive, got {k}")
    labels = slices.assign(y)
    if not np.array_equal(np.bincount(labels, minlength=slices.l), slices.counts):
        raise InputError("slice counts are inconsistent with y")
    order = [j for j in slice_order(slices) if slices.counts[j] > 0]
    count_max = int(slices.counts[order[0]])
    copies = {j: copy_count(count_max, int(slices.counts[j]), tau) for j in order}
    pre_total = sum(copies[j] * int(slices.counts[j]) for j in order)
    if k > pre_total:
        raise PlanError(f"k={k} exceeds the {pre_total} oversampled entries; some node would be empty")

    rng = rng_for(seed, STREAM_PARTITION)
    buckets: list[list[NDArray[np.int64]]] = [[] for _ in range(k)]
    start = 0
    for j in order:
        members = np.flatnonzero(labels == j)
        multiset = np.tile(members, copies[j])
        rng.shuffle(multiset)
        for i in range(k):
            node = (start + i) % k
            buckets[node].append(multiset[i::k])
        start = (start + multiset.size) % k

    nodes = [np.unique(np.concatenate(parts)) for parts in buckets]
    post_total = sum(a.size for a in nodes)
    dealt = [int(sum(p.size for p in parts)) for parts in buckets]
    params = {"rule": slices.rule, "l": slices.l, "tau": float(tau), "pre_dedup_sizes": dealt}
    return PartitionPlan(nodes, k, pre_total, post_total, seed, method="oversampled", params=params)
