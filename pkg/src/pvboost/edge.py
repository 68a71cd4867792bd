"""Reduced-precision inference path emulating an edge deployment.

The edge device is emulated by lowering every stored scalar to float32 and
executing comparisons on float32 values with a float32 output, which
reproduces the serialization-precision gap between a full-precision host
and a float32 runtime on one machine.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InputDimensionError, LoweringError
from .model_format import MODE_BRANCH, MODE_LEAF, ModelArtifact

_F32_MAX = float(np.finfo(np.float32).max)


@dataclass(frozen=True)
class ParityReport:
    mape_pct: float
    rmse: float
    n: int
    max_abs_diff: float


@dataclass(frozen=True)
class LatencyStats:
    n_inputs: int
    repetitions: int
    mean_us: float
    median_us: float
    p99_us: float
    min_us: float
    max_us: float


class _FlatTree:
    """One tree as parallel lists for a tight routing loop.

    feature[i] is -1 for leaves; payload[i] is the threshold for branches
    and the leaf weight for leaves, already rounded to float32.
    """

    __slots__ = ("feature", "payload", "left", "right")

    def __init__(self, feature, payload, left, right):
        self.feature = feature
        self.payload = payload
        self.left = left
        self.right = right


@dataclass(frozen=True)
class F32Model:
    feature_count: int
    base_score: float  # exactly representable in float32
    trees: tuple[_FlatTree, ...]


def _to_f32(value: float, what: str) -> float:
    with np.errstate(over="ignore"):
        lowered = float(np.float32(value))
    if math.isinf(lowered) and math.isfinite(value):
        raise LoweringError(f"{what} {value!r} overflows float32")
    return lowered


def lower_to_f32(artifact: ModelArtifact) -> F32Model:
    """Round every stored scalar to nearest-even float32; keep topology."""
    if abs(artifact.base_score) > _F32_MAX:
        raise LoweringError(f"base_score {artifact.base_score!r} overflows float32")
    base = _to_f32(artifact.base_score, "base_score")

    trees_nodes: dict[int, dict[int, int]] = {}
    for i, (tid, nid) in enumerate(zip(artifact.nodes_treeids, artifact.nodes_nodeids)):
        trees_nodes.setdefault(tid, {})[nid] = i
    leaf_index = {}
    li = 0
    for i, mode in enumerate(artifact.nodes_modes):
        if mode == MODE_LEAF:
            leaf_index[i] = li
            li += 1

    flat_trees = []
    for tid in sorted(trees_nodes):
        bucket = trees_nodes[tid]
        nids = sorted(bucket)
        pos = {nid: k for k, nid in enumerate(nids)}
        referenced = set()
        for nid in nids:
            i = bucket[nid]
            if artifact.nodes_modes[i] == MODE_BRANCH:
                referenced.add(artifact.nodes_truenodeids[i])
                referenced.add(artifact.nodes_falsenodeids[i])
        (root_nid,) = [nid for nid in nids if nid not in referenced]

        feature, payload, left, right = [], [], [], []
        # Root goes to slot 0 so the routing loop can always start there.
        order = [root_nid] + [nid for nid in nids if nid != root_nid]
        pos = {nid: k for k, nid in enumerate(order)}
        for nid in order:
            i = bucket[nid]
            if artifact.nodes_modes[i] == MODE_LEAF:
                feature.append(-1)
                payload.append(_to_f32(artifact.leaf_weights[leaf_index[i]],
                                       f"leaf weight (tree {tid})"))
                left.append(-1)
                right.append(-1)
            else:
                feature.append(artifact.nodes_featureids[i])
                payload.append(_to_f32(artifact.nodes_values[i],
                                       f"threshold (tree {tid})"))
                left.append(pos[artifact.nodes_truenodeids[i]])
                right.append(pos[artifact.nodes_falsenodeids[i]])
        flat_trees.append(_FlatTree(feature, payload, left, right))

    return F32Model(artifact.input_shape[1], base, tuple(flat_trees))


def infer_f32(model: F32Model, input_values) -> float:
    """Single-sample reduced-precision inference, fixed tree order 0..K-1.

    Comparisons use the float32-rounded input against float32 thresholds;
    leaf scores (float32-stored) are aggregated in double and the output
    is rounded once to float32, matching the aggregation behavior of the
    common tree-ensemble runtimes this path emulates.
    """
    values = list(input_values)
    if len(values) != model.feature_count:
        raise InputDimensionError(
            f"input data must contain exactly {model.feature_count} elements"
        )
    x = np.asarray(values, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        raise ValueError("input values must be finite")
    xs = x.tolist()

    acc = model.base_score
    for tree in model.trees:
        feat = tree.feature
        i = 0
        f = feat[0]
        while f >= 0:
            i = tree.left[i] if xs[f] <= tree.payload[i] else tree.right[i]
            f = feat[i]
        acc += tree.payload[i]
    return float(np.float32(acc))


def infer_f32_batch(model: F32Model, rows) -> list[float]:
    return [infer_f32(model, row) for row in rows]


def parity_report(full_precision, edge, eps: float = 1e-6) -> ParityReport:
    """Compare two prediction streams; MAPE is relative to full precision.

    Per-sample relative error is |a-b| / max(|a|, eps), guarding the
    near-zero outputs a PV model produces outside daylight.
    """
    a = np.asarray(full_precision, dtype=np.float64)
    b = np.asarray(edge, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("need two equal-length non-empty streams")
    diff = np.abs(a - b)
    rel = diff / np.maximum(np.abs(a), eps)
    return ParityReport(
        mape_pct=float(100.0 * rel.mean()),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        n=int(a.size),
        max_abs_diff=float(diff.max()),
    )


def measure_latencies(model: F32Model, inputs, repetitions: int) -> np.ndarray:
    """Per-call wall-clock times in microseconds, warm-up sweep excluded.

    Each timed call covers the full single-sample path including input
    marshalling. Must run on one thread for the timings to mean anything.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rows = [list(r) for r in inputs]
    if not rows:
        raise ValueError("inputs must be non-empty")
    for row in rows:  # warm-up, excluded from stats
        infer_f32(model, row)

    clock = time.perf_counter_ns
    samples = np.empty(len(rows) * repetitions, dtype=np.float64)
    k = 0
    for _ in range(repetitions):
        for row in rows:
            t0 = clock()
            infer_f32(model, row)
            t1 = clock()
            samples[k] = (t1 - t0) / 1000.0
            k += 1
    return samples


def latency_stats(samples: np.ndarray, n_inputs: int,
                  repetitions: int) -> LatencyStats:
    return LatencyStats(
        n_inputs=n_inputs,
        repetitions=repetitions,
        mean_us=float(samples.mean()),
        median_us=float(np.median(samples)),
        p99_us=float(np.percentile(samples, 99)),
        min_us=float(samples.min()),
        max_us=float(samples.max()),
    )


def latency_bench(model: F32Model, inputs, repetitions: int) -> LatencyStats:
    """Time single-sample inference over all inputs x repetitions."""
    rows = [list(r) for r in inputs]
    samples = measure_latencies(model, rows, repetitions)
    return latency_stats(samples, len(rows), repetitions)
