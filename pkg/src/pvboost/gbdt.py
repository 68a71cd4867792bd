"""Gradient-boosted regression trees with a second-order split objective.

Training minimizes squared error through its first/second derivatives:
each round fits one tree to the current gradients, leaves take the
closed-form optimum -G/(H+lambda), and split candidates are scored by the
exact greedy gain with complexity penalty gamma. Shrinkage is folded into
the stored leaf weights, so prediction is a plain additive sum over trees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .dataset import SplitDataset, SampleRecord
from .errors import DegenerateLeafError, EmptyDatasetError


@dataclass(frozen=True)
class Hyperparams:
    num_trees: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("reg_lambda, gamma, min_child_weight must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass(frozen=True)
class Leaf:
    weight: float


@dataclass(frozen=True)
class Branch:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Branch, Leaf]


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode
    leaf_count: int


@dataclass(frozen=True)
class Ensemble:
    base_score: float
    trees: tuple[RegressionTree, ...]
    feature_count: int
    target: str = "active"


@dataclass(frozen=True)
class GradPair:
    g: float
    h: float


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    gain: float


def compute_gradients(labels, predictions) -> list[GradPair]:
    """First/second derivatives of 0.5*(y - yhat)^2 w.r.t. yhat."""
    y = np.asarray(labels, dtype=np.float64)
    yhat = np.asarray(predictions, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError("labels and predictions must have equal length")
    g = yhat - y
    return [GradPair(float(gi), 1.0) for gi in g]


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    """Closed-form optimal leaf value -G/(H + lambda)."""
    denom = H + reg_lambda
    if denom <= 0:
        raise DegenerateLeafError(f"H + lambda = {denom} is not positive")
    return -G / denom


def split_gain(GL: float, HL: float, GR: float, HR: float,
               reg_lambda: float, gamma: float) -> float:
    """Objective reduction for a candidate split, minus the gamma penalty."""
    for denom in (HL + reg_lambda, HR + reg_lambda, HL + HR + reg_lambda):
        if denom <= 0:
            raise DegenerateLeafError(f"denominator {denom} is not positive")
    G = GL + GR
    return 0.5 * (
        GL * GL / (HL + reg_lambda)
        + GR * GR / (HR + reg_lambda)
        - G * G / (HL + HR + reg_lambda)
    ) - gamma


def _grad_arrays(grads) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(grads, tuple) and len(grads) == 2:
        return np.asarray(grads[0], float), np.asarray(grads[1], float)
    g = np.array([p.g for p in grads], dtype=np.float64)
    h = np.array([p.h for p in grads], dtype=np.float64)
    return g, h


def find_best_split(sample_indices, features, grads,
                    params: Hyperparams) -> Optional[SplitCandidate]:
    """Exact greedy search over all midpoints of every feature.

    Returns the maximal positive-gain candidate whose children both carry
    at least min_child_weight summed hessian, or None. Ties break toward
    the lower feature index, then the lower threshold, which keeps the
    result independent of any search parallelism.
    """
    idx = np.asarray(sample_indices, dtype=np.intp)
    if idx.size < 2:
        raise ValueError("need at least 2 samples to split")
    X = np.asarray(features, dtype=np.float64)
    g, h = _grad_arrays(grads)
    g = g[idx]
    h = h[idx]

    best: Optional[SplitCandidate] = None
    for j in range(X.shape[1]):
        v = X[idx, j]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        distinct = vs[1:] > vs[:-1]
        if not distinct.any():
            continue  # constant column: no midpoint exists
        cg = np.cumsum(g[order])
        ch = np.cumsum(h[order])
        Gtot, Htot = cg[-1], ch[-1]
        GL = cg[:-1][distinct]
        HL = ch[:-1][distinct]
        GR = Gtot - GL
        HR = Htot - HL
        thr = 0.5 * (vs[:-1] + vs[1:])[distinct]
        gains = 0.5 * (
            GL * GL / (HL + params.reg_lambda)
            + GR * GR / (HR + params.reg_lambda)
            - Gtot * Gtot / (Htot + params.reg_lambda)
        ) - params.gamma
        ok = (HL >= params.min_child_weight) & (HR >= params.min_child_weight)
        gains = np.where(ok, gains, -np.inf)
        k = int(np.argmax(gains))  # first max = lowest threshold
        if gains[k] > 0 and (best is None or gains[k] > best.gain):
            best = SplitCandidate(j, float(thr[k]), float(gains[k]))
    return best


def build_tree(sample_indices, features, grads, params: Hyperparams) -> RegressionTree:
    """Grow one tree greedily to max_depth; leaves store shrunk weights."""
    idx = np.asarray(sample_indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("sample set must be non-empty")
    X = np.asarray(features, dtype=np.float64)
    g, h = _grad_arrays(grads)
    leaves = 0

    def grow(ids: np.ndarray, depth: int) -> TreeNode:
        nonlocal leaves
        if depth < params.max_depth and ids.size >= 2:
            cand = find_best_split(ids, X, (g, h), params)
            if cand is not None:
                mask = X[ids, cand.feature_index] <= cand.threshold
                left = grow(ids[mask], depth + 1)
                right = grow(ids[~mask], depth + 1)
                return Branch(cand.feature_index, cand.threshold, left, right)
        w = params.learning_rate * leaf_weight(
            float(g[ids].sum()), float(h[ids].sum()), params.reg_lambda
        )
        leaves += 1
        return Leaf(w)

    root = grow(idx, 0)
    return RegressionTree(root, leaves)


def _tree_predict_batch(node: TreeNode, X: np.ndarray, ids: np.ndarray,
                        out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[ids] = node.weight
        return
    mask = X[ids, node.feature_index] <= node.threshold
    _tree_predict_batch(node.left, X, ids[mask], out)
    _tree_predict_batch(node.right, X, ids[~mask], out)


def predict_batch(ensemble: Ensemble, X) -> np.ndarray:
    """Vectorized prediction over a feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ensemble.feature_count:
        raise ValueError(f"expected n x {ensemble.feature_count} matrix")
    out = np.full(X.shape[0], ensemble.base_score, dtype=np.float64)
    ids = np.arange(X.shape[0])
    buf = np.empty(X.shape[0])
    for tree in ensemble.trees:
        _tree_predict_batch(tree.root, X, ids, buf)
        out += buf
    return out


def predict(ensemble: Ensemble, x) -> float:
    """Route one feature vector through every tree; left iff x[f] <= t."""
    x = list(x)
    if len(x) != ensemble.feature_count:
        raise ValueError(
            f"expected {ensemble.feature_count} features, got {len(x)}"
        )
    total = ensemble.base_score
    for tree in ensemble.trees:
        node = tree.root
        while isinstance(node, Branch):
            node = node.left if x[node.feature_index] <= node.threshold else node.right
        total += node.weight
    return total


def train(split: SplitDataset, target: str, params: Hyperparams) -> Ensemble:
    """Boost num_trees rounds on the split's training records."""
    if not split.train:
        raise EmptyDatasetError("training set is empty")
    X = np.array([r.features for r in split.train], dtype=np.float64)
    if target == "active":
        y = np.array([r.active_power for r in split.train])
    elif target == "reactive":
        y = np.array([r.reactive_power for r in split.train])
    else:
        raise ValueError(f"unknown target {target!r}")

    base = float(y.mean())
    preds = np.full(y.shape, base)
    ids = np.arange(y.size)
    trees = []
    buf = np.empty(y.size)
    for _ in range(params.num_trees):
        g = preds - y
        h = np.ones_like(g)
        tree = build_tree(ids, X, (g, h), params)
        _tree_predict_batch(tree.root, X, ids, buf)
        preds = preds + buf
        trees.append(tree)
    return Ensemble(base, tuple(trees), X.shape[1], target)


def collect_leaf_weights(tree: RegressionTree) -> list[float]:
    out: list[float] = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            out.append(node.weight)
        else:
            stack.append(node.right)
            stack.append(node.left)
    return out


def objective_value(ensemble: Ensemble, data: list[SampleRecord],
                    params: Hyperparams) -> float:
    """Squared loss plus gamma*T and 0.5*lambda*|w|^2 over stored weights."""
    if not data:
        raise ValueError("data must be non-empty")
    X = np.array([r.features for r in data], dtype=np.float64)
    if ensemble.target == "reactive":
        y = np.array([r.reactive_power for r in data])
    else:
        y = np.array([r.active_power for r in data])
    yhat = predict_batch(ensemble, X)
    loss = float(0.5 * np.sum((y - yhat) ** 2))
    reg = 0.0
    for tree in ensemble.trees:
        ws = collect_leaf_weights(tree)
        reg += params.gamma * tree.leaf_count
        reg += 0.5 * params.reg_lambda * float(np.sum(np.square(ws)))
    return loss + reg
