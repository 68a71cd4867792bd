"""Portable tree-ensemble exchange format.

Trees are flattened breadth-first into parallel arrays (tree id, node id,
feature id, mode, threshold, child links) with leaf values in a separate
array aligned to the LEAF entries, mirroring the attribute model of ONNX's
TreeEnsembleRegressor. The on-disk encoding is a canonical UTF-8 JSON
document: sorted keys, no whitespace variation, floats printed with 17
significant digits, NaN/Inf rejected. Same ensemble, same bytes.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ArtifactValidationError, FormatParseError
from .gbdt import Branch, Ensemble, Leaf, RegressionTree, TreeNode

FORMAT_VERSION = 1
INPUT_NAME = "float_input"
OUTPUT_NAME = "variable"
MODE_BRANCH = "BRANCH_LEQ"
MODE_LEAF = "LEAF"
FILE_SUFFIX = ".gbm.json"

_METADATA_KEYS = ("inverter_id", "target", "capacity", "training_seed", "created_at")


@dataclass(frozen=True)
class ModelArtifact:
    format_version: int
    input_name: str
    output_name: str
    input_shape: tuple[int, int]
    base_score: float
    nodes_treeids: tuple[int, ...]
    nodes_nodeids: tuple[int, ...]
    nodes_featureids: tuple[int, ...]
    nodes_modes: tuple[str, ...]
    nodes_values: tuple[float, ...]
    nodes_truenodeids: tuple[int, ...]
    nodes_falsenodeids: tuple[int, ...]
    leaf_weights: tuple[float, ...]
    metadata: dict = field(default_factory=dict)


def export_model(ensemble: Ensemble, metadata: dict | None = None) -> ModelArtifact:
    """Flatten every tree breadth-first; node ids restart at 0 per tree."""
    treeids: list[int] = []
    nodeids: list[int] = []
    featureids: list[int] = []
    modes: list[str] = []
    values: list[float] = []
    trueids: list[int] = []
    falseids: list[int] = []
    leaf_weights: list[float] = []

    for tid, tree in enumerate(ensemble.trees):
        queue: deque[TreeNode] = deque([tree.root])
        ids: dict[int, int] = {id(tree.root): 0}
        next_id = 1
        while queue:
            node = queue.popleft()
            nid = ids[id(node)]
            treeids.append(tid)
            nodeids.append(nid)
            if isinstance(node, Leaf):
                featureids.append(0)
                modes.append(MODE_LEAF)
                values.append(0.0)
                trueids.append(0)
                falseids.append(0)
                leaf_weights.append(float(node.weight))
            else:
                ids[id(node.left)] = next_id
                ids[id(node.right)] = next_id + 1
                featureids.append(int(node.feature_index))
                modes.append(MODE_BRANCH)
                values.append(float(node.threshold))
                trueids.append(next_id)
                falseids.append(next_id + 1)
                next_id += 2
                queue.append(node.left)
                queue.append(node.right)

    meta = dict(metadata or {})
    return ModelArtifact(
        format_version=FORMAT_VERSION,
        input_name=INPUT_NAME,
        output_name=OUTPUT_NAME,
        input_shape=(1, ensemble.feature_count),
        base_score=float(ensemble.base_score),
        nodes_treeids=tuple(treeids),
        nodes_nodeids=tuple(nodeids),
        nodes_featureids=tuple(featureids),
        nodes_modes=tuple(modes),
        nodes_values=tuple(values),
        nodes_truenodeids=tuple(trueids),
        nodes_falsenodeids=tuple(falseids),
        leaf_weights=tuple(leaf_weights),
        metadata=meta,
    )


def _fmt(value) -> str:
    if isinstance(value, bool):
        raise ValueError("booleans are not part of the format")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("NaN/Inf not permitted in artifacts")
        return format(value, ".17g")
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        items = sorted(value.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_fmt(v)}" for k, v in items) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_canonical_text(artifact: ModelArtifact) -> str:
    doc = {
        "format_version": artifact.format_version,
        "input_name": artifact.input_name,
        "output_name": artifact.output_name,
        "input_shape": list(artifact.input_shape),
        "base_score": float(artifact.base_score),
        "nodes_treeids": list(artifact.nodes_treeids),
        "nodes_nodeids": list(artifact.nodes_nodeids),
        "nodes_featureids": list(artifact.nodes_featureids),
        "nodes_modes": list(artifact.nodes_modes),
        "nodes_values": [float(v) for v in artifact.nodes_values],
        "nodes_truenodeids": list(artifact.nodes_truenodeids),
        "nodes_falsenodeids": list(artifact.nodes_falsenodeids),
        "leaf_weights": [float(v) for v in artifact.leaf_weights],
        "metadata": artifact.metadata,
    }
    return _fmt(doc) + "\n"


def _require(doc: dict, key: str, kind):
    if key not in doc:
        raise FormatParseError(0, f"missing field {key!r}")
    value = doc[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is list and not isinstance(value, list):
        raise FormatParseError(0, f"field {key!r} must be an array")
    elif kind is not list and not isinstance(value, kind):
        raise FormatParseError(0, f"field {key!r} has wrong type")
    return value


def parse_artifact(text: str | bytes) -> ModelArtifact:
    """Parse the canonical document; FormatParseError carries a byte offset."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    def _reject(name):
        raise FormatParseError(0, f"non-finite constant {name!r} not permitted")
    try:
        doc = json.loads(text, parse_constant=_reject)
    except json.JSONDecodeError as exc:
        raise FormatParseError(exc.pos, exc.msg) from None
    if not isinstance(doc, dict):
        raise FormatParseError(0, "top level must be an object")

    shape = _require(doc, "input_shape", list)
    if len(shape) != 2 or not all(isinstance(v, int) for v in shape):
        raise FormatParseError(0, "input_shape must be two integers")

    def int_list(key):
        vals = _require(doc, key, list)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
            raise FormatParseError(0, f"field {key!r} must contain integers")
        return tuple(vals)

    def float_list(key):
        vals = _require(doc, key, list)
        out = []
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise FormatParseError(0, f"field {key!r} must contain numbers")
            if not math.isfinite(v):
                raise FormatParseError(0, f"non-finite number in {key!r}")
            out.append(float(v))
        return tuple(out)

    modes = _require(doc, "nodes_modes", list)
    if not all(isinstance(m, str) for m in modes):
        raise FormatParseError(0, "nodes_modes must contain strings")

    base = _require(doc, "base_score", float)
    if not math.isfinite(base):
        raise FormatParseError(0, "base_score must be finite")

    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise FormatParseError(0, "metadata must be an object")

    return ModelArtifact(
        format_version=_require(doc, "format_version", int),
        input_name=_require(doc, "input_name", str),
        output_name=_require(doc, "output_name", str),
        input_shape=(shape[0], shape[1]),
        base_score=base,
        nodes_treeids=int_list("nodes_treeids"),
        nodes_nodeids=int_list("nodes_nodeids"),
        nodes_featureids=int_list("nodes_featureids"),
        nodes_modes=tuple(modes),
        nodes_values=float_list("nodes_values"),
        nodes_truenodeids=int_list("nodes_truenodeids"),
        nodes_falsenodeids=int_list("nodes_falsenodeids"),
        leaf_weights=float_list("leaf_weights"),
        metadata=meta,
    )


def validate(artifact: ModelArtifact) -> list[str]:
    """Check every structural invariant; returns all violations found."""
    v: list[str] = []
    n = len(artifact.nodes_treeids)
    arrays = {
        "nodes_nodeids": artifact.nodes_nodeids,
        "nodes_featureids": artifact.nodes_featureids,
        "nodes_modes": artifact.nodes_modes,
        "nodes_values": artifact.nodes_values,
        "nodes_truenodeids": artifact.nodes_truenodeids,
        "nodes_falsenodeids": artifact.nodes_falsenodeids,
    }
    for name, arr in arrays.items():
        if len(arr) != n:
            v.append(f"{name} has length {len(arr)}, expected {n}")
    if v:
        return v  # lengths broken: positional checks below would misfire

    if artifact.input_shape[0] != 1 or artifact.input_shape[1] < 1:
        v.append(f"input_shape {artifact.input_shape} must be [1, d] with d >= 1")
    feature_count = artifact.input_shape[1]

    n_leaves = sum(1 for m in artifact.nodes_modes if m == MODE_LEAF)
    if len(artifact.leaf_weights) != n_leaves:
        v.append(
            f"leaf_weights has length {len(artifact.leaf_weights)}, "
            f"expected {n_leaves} (one per LEAF node)"
        )

    for i, mode in enumerate(artifact.nodes_modes):
        if mode not in (MODE_BRANCH, MODE_LEAF):
            v.append(f"node {i}: unknown mode {mode!r}")

    # Group node indices per tree.
    trees: dict[int, dict[int, int]] = {}
    for i, (tid, nid) in enumerate(zip(artifact.nodes_treeids, artifact.nodes_nodeids)):
        bucket = trees.setdefault(tid, {})
        if nid in bucket:
            v.append(f"tree {tid}: duplicate node id {nid}")
        else:
            bucket[nid] = i

    for tid, bucket in sorted(trees.items()):
        referenced: set[int] = set()
        for nid, i in bucket.items():
            if artifact.nodes_modes[i] != MODE_BRANCH:
                continue
            fid = artifact.nodes_featureids[i]
            if not 0 <= fid < feature_count:
                v.append(f"tree {tid} node {nid}: feature id {fid} out of range")
            if not math.isfinite(artifact.nodes_values[i]):
                v.append(f"tree {tid} node {nid}: non-finite threshold")
            for child in (artifact.nodes_truenodeids[i],
                          artifact.nodes_falsenodeids[i]):
                if child not in bucket:
                    v.append(f"tree {tid} node {nid}: missing child {child}")
                elif child in referenced:
                    v.append(f"tree {tid}: node {child} has multiple parents")
                else:
                    referenced.add(child)
        roots = [nid for nid in bucket if nid not in referenced]
        if len(roots) != 1:
            v.append(f"tree {tid}: expected one root, found {sorted(roots)}")
            continue
        # Walk from the root; every node must be reached exactly once.
        seen: set[int] = set()
        stack = [roots[0]]
        cyclic = False
        while stack:
            nid = stack.pop()
            if nid in seen:
                cyclic = True
                break
            seen.add(nid)
            i = bucket[nid]
            if artifact.nodes_modes[i] == MODE_BRANCH:
                t, f = artifact.nodes_truenodeids[i], artifact.nodes_falsenodeids[i]
                if t in bucket and f in bucket:
                    stack.extend((t, f))
        if cyclic:
            v.append(f"tree {tid}: cycle detected in child references")
        elif len(seen) != len(bucket):
            v.append(f"tree {tid}: {len(bucket) - len(seen)} nodes unreachable from root")

    if not math.isfinite(artifact.base_score):
        v.append("base_score is not finite")
    for i, w in enumerate(artifact.leaf_weights):
        if not math.isfinite(w):
            v.append(f"leaf_weights[{i}] is not finite")
    return v


def artifact_to_ensemble(artifact: ModelArtifact) -> Ensemble:
    """Rebuild the tree objects; assumes validate() passed."""
    leaf_iter_index = {}
    li = 0
    for i, mode in enumerate(artifact.nodes_modes):
        if mode == MODE_LEAF:
            leaf_iter_index[i] = li
            li += 1

    trees: dict[int, dict[int, int]] = {}
    for i, (tid, nid) in enumerate(zip(artifact.nodes_treeids, artifact.nodes_nodeids)):
        trees.setdefault(tid, {})[nid] = i

    built = []
    for tid in sorted(trees):
        bucket = trees[tid]
        referenced = set()
        for nid, i in bucket.items():
            if artifact.nodes_modes[i] == MODE_BRANCH:
                referenced.add(artifact.nodes_truenodeids[i])
                referenced.add(artifact.nodes_falsenodeids[i])
        (root_nid,) = [nid for nid in bucket if nid not in referenced]

        leaf_count = 0

        def build(nid: int) -> TreeNode:
            nonlocal leaf_count
            i = bucket[nid]
            if artifact.nodes_modes[i] == MODE_LEAF:
                leaf_count += 1
                return Leaf(artifact.leaf_weights[leaf_iter_index[i]])
            return Branch(
                artifact.nodes_featureids[i],
                artifact.nodes_values[i],
                build(artifact.nodes_truenodeids[i]),
                build(artifact.nodes_falsenodeids[i]),
            )

        built.append(RegressionTree(build(root_nid), leaf_count))

    target = artifact.metadata.get("target", "active")
    if target not in ("active", "reactive"):
        target = "active"
    return Ensemble(artifact.base_score, tuple(built),
                    artifact.input_shape[1], target)


def import_model(source) -> tuple[Ensemble, dict]:
    """Load an artifact from text, bytes, or a file path."""
    if isinstance(source, (str, bytes)) and not str(source).lstrip().startswith("{"):
        with open(source, "r", encoding="utf-8") as fh:
            source = fh.read()
    artifact = parse_artifact(source)
    violations = validate(artifact)
    if violations:
        raise ArtifactValidationError(violations)
    return artifact_to_ensemble(artifact), dict(artifact.metadata)


def save_model(ensemble: Ensemble, path, metadata: dict | None = None) -> ModelArtifact:
    artifact = export_model(ensemble, metadata)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_canonical_text(artifact))
    return artifact


def load_artifact(path) -> ModelArtifact:
    with open(path, "r", encoding="utf-8") as fh:
        artifact = parse_artifact(fh.read())
    violations = validate(artifact)
    if violations:
        raise ArtifactValidationError(violations)
    return artifact
