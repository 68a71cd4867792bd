import dataclasses

import numpy as np
import pytest

from pvboost.errors import ArtifactValidationError, FormatParseError
from pvboost.gbdt import Branch, Ensemble, Leaf, RegressionTree, predict
from pvboost.model_format import (
    MODE_BRANCH,
    MODE_LEAF,
    ModelArtifact,
    artifact_to_ensemble,
    export_model,
    import_model,
    parse_artifact,
    to_canonical_text,
    validate,
)


def random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        return Leaf(float(rng.normal())), 1
    left, nl = random_tree(rng, depth - 1)
    right, nr = random_tree(rng, depth - 1)
    node = Branch(int(rng.integers(0, 12)), float(rng.normal()), left, right)
    return node, nl + nr


def random_ensemble(seed, n_trees=5, depth=4):
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        root, leaves = random_tree(rng, depth)
        trees.append(RegressionTree(root, leaves))
    return Ensemble(float(rng.normal()), tuple(trees), 12)


class TestExport:
    def test_single_leaf(self):
        e = Ensemble(0.0, (RegressionTree(Leaf(1.5), 1),), 12)
        art = export_model(e)
        assert art.nodes_modes == (MODE_LEAF,)
        assert art.leaf_weights == (1.5,)
        assert art.nodes_values == (0.0,)
        assert art.input_shape == (1, 12)

    def test_three_node_tree_breadth_first(self):
        tree = RegressionTree(Branch(0, 2.5, Leaf(1.0), Leaf(-2.0)), 2)
        art = export_model(Ensemble(0.0, (tree,), 12))
        assert art.nodes_modes == (MODE_BRANCH, MODE_LEAF, MODE_LEAF)
        assert art.nodes_values == (2.5, 0.0, 0.0)
        assert art.nodes_nodeids == (0, 1, 2)
        assert art.nodes_truenodeids[0] == 1
        assert art.nodes_falsenodeids[0] == 2
        assert art.leaf_weights == (1.0, -2.0)

    def test_export_always_validates(self):
        for seed in range(10):
            art = export_model(random_ensemble(seed))
            assert validate(art) == []

    def test_input_output_names(self):
        art = export_model(random_ensemble(0))
        assert art.input_name == "float_input"
        assert art.output_name == "variable"


class TestRoundTrip:
    def test_prediction_identity(self):
        rng = np.random.default_rng(42)
        for seed in range(5):
            e = random_ensemble(seed)
            text = to_canonical_text(export_model(e, {"target": "active"}))
            e2, _ = import_model(text)
            for _ in range(100):
                x = rng.normal(size=12).tolist()
                assert predict(e, x) == predict(e2, x)

    def test_canonical_bytes_deterministic(self):
        e = random_ensemble(7)
        meta = {"inverter_id": 1, "target": "active", "capacity": 10.0,
                "training_seed": 3, "created_at": "2024-06-01T00:00:00+00:00"}
        a = to_canonical_text(export_model(e, meta))
        b = to_canonical_text(export_model(e, dict(meta)))
        assert a == b

    def test_double_round_trip_byte_identical(self):
        e = random_ensemble(9)
        text = to_canonical_text(export_model(e, {"target": "active"}))
        e2, meta = import_model(text)
        assert to_canonical_text(export_model(e2, meta)) == text

    def test_full_precision_floats_survive(self):
        w = 9.4432897567749  # value with no short decimal form
        e = Ensemble(0.0, (RegressionTree(Leaf(w), 1),), 12)
        e2, _ = import_model(to_canonical_text(export_model(e)))
        assert e2.trees[0].root.weight == w


class TestParse:
    def test_parse_error_has_offset(self):
        with pytest.raises(FormatParseError) as exc:
            parse_artifact('{"format_version": }')
        assert exc.value.offset > 0

    def test_missing_field(self):
        with pytest.raises(FormatParseError, match="missing field"):
            parse_artifact('{"format_version":1}')

    def test_nan_rejected(self):
        with pytest.raises(FormatParseError, match="non-finite"):
            parse_artifact('{"base_score": NaN}')
        with pytest.raises(FormatParseError, match="non-finite"):
            parse_artifact('{"base_score": Infinity}')


def valid_artifact():
    return export_model(random_ensemble(3))


class TestValidate:
    def test_well_formed_empty_list(self):
        assert validate(valid_artifact()) == []

    def test_missing_child_named(self):
        art = valid_artifact()
        idx = art.nodes_modes.index(MODE_BRANCH)
        tids = list(art.nodes_truenodeids)
        tids[idx] = 999
        msgs = validate(dataclasses.replace(art, nodes_truenodeids=tuple(tids)))
        assert any("999" in m for m in msgs)

    def test_feature_id_bound(self):
        art = valid_artifact()
        idx = art.nodes_modes.index(MODE_BRANCH)
        fids = list(art.nodes_featureids)
        fids[idx] = 12
        msgs = validate(dataclasses.replace(art, nodes_featureids=tuple(fids)))
        assert any("feature id 12" in m for m in msgs)

    def test_two_node_cycle(self):
        art = ModelArtifact(
            format_version=1, input_name="float_input", output_name="variable",
            input_shape=(1, 12), base_score=0.0,
            nodes_treeids=(0, 0), nodes_nodeids=(0, 1),
            nodes_featureids=(0, 1), nodes_modes=(MODE_BRANCH, MODE_BRANCH),
            nodes_values=(1.0, 2.0), nodes_truenodeids=(1, 0),
            nodes_falsenodeids=(1, 0), leaf_weights=(),
        )
        msgs = validate(art)
        assert msgs  # root/cycle/multi-parent violations reported
        assert any("root" in m or "cycle" in m or "parents" in m for m in msgs)

    def test_duplicate_node_id(self):
        art = valid_artifact()
        nids = list(art.nodes_nodeids)
        nids[-1] = nids[-2]
        msgs = validate(dataclasses.replace(art, nodes_nodeids=tuple(nids)))
        assert any("duplicate" in m for m in msgs)

    def test_length_mismatch(self):
        art = valid_artifact()
        msgs = validate(dataclasses.replace(art, nodes_values=art.nodes_values[:-1]))
        assert any("length" in m for m in msgs)

    def test_leaf_weight_alignment(self):
        art = valid_artifact()
        msgs = validate(dataclasses.replace(art, leaf_weights=art.leaf_weights + (1.0,)))
        assert any("leaf_weights" in m for m in msgs)

    def test_import_rejects_invalid(self):
        art = valid_artifact()
        idx = art.nodes_modes.index(MODE_BRANCH)
        tids = list(art.nodes_truenodeids)
        tids[idx] = 999
        bad = dataclasses.replace(art, nodes_truenodeids=tuple(tids))
        with pytest.raises(ArtifactValidationError):
            import_model(to_canonical_text(bad))


class TestFuzzedArtifacts:
    def test_validating_mutants_route_safely(self):
        # Mutate valid artifacts; any mutant accepted by validate must
        # predict without crashing on arbitrary finite inputs.
        rng = np.random.default_rng(0)
        art = valid_artifact()
        fields = ("nodes_featureids", "nodes_truenodeids",
                  "nodes_falsenodeids", "nodes_nodeids")
        accepted = 0
        for _ in range(200):
            name = fields[int(rng.integers(len(fields)))]
            values = list(getattr(art, name))
            if not values:
                continue
            values[int(rng.integers(len(values)))] = int(rng.integers(0, 20))
            mutant = dataclasses.replace(art, **{name: tuple(values)})
            if validate(mutant):
                continue
            accepted += 1
            e = artifact_to_ensemble(mutant)
            for _ in range(20):
                x = rng.uniform(-1e3, 1e3, size=12).tolist()
                assert np.isfinite(predict(e, x))
        assert accepted >= 1  # unmutated-equivalent cases at minimum
