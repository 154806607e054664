"""Problem model: validation, file round-trips, synthetic generation."""

import json

import numpy as np
import pytest

from prunequbo.errors import ArgumentError, ParseError, ValidationError
from prunequbo.problem import (FilterRecord, PruningMask, PruningProblem,
                               SimilarityBlock, cardinality, load_problem,
                               save_problem, synth_problem, validate_problem)


def write_doc(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


MINIMAL = {
    "version": 1,
    "filters": [
        {"id": 0, "layer": 0, "param_count": 3, "l1": 0.5, "taylor": 1.0},
        {"id": 1, "layer": 0, "param_count": 3, "l1": 0.25, "taylor": 2e-3},
    ],
    "similarity": [],
    "metadata": {},
}


class TestLoadProblem:
    def test_minimal_two_filters(self, tmp_path):
        path = tmp_path / "p.json"
        write_doc(path, MINIMAL)
        problem = load_problem(path)
        assert problem.n == 2
        assert problem.filters[1].taylor_score == 2e-3

    def test_scientific_notation_accepted(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["filters"][0]["l1"] = 1.5e-7
        path = tmp_path / "p.json"
        write_doc(path, doc)
        assert load_problem(path).filters[0].l1_score == 1.5e-7

    def test_duplicate_id_names_the_id(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["filters"][1]["id"] = 0
        path = tmp_path / "p.json"
        write_doc(path, doc)
        with pytest.raises(ValidationError, match="id"):
            load_problem(path)

    def test_negative_score_names_field_and_index(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["filters"][1]["taylor"] = -1.0
        path = tmp_path / "p.json"
        write_doc(path, doc)
        with pytest.raises(ValidationError, match=r"filters\[1\].taylor_score"):
            load_problem(path)

    def test_zero_param_count_rejected(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["filters"][0]["param_count"] = 0
        path = tmp_path / "p.json"
        write_doc(path, doc)
        with pytest.raises(ValidationError, match=r"filters\[0\].param_count"):
            load_problem(path)

    def test_malformed_json_is_parse_error(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_problem(path)

    def test_missing_file_is_parse_error(self, tmp_path):
        with pytest.raises(ParseError):
            load_problem(tmp_path / "absent.json")

    def test_wrong_version_rejected(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["version"] = 2
        path = tmp_path / "p.json"
        write_doc(path, doc)
        with pytest.raises(ParseError, match="version"):
            load_problem(path)

    def test_single_filter_rejected(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["filters"] = doc["filters"][:1]
        path = tmp_path / "p.json"
        write_doc(path, doc)
        with pytest.raises(ValidationError, match="at least 2"):
            load_problem(path)

    def test_similarity_block_size_mismatch(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["similarity"] = [{"layer": 0, "matrix": [[1.0]]}]
        path = tmp_path / "p.json"
        write_doc(path, doc)
        with pytest.raises(ValidationError, match="similarity"):
            load_problem(path)

    def test_round_trip_is_identity(self, tmp_path):
        problem = synth_problem(64, 5, seed=17)
        path = tmp_path / "p.json"
        save_problem(problem, path)
        loaded = load_problem(path)
        assert loaded.n == problem.n
        for a, b in zip(loaded.filters, problem.filters):
            assert a == b
        assert len(loaded.similarity) == len(problem.similarity)
        for a, b in zip(loaded.similarity, problem.similarity):
            assert a.layer == b.layer
            np.testing.assert_array_equal(a.matrix, b.matrix)
        assert loaded.metadata == problem.metadata


class TestSynthProblem:
    def test_two_filter_block_is_symmetric(self):
        problem = synth_problem(2, 1, seed=0)
        block = problem.similarity[0]
        assert block.matrix.shape == (2, 2)
        assert block.matrix[0, 1] == block.matrix[1, 0]

    def test_deterministic(self):
        a = synth_problem(16, 4, seed=7)
        b = synth_problem(16, 4, seed=7)
        assert a.filters == b.filters
        for ba, bb in zip(a.similarity, b.similarity):
            np.testing.assert_array_equal(ba.matrix, bb.matrix)

    def test_blocks_are_correlation_matrices(self):
        problem = synth_problem(16, 4, seed=7)
        for block in problem.similarity:
            m = block.matrix
            np.testing.assert_allclose(np.diag(m), 1.0, atol=1e-12)
            assert np.all(np.abs(m) <= 1.0 + 1e-12)
            # PSD by Gram construction; eigvalsh is the oracle.
            assert np.linalg.eigvalsh(m).min() >= -1e-8

    def test_blocks_psd_over_seed_sweep(self):
        for seed in range(100):
            problem = synth_problem(12, 3, seed=seed)
            for block in problem.similarity:
                assert np.linalg.eigvalsh(block.matrix).min() >= -1e-8

    def test_too_few_filters(self):
        with pytest.raises(ArgumentError):
            synth_problem(1, 1, seed=0)

    def test_more_layers_than_filters(self):
        with pytest.raises(ArgumentError):
            synth_problem(3, 4, seed=0)


class TestPruningMask:
    def test_cardinality_zero(self):
        assert cardinality(PruningMask(np.zeros(8, dtype=np.int8))) == 0

    def test_cardinality_full(self):
        assert cardinality(PruningMask(np.ones(8, dtype=np.int8))) == 8

    def test_cardinality_mixed(self):
        assert cardinality(PruningMask(np.array([1, 0, 1, 1, 0]))) == 3

    def test_bit_string_round_trip(self):
        mask = PruningMask(np.array([1, 0, 1, 1, 0]))
        assert PruningMask.from01(mask.to01()) == mask

    def test_rejects_non_binary(self):
        with pytest.raises(ArgumentError):
            PruningMask(np.array([0, 2, 1]))

    def test_immutable(self):
        mask = PruningMask(np.array([1, 0]))
        with pytest.raises(ValueError):
            mask.bits[0] = 0


class TestValidateProblem:
    def test_cross_layer_blocks_unique(self):
        filters = (FilterRecord(0, 0, 3, 1.0, 1.0), FilterRecord(1, 0, 3, 1.0, 1.0))
        block = SimilarityBlock(layer=0, matrix=np.eye(2))
        problem = PruningProblem(filters=filters, similarity=(block, block))
        with pytest.raises(ValidationError, match="more than one block"):
            validate_problem(problem)

    def test_asymmetric_block_rejected(self):
        filters = (FilterRecord(0, 0, 3, 1.0, 1.0), FilterRecord(1, 0, 3, 1.0, 1.0))
        bad = np.array([[1.0, 0.5], [0.2, 1.0]])
        problem = PruningProblem(filters=filters,
                                 similarity=(SimilarityBlock(layer=0, matrix=bad),))
        with pytest.raises(ValidationError, match="symmetric"):
            validate_problem(problem)
