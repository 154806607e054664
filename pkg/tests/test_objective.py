"""Objectives: synthetic kinds, caching, external-process protocol."""

import json
import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from prunequbo.errors import DimensionError, EvaluationError
from prunequbo.objective import (ExternalObjective, ExternalSession,
                                 QuboEnergyObjective, SeparableObjective, evaluate,
                                 evaluate_external, penalized_score)
from prunequbo.problem import PruningMask, synth_problem
from prunequbo.qubo import CoefficientSet, assemble_qubo, energy


def mask_of(bits):
    return PruningMask(np.array(bits, dtype=np.int8))


def write_script(path, body):
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return [sys.executable, str(path)]


ECHO_FIXED = """
    import json, sys
    for line in sys.stdin:
        req = json.loads(line)
        if req.get("op") == "hello":
            print(json.dumps({"ok": True, "n": req["n"]}), flush=True)
            continue
        print(json.dumps({"id": req["id"], "score": 1.25}), flush=True)
"""

MALFORMED = """
    import sys
    sys.stdin.readline()
    print("not json at all", flush=True)
"""

SESSION_NEG_HAMMING = """
    import json, sys
    target = None
    for line in sys.stdin:
        req = json.loads(line)
        if req.get("op") == "hello":
            n = req["n"]
            target = [(7 * i + 3) % 2 for i in range(n)]
            print(json.dumps({"ok": True, "n": n}), flush=True)
            continue
        mask = req["mask"]
        score = -sum(a != b for a, b in zip(mask, target))
        print(json.dumps({"id": req["id"], "score": float(score)}), flush=True)
"""


class TestSyntheticObjectives:
    def test_separable_unit_weights_counts_bits(self):
        handle = SeparableObjective(np.ones(6))
        assert evaluate(handle, mask_of([1, 0, 1, 1, 0, 0])) == 3.0

    def test_qubo_energy_negated(self):
        problem = synth_problem(8, 2, seed=0)
        q = assemble_qubo(problem, CoefficientSet(gamma=1.0), "hybrid")
        handle = QuboEnergyObjective(q)
        mask = mask_of([1, 0, 0, 1, 0, 1, 0, 0])
        assert evaluate(handle, mask) == -energy(q, mask)

    def test_cache_hit_marked_and_counted_once(self):
        handle = SeparableObjective(np.ones(4))
        mask = mask_of([1, 1, 0, 0])
        first = handle.record(mask, k_target=2, lambda_card=10.0)
        second = handle.record(mask, k_target=2, lambda_card=10.0)
        assert first.source == "fresh"
        assert second.source == "cache"
        assert first.raw_metric == second.raw_metric
        assert handle.fresh_evaluations == 1

    def test_dimension_check(self):
        handle = SeparableObjective(np.ones(4))
        with pytest.raises(DimensionError):
            evaluate(handle, mask_of([1, 0]))

    def test_penalty_zero_on_target(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            raw = float(rng.normal())
            card = int(rng.integers(0, 10))
            assert penalized_score(raw, card, card, 10.0) == raw

    def test_penalty_formula(self):
        rec = SeparableObjective(np.ones(4)).record(mask_of([1, 1, 1, 0]), 1, 2.5)
        assert rec.penalized == rec.raw_metric - 2.5 * abs(3 - 1)


class TestCachePersistence:
    def test_round_trip_suppresses_fresh_evaluations(self, tmp_path):
        handle = SeparableObjective(np.arange(1.0, 6.0))
        rng = np.random.default_rng(1)
        masks = [PruningMask(rng.integers(0, 2, 5).astype(np.int8)) for _ in range(12)]
        values = [handle.evaluate(m) for m in masks]
        cache_path = tmp_path / "cache.jsonl"
        handle.save_cache(cache_path)

        fresh = SeparableObjective(np.arange(1.0, 6.0))
        fresh.load_cache(cache_path)
        for mask, value in zip(masks, values):
            assert fresh.evaluate(mask) == value
        assert fresh.fresh_evaluations == 0


class TestExternalProtocol:
    def test_one_shot_fixed_score(self, tmp_path):
        cmd = write_script(tmp_path / "echo.py", ECHO_FIXED)
        assert evaluate_external(cmd, mask_of([0, 1, 0])) == 1.25

    def test_malformed_reply_names_parse_failure(self, tmp_path):
        cmd = write_script(tmp_path / "bad.py", MALFORMED)
        with pytest.raises(EvaluationError, match="malformed"):
            evaluate_external(cmd, mask_of([0, 1]))

    def test_missing_command_is_evaluation_error(self):
        with pytest.raises(EvaluationError):
            evaluate_external(["/nonexistent/evaluator"], mask_of([0, 1]))

    def test_session_handshake_and_eval(self, tmp_path):
        cmd = write_script(tmp_path / "session.py", SESSION_NEG_HAMMING)
        session = ExternalSession(cmd, n=6)
        try:
            target = [(7 * i + 3) % 2 for i in range(6)]
            score = session.evaluate_bits(np.array(target, dtype=np.int8))
            assert score == 0.0
            score = session.evaluate_bits(np.zeros(6, dtype=np.int8))
            assert score == -float(sum(target))
        finally:
            session.close()

    def test_session_wrong_n_rejected(self, tmp_path):
        body = """
            import json, sys
            line = sys.stdin.readline()
            req = json.loads(line)
            print(json.dumps({"ok": True, "n": req["n"] + 1}), flush=True)
        """
        cmd = write_script(tmp_path / "wrong_n.py", body)
        with pytest.raises(EvaluationError, match="handshake"):
            ExternalSession(cmd, n=4)

    def test_external_objective_caches(self, tmp_path):
        cmd = write_script(tmp_path / "echo.py", ECHO_FIXED)
        handle = ExternalObjective(cmd, n=3, mode="session")
        try:
            mask = mask_of([1, 0, 1])
            assert handle.evaluate(mask) == 1.25
            assert handle.evaluate(mask) == 1.25
            assert handle.fresh_evaluations == 1
        finally:
            handle.close()

    def test_golden_transcript(self):
        # Wire format is pinned byte-for-byte.
        from prunequbo.objective import _request_line
        assert _request_line(np.array([0, 1, 1], dtype=np.int8), 7) == \
            '{"op":"eval","mask":[0,1,1],"id":7}'
        assert json.dumps({"op": "hello", "n": 5}, separators=(",", ":")) == \
            '{"op":"hello","n":5}'
        from prunequbo.objective import _parse_reply
        assert _parse_reply('{"id":7,"score":1.25}', 7) == 1.25
        with pytest.raises(EvaluationError, match="boom"):
            _parse_reply('{"id":7,"error":"boom"}', 7)
        with pytest.raises(EvaluationError, match="id"):
            _parse_reply('{"id":8,"score":1.0}', 7)
