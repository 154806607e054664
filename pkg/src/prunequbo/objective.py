"""Black-box mask objectives behind one caching interface.

Synthetic objectives (separable weights, negated QUBO energy) serve tests
and surrogate scoring; the external kind bridges to evaluator processes
over a line-delimited JSON protocol, either one process per evaluation or
a persistent session (handshake {"op":"hello","n":N}) for evaluators with
expensive startup. All handles maximize; evaluations are cached by exact
bit pattern, and cache hits never count against a refinement budget.
"""

from __future__ import annotations

import json
import select
import shlex
import subprocess
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ArgumentError, DimensionError, EvaluationError
from .problem import PruningMask, cardinality
from .qubo import QuboMatrix, energy

DEFAULT_TIMEOUT = 600.0


@dataclass(frozen=True)
class EvalRecord:
    """One evaluation: raw metric, its penalized value, and where it came from."""

    bits: str
    raw_metric: float
    penalized: float
    source: str  # "fresh" or "cache"


def penalized_score(raw: float, card: int, k_target: int, lambda_card: float) -> float:
    """raw - lambda * |cardinality - K|; equals raw exactly on-target."""
    return raw - lambda_card * abs(card - k_target)


class ObjectiveHandle:
    """Deterministic mask objective with an exact-bit-pattern cache."""

    kind = "abstract"

    def __init__(self, n: int):
        self.n = int(n)
        self._cache: dict[bytes, float] = {}
        self.fresh_evaluations = 0

    def _compute(self, mask: PruningMask) -> float:
        raise NotImplementedError

    def _check(self, mask: PruningMask):
        if len(mask) != self.n:
            raise DimensionError(f"mask length {len(mask)} does not match objective N {self.n}")

    def lookup(self, mask: PruningMask) -> Optional[float]:
        self._check(mask)
        return self._cache.get(mask.key())

    def evaluate(self, mask: PruningMask) -> float:
        self._check(mask)
        key = mask.key()
        if key in self._cache:
            return self._cache[key]
        value = float(self._compute(mask))
        self._cache[key] = value
        self.fresh_evaluations += 1
        return value

    def record(self, mask: PruningMask, k_target: int, lambda_card: float) -> EvalRecord:
        source = "cache" if mask.key() in self._cache else "fresh"
        raw = self.evaluate(mask)
        return EvalRecord(bits=mask.to01(), raw_metric=raw,
                          penalized=penalized_score(raw, cardinality(mask), k_target, lambda_card),
                          source=source)

    def save_cache(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in sorted(self._cache.items()):
                bits = "".join(str(b) for b in np.frombuffer(key, dtype=np.int8))
                fh.write(json.dumps({"mask": bits, "score": value}) + "\n")

    def load_cache(self, path) -> int:
        count = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                key = PruningMask.from01(obj["mask"]).key()
                self._cache[key] = float(obj["score"])
                count += 1
        return count

    def close(self):
        pass


def evaluate(handle: ObjectiveHandle, mask: PruningMask) -> float:
    """Dispatch an evaluation through the handle's cache."""
    return handle.evaluate(mask)


class SeparableObjective(ObjectiveHandle):
    """raw(p) = sum_i w_i p_i; with unit weights this counts the pruned filters."""

    kind = "synthetic_separable"

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        super().__init__(w.size)
        self.weights = w

    def _compute(self, mask: PruningMask) -> float:
        return float(self.weights @ mask.bits)


class QuboEnergyObjective(ObjectiveHandle):
    """raw(p) = -energy(Q, p); maximizing it minimizes the QUBO energy."""

    kind = "synthetic_qubo_energy"

    def __init__(self, q: QuboMatrix):
        super().__init__(q.n)
        self.q = q

    def _compute(self, mask: PruningMask) -> float:
        return -energy(self.q, mask)


class CallableObjective(ObjectiveHandle):
    """Wrap any deterministic function of a mask (test planted objectives)."""

    kind = "synthetic_callable"

    def __init__(self, n: int, fn):
        super().__init__(n)
        self._fn = fn

    def _compute(self, mask: PruningMask) -> float:
        return float(self._fn(mask))


def _request_line(mask_bits, req_id: int) -> str:
    return json.dumps({"op": "eval", "mask": [int(b) for b in mask_bits], "id": req_id},
                      separators=(",", ":"))


def _parse_reply(line: str, req_id: int) -> float:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"malformed evaluator reply {line!r}: {exc}") from exc
    if not isinstance(obj, dict):
        raise EvaluationError(f"malformed evaluator reply {line!r}: not an object")
    if obj.get("error") is not None:
        raise EvaluationError(f"evaluator error: {obj['error']}")
    if obj.get("id") != req_id:
        raise EvaluationError(f"evaluator reply id {obj.get('id')!r} does not match request {req_id}")
    try:
        return float(obj["score"])
    except (KeyError, TypeError, ValueError) as exc:
        raise EvaluationError(f"malformed evaluator reply {line!r}: {exc}") from exc


def evaluate_external(command, mask: PruningMask, timeout: float = DEFAULT_TIMEOUT) -> float:
    """One-shot external evaluation: spawn, write one request, read one reply."""
    if isinstance(command, str):
        command = shlex.split(command)
    line = _request_line(mask.bits, 0)
    try:
        proc = subprocess.run(command, input=line + "\n", capture_output=True,
                              text=True, timeout=timeout)
    except OSError as exc:
        raise EvaluationError(f"cannot run evaluator {command!r}: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise EvaluationError(f"evaluator timed out after {timeout}s") from exc
    if proc.returncode != 0:
        raise EvaluationError(
            f"evaluator exited with {proc.returncode}: {proc.stderr.strip()}")
    reply = proc.stdout.splitlines()
    if not reply:
        raise EvaluationError(f"evaluator produced no reply; stderr: {proc.stderr.strip()}")
    return _parse_reply(reply[0], 0)


class ExternalSession:
    """Persistent evaluator process speaking the line protocol."""

    def __init__(self, command, n: int, timeout: float = DEFAULT_TIMEOUT):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.n = int(n)
        self.timeout = timeout
        self._next_id = 0
        try:
            self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                         stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                         text=True, bufsize=1)
        except OSError as exc:
            raise EvaluationError(f"cannot start evaluator {self.command!r}: {exc}") from exc
        hello = json.dumps({"op": "hello", "n": self.n}, separators=(",", ":"))
        reply = self._roundtrip(hello)
        try:
            obj = json.loads(reply)
        except json.JSONDecodeError as exc:
            self.close()
            raise EvaluationError(f"malformed handshake reply {reply!r}") from exc
        if not (isinstance(obj, dict) and obj.get("ok") is True and obj.get("n") == self.n):
            self.close()
            raise EvaluationError(f"handshake rejected: {reply.strip()!r}")

    def _stderr_tail(self) -> str:
        try:
            if self.proc.poll() is not None and self.proc.stderr is not None:
                return self.proc.stderr.read().strip()
        except (OSError, ValueError):
            pass
        return ""

    def _roundtrip(self, line: str) -> str:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise EvaluationError(
                f"evaluator pipe broken: {exc}; stderr: {self._stderr_tail()}") from exc
        deadline = time.monotonic() + self.timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise EvaluationError(f"evaluator timed out after {self.timeout}s")
            ready, _, _ = select.select([self.proc.stdout], [], [], remaining)
            if ready:
                reply = self.proc.stdout.readline()
                if reply == "":
                    raise EvaluationError(
                        f"evaluator closed its output; stderr: {self._stderr_tail()}")
                return reply

    def evaluate_bits(self, bits) -> float:
        req_id = self._next_id
        self._next_id += 1
        return _parse_reply(self._roundtrip(_request_line(bits, req_id)), req_id)

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except (OSError, ValueError):
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class ExternalObjective(ObjectiveHandle):
    """External-command objective; session mode amortizes process startup."""

    kind = "external_command"

    def __init__(self, command, n: int, mode: str = "oneshot",
                 timeout: float = DEFAULT_TIMEOUT):
        if mode not in ("oneshot", "session"):
            raise ArgumentError(f"mode must be 'oneshot' or 'session', got {mode!r}")
        super().__init__(n)
        self.command = command
        self.mode = mode
        self.timeout = timeout
        self._session: Optional[ExternalSession] = None

    def _compute(self, mask: PruningMask) -> float:
        if self.mode == "oneshot":
            return evaluate_external(self.command, mask, self.timeout)
        if self._session is None:
            self._session = ExternalSession(self.command, self.n, self.timeout)
        return self._session.evaluate_bits(mask.bits)

    def close(self):
        if self._session is not None:
            self._session.close()
            self._session = None
