"""Random search over the coefficient space.

Coefficients are drawn log-uniformly per dimension (optionally snapping
to exact zero), each trial runs the capacity search for a feasible mask,
and a pluggable evaluator scores the result (higher is better). Failed
trials are kept in the ledger with score -inf so landscape exports show
the feasible region's shape.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .anneal import AnnealConfig
from .capacity import CapacitySearchConfig, solve_with_cardinality
from .errors import ArgumentError, BracketError
from .objective import ObjectiveHandle
from .problem import PruningMask, PruningProblem
from .qubo import CoefficientSet
from .seeding import stream

COEFF_NAMES = ("alpha_t", "alpha_f", "beta_diag", "beta_off", "lambda_sim")
ZERO_PROBABILITY = 0.2
ZERO_SENTINEL = "-inf"


@dataclass(frozen=True)
class SearchSpace:
    """Per-coefficient log-uniform ranges with optional exact-zero mass."""

    alpha_t: tuple = (1e-3, 1e2)
    alpha_f: tuple = (1e-3, 1e2)
    beta_diag: tuple = (1e-3, 1e2)
    beta_off: tuple = (1e-3, 1e2)
    lambda_sim: tuple = (1e-3, 1e2)
    allow_zero: frozenset = frozenset()

    def __post_init__(self):
        for name in COEFF_NAMES:
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ArgumentError(f"{name} range needs 0 < lo <= hi, got ({lo}, {hi})")
        unknown = set(self.allow_zero) - set(COEFF_NAMES)
        if unknown:
            raise ArgumentError(f"allow_zero names unknown coefficients: {sorted(unknown)}")
        object.__setattr__(self, "allow_zero", frozenset(self.allow_zero))


@dataclass
class TrialRecord:
    index: int
    coeffs: CoefficientSet
    mask: Optional[PruningMask]
    gamma_final: Optional[float]
    proxy_score: float
    wall_time: float
    error: Optional[str] = None


def sample_coeffs(space: SearchSpace, rng: np.random.Generator,
                  fisher_kind: str = "none") -> CoefficientSet:
    """Draw one coefficient set; dimensions are sampled in a fixed order."""
    values = {}
    for name in COEFF_NAMES:
        if name == "alpha_f" and fisher_kind == "none":
            values[name] = 0.0
            continue
        if name in space.allow_zero and rng.random() < ZERO_PROBABILITY:
            values[name] = 0.0
            continue
        lo, hi = getattr(space, name)
        values[name] = float(10.0 ** rng.uniform(math.log10(lo), math.log10(hi)))
    return CoefficientSet(fisher_kind=fisher_kind, **values)


def random_search(problem: PruningProblem, variant: str, space: SearchSpace,
                  k_target: int, n_trials: int, evaluator: ObjectiveHandle,
                  seed: int, fisher_kind: str = "none",
                  capacity_cfg: Optional[CapacitySearchConfig] = None,
                  anneal_cfg: Optional[AnnealConfig] = None, workers: int = 1):
    """Sample, solve, and score n_trials coefficient sets.

    Returns (best TrialRecord, full ledger in trial order). Deterministic
    for a fixed seed regardless of `workers` (trials are independent and
    the ledger is assembled by index); BracketError in a trial records
    score -inf instead of aborting the search.
    """
    if n_trials < 1:
        raise ArgumentError(f"n_trials must be >= 1, got {n_trials}")
    if workers < 1:
        raise ArgumentError(f"workers must be >= 1, got {workers}")
    if capacity_cfg is None:
        capacity_cfg = CapacitySearchConfig(k_target=k_target)
    else:
        capacity_cfg = replace(capacity_cfg, k_target=k_target)
    if anneal_cfg is None:
        anneal_cfg = AnnealConfig()

    def run_trial(t: int) -> TrialRecord:
        rng = stream(seed, "hparam-trial", t)
        coeffs = sample_coeffs(space, rng, fisher_kind)
        started = time.perf_counter()
        try:
            mask, gamma_final, _ = solve_with_cardinality(
                problem, coeffs, variant, capacity_cfg, anneal_cfg)
            score = evaluator.evaluate(mask)
            return TrialRecord(index=t, coeffs=coeffs, mask=mask,
                               gamma_final=gamma_final, proxy_score=score,
                               wall_time=time.perf_counter() - started)
        except BracketError as exc:
            return TrialRecord(index=t, coeffs=coeffs, mask=None, gamma_final=None,
                               proxy_score=-math.inf,
                               wall_time=time.perf_counter() - started, error=str(exc))

    if workers == 1:
        trials = [run_trial(t) for t in range(n_trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(run_trial, range(n_trials)))
    best = max(trials, key=lambda r: (r.proxy_score, -r.index))
    return best, trials


def _axis_value(coeffs: CoefficientSet, name: str) -> str:
    v = getattr(coeffs, name)
    if v == 0.0:
        return ZERO_SENTINEL
    return repr(math.log10(v))


def export_landscape(trials: list, axes: tuple, path) -> None:
    """Write (log10 axis1, log10 axis2, score) rows for external plotting.

    Zero-valued coefficients appear as the -inf sentinel; scores round-trip
    exactly through repr.
    """
    if not trials:
        raise ArgumentError("trials must be nonempty")
    a1, a2 = axes
    for name in (a1, a2):
        if name not in COEFF_NAMES:
            raise ArgumentError(f"unknown coefficient axis {name!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("axis1,axis2,score\n")
        for rec in trials:
            fh.write(f"{_axis_value(rec.coeffs, a1)},{_axis_value(rec.coeffs, a2)},"
                     f"{repr(rec.proxy_score)}\n")
