"""Exact-cardinality enforcement via binary search on the capacity coefficient.

Raising gamma uniformly strengthens the incentive to prune, so the number
of pruned filters grows with it in the aggregate. The search brackets a
gamma whose annealed solution prunes at least K filters by doubling, then
bisects; a greedy repair step guarantees the returned mask always carries
exactly K set bits even when no gamma hits K head-on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .anneal import AnnealConfig, SolveResult, anneal
from .errors import ArgumentError, BracketError
from .problem import PruningMask, PruningProblem, cardinality
from .qubo import CoefficientSet, QuboMatrix, assemble_qubo, with_gamma

MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class CapacitySearchConfig:
    k_target: int
    gamma_lo: float = 0.0
    gamma_hi: float = 1.0
    tol: float = 1e-12
    max_iters: int = 20
    reads_search: int = 15
    reads_final: int = 100

    def __post_init__(self):
        if self.tol <= 0:
            raise ArgumentError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ArgumentError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.gamma_lo < 0:
            raise ArgumentError(f"gamma_lo must be >= 0, got {self.gamma_lo}")
        if not (self.gamma_hi > self.gamma_lo):
            raise ArgumentError("gamma_hi must exceed gamma_lo")


def repair_mask(q: QuboMatrix, mask: PruningMask, k_target: int) -> PruningMask:
    """Greedy cardinality repair: flip the bit with the smallest energy delta.

    While the mask prunes too many filters, clear the set bit whose
    clearing changes the energy least (most negative delta first); while
    too few, set the cheapest unset bit. Ties go to the lowest index.
    """
    n = q.n
    bits = mask.bits.astype(np.int8).copy()
    coup = q.coupling()
    field = coup @ bits.astype(np.float64)
    card = int(bits.sum())
    while card != k_target:
        sign = 1.0 - 2.0 * bits.astype(np.float64)
        deltas = sign * (q.diag + field)
        if card > k_target:
            candidates = bits == 1
        else:
            candidates = bits == 0
        deltas = np.where(candidates, deltas, math.inf)
        i = int(np.argmin(deltas))
        field += sign[i] * coup[:, i]
        bits[i] = 1 - bits[i]
        card += 1 if bits[i] else -1
    return PruningMask(bits)


def solve_with_cardinality(problem: PruningProblem, coeffs: CoefficientSet, variant: str,
                           config: CapacitySearchConfig, anneal_cfg: AnnealConfig,
                           trace: Optional[Callable[[dict], None]] = None):
    """Solve the QUBO under the exact constraint sum(p) = k_target.

    Returns (mask, gamma_final, final SolveResult); the mask always has
    cardinality exactly k_target. Raises BracketError when 60 doublings of
    gamma never reach k_target pruned filters.
    """
    n = problem.n
    k = config.k_target
    if not (1 <= k <= n - 1):
        raise ArgumentError(f"k_target must lie in [1, {n - 1}], got {k}")

    base = assemble_qubo(problem, replace(coeffs, gamma=config.gamma_lo), variant)
    search_cfg = replace(anneal_cfg, num_reads=config.reads_search)

    def emit(phase: str, iteration: int, lo: float, mid: float, hi: float,
             card: int, e: float):
        if trace is not None:
            trace({"phase": phase, "iteration": iteration, "gamma_lo": lo,
                   "gamma_mid": mid, "gamma_hi": hi, "cardinality": card, "energy": e})

    def probe(gamma: float) -> tuple[int, SolveResult]:
        res = anneal(with_gamma(base, gamma), search_cfg)
        return cardinality(res.best_mask), res

    # Track the probed gamma whose cardinality came closest to K.
    best_gap = None
    accepted = None

    def consider(gamma: float, card: int):
        nonlocal best_gap, accepted
        gap = abs(card - k)
        if best_gap is None or gap < best_gap:
            best_gap = gap
            accepted = gamma

    lo = config.gamma_lo
    card_lo, res_lo = probe(lo)
    emit("bracket", 0, lo, lo, lo, card_lo, res_lo.best_energy)
    consider(lo, card_lo)

    hi = max(config.gamma_hi, 1.0)
    if card_lo < k:
        bracketed = False
        for d in range(MAX_DOUBLINGS):
            card_hi, res_hi = probe(hi)
            emit("bracket", d + 1, lo, hi, hi, card_hi, res_hi.best_energy)
            consider(hi, card_hi)
            if card_hi >= k:
                bracketed = True
                break
            hi *= 2.0
        if not bracketed:
            raise BracketError(
                f"no gamma <= {hi} prunes >= {k} filters after {MAX_DOUBLINGS} doublings "
                f"(last bracket [{lo}, {hi}])")

        if best_gap != 0:
            for it in range(config.max_iters):
                if hi - lo < config.tol:
                    break
                mid = 0.5 * (lo + hi)
                card_mid, res_mid = probe(mid)
                emit("bisect", it, lo, mid, hi, card_mid, res_mid.best_energy)
                consider(mid, card_mid)
                if card_mid == k:
                    break
                if card_mid < k:
                    lo = mid
                else:
                    hi = mid

    gamma_final = accepted
    final = anneal(with_gamma(base, gamma_final), replace(anneal_cfg, num_reads=config.reads_final))
    mask = final.best_mask
    card_final = cardinality(mask)
    emit("final", 0, gamma_final, gamma_final, gamma_final, card_final, final.best_energy)
    if card_final != k:
        mask = repair_mask(with_gamma(base, gamma_final), mask, k)
    return mask, gamma_final, final
