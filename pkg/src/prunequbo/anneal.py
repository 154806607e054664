"""Simulated-annealing QUBO sampler with independent reads.

Each read restarts from a uniform-random mask and runs Metropolis sweeps
over a fixed per-sweep random permutation of the variables while the
inverse temperature follows the configured schedule. Reads derive their
random streams from (seed, read index), so results are identical whether
reads run serially or concurrently, and the first r reads of a longer run
coincide with an r-read run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ArgumentError, SizeError
from .problem import PruningMask
from .qubo import QuboMatrix, energy
from .seeding import normalize_seed

SCHEDULES = ("geometric", "linear")

BRUTE_FORCE_LIMIT = 24


@dataclass(frozen=True)
class AnnealConfig:
    num_reads: int = 100
    sweeps_per_read: int = 1000
    beta_start: float = 0.1
    beta_end: float = 10.0
    schedule: str = "geometric"
    seed: int = 123

    def __post_init__(self):
        if self.num_reads < 1:
            raise ArgumentError(f"num_reads must be >= 1, got {self.num_reads}")
        if self.sweeps_per_read < 1:
            raise ArgumentError(f"sweeps_per_read must be >= 1, got {self.sweeps_per_read}")
        if not (self.beta_start > 0):
            raise ArgumentError(f"beta_start must be > 0, got {self.beta_start}")
        if not (self.beta_end > self.beta_start):
            raise ArgumentError("beta_end must exceed beta_start")
        if self.schedule not in SCHEDULES:
            raise ArgumentError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")


@dataclass
class SolveResult:
    best_mask: PruningMask
    best_energy: float
    per_read_energies: np.ndarray
    flips_evaluated: int


def beta_schedule(config: AnnealConfig) -> np.ndarray:
    """Per-sweep inverse temperatures from beta_start to beta_end."""
    s = config.sweeps_per_read
    if s == 1:
        return np.array([config.beta_start])
    t = np.arange(s) / (s - 1)
    if config.schedule == "geometric":
        return config.beta_start * (config.beta_end / config.beta_start) ** t
    return config.beta_start + (config.beta_end - config.beta_start) * t


def _read_rng(seed: int, read: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([normalize_seed(seed), read]))


def anneal(q: QuboMatrix, config: AnnealConfig) -> SolveResult:
    """Best-of-reads Metropolis annealing; deterministic for fixed (q, config)."""
    n = q.n
    coup = q.coupling()
    betas = beta_schedule(config)
    sweeps = config.sweeps_per_read
    per_read = np.empty(config.num_reads)
    best_bits = None
    best_e = math.inf
    for read in range(config.num_reads):
        rng = _read_rng(config.seed, read)
        bits = rng.integers(0, 2, size=n).astype(np.int8)
        perms = np.empty((sweeps, n), dtype=np.int64)
        unifs = np.empty((sweeps, n))
        for s in range(sweeps):
            perms[s] = rng.permutation(n)
            unifs[s] = rng.random(n)
        bf = bits.astype(np.float64)
        field = coup @ bf
        e0 = float(q.diag @ bf + 0.5 * bf @ field)
        read_bits, _ = kernels.sweep_read(q.diag, coup, bits, field, e0, perms, unifs, betas)
        # Recompute exactly so incremental drift cannot leak into the result.
        read_e = energy(q, PruningMask(read_bits))
        per_read[read] = read_e
        if read_e < best_e:
            best_e = read_e
            best_bits = read_bits
    return SolveResult(best_mask=PruningMask(best_bits), best_energy=best_e,
                       per_read_energies=per_read,
                       flips_evaluated=config.num_reads * sweeps * n)


def brute_force(q: QuboMatrix) -> SolveResult:
    """Exact minimum by enumeration; ties go to the lexicographically smallest mask."""
    n = q.n
    if n > BRUTE_FORCE_LIMIT:
        raise SizeError(f"brute_force supports N <= {BRUTE_FORCE_LIMIT}, got {n}")
    total = 1 << n
    chunk = min(total, 1 << 16)
    # MSB-first bit layout makes integer order equal lexicographic mask order,
    # so the first strict minimum is the lexicographically smallest one.
    shifts = (n - 1 - np.arange(n)).astype(np.uint32)
    best_e = math.inf
    best_k = 0
    for start in range(0, total, chunk):
        ks = np.arange(start, min(start + chunk, total), dtype=np.uint32)
        P = ((ks[:, None] >> shifts[None, :]) & 1).astype(np.float64)
        E = P @ q.diag + np.einsum("bi,bi->b", P @ q.upper, P)
        i = int(np.argmin(E))
        if E[i] < best_e:
            best_e = float(E[i])
            best_k = int(ks[i])
    bits = ((best_k >> shifts) & 1).astype(np.int8)
    return SolveResult(best_mask=PruningMask(bits), best_energy=best_e,
                       per_read_energies=np.array([best_e]), flips_evaluated=total)
