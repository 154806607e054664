"""Tensor-train probabilistic refinement of pruning masks.

A chain of order-3 cores parameterizes an unnormalized distribution over
binary masks as the squared chain product q(p) = g(p)^2; squaring keeps q
nonnegative with smooth gradients and makes marginals tractable through
contractions of the doubled cores. The refinement loop samples candidate
batches, scores them with a cardinality-penalized black-box objective,
and performs adaptive-moment gradient ascent on the elites' log-likelihood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, DimensionError, EvaluationError
from .objective import ObjectiveHandle, penalized_score
from .problem import PruningMask, cardinality
from .seeding import derive_seed, normalize_seed

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LOG_FLOOR = 1e-300


@dataclass
class TtDistribution:
    """Tensor-train cores plus persistent optimizer moments.

    Core i has shape (r_{i-1}, 2, r_i) with boundary ranks 1; the
    unnormalized probability of a mask is the squared scalar chain product
    of the selected slices.
    """

    cores: list
    opt_m: Optional[list] = field(default=None, repr=False)
    opt_v: Optional[list] = field(default=None, repr=False)
    opt_t: int = 0

    @property
    def n(self) -> int:
        return len(self.cores)

    @property
    def rank(self) -> int:
        return max(core.shape[2] for core in self.cores[:-1]) if self.n > 1 else 1

    def copy(self) -> "TtDistribution":
        return TtDistribution(cores=[c.copy() for c in self.cores],
                              opt_m=None if self.opt_m is None else [m.copy() for m in self.opt_m],
                              opt_v=None if self.opt_v is None else [v.copy() for v in self.opt_v],
                              opt_t=self.opt_t)


@dataclass(frozen=True)
class RefineConfig:
    budget: int = 20000
    batch: int = 300
    elites: int = 20
    learn_rate: float = 0.02
    rank: int = 10
    epsilon: float = 0.03
    mutations: int = 15
    seed_inject_iters: int = 10
    lambda_card: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1 or self.elites < 1 or self.elites > self.batch:
            raise ArgumentError("need 1 <= elites <= batch")
        if self.budget < self.batch:
            raise ArgumentError("budget must cover at least one batch")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ArgumentError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.lambda_card < 0:
            raise ArgumentError(f"lambda_card must be >= 0, got {self.lambda_card}")
        if self.mutations < 0:
            raise ArgumentError(f"mutations must be >= 0, got {self.mutations}")


def init_tt(n: int, rank: int, seed: int) -> TtDistribution:
    """Near-uniform start: positive uniform [0.5, 1.5] entries scaled by 1/sqrt(rank)."""
    if n < 2:
        raise ArgumentError(f"n must be >= 2, got {n}")
    if rank < 1:
        raise ArgumentError(f"rank must be >= 1, got {rank}")
    rng = np.random.default_rng(normalize_seed(seed))
    scale = 1.0 / math.sqrt(rank)
    cores = []
    for i in range(n):
        left = 1 if i == 0 else rank
        right = 1 if i == n - 1 else rank
        cores.append(rng.uniform(0.5, 1.5, size=(left, 2, right)) * scale)
    return TtDistribution(cores=cores)


def tt_unnorm_prob(dist: TtDistribution, mask: PruningMask) -> float:
    """q(p) = g(p)^2 with g the scalar chain product of the selected slices."""
    if len(mask) != dist.n:
        raise DimensionError(f"mask length {len(mask)} does not match chain length {dist.n}")
    vec = np.ones(1)
    for core, bit in zip(dist.cores, mask.bits):
        vec = vec @ core[:, int(bit), :]
    return float(vec[0] ** 2)


def right_envs(dist: TtDistribution, rescale: bool = False) -> list:
    """Doubled-core right environments; envs[i] sums positions i..N-1.

    envs[0] is the 1x1 normalization constant Z; every envs[i] is symmetric
    positive semidefinite, which keeps conditional marginals nonnegative.
    With rescale=True each environment is max-normalized independently
    (they only ever enter ratios), so long chains cannot overflow.
    """
    envs = [None] * (dist.n + 1)
    envs[dist.n] = np.ones((1, 1))
    for i in range(dist.n - 1, -1, -1):
        core = dist.cores[i]
        nxt = envs[i + 1]
        acc = np.zeros((core.shape[0], core.shape[0]))
        for x in (0, 1):
            g = core[:, x, :]
            acc += g @ nxt @ g.T
        if rescale:
            scale = float(np.max(np.abs(acc)))
            if scale > 0.0:
                acc = acc / scale
        envs[i] = acc
    return envs


def left_envs(dist: TtDistribution, rescale: bool = False) -> list:
    """Doubled-core left environments; envs[i] sums positions 0..i-1."""
    envs = [None] * (dist.n + 1)
    envs[0] = np.ones((1, 1))
    for i in range(dist.n):
        core = dist.cores[i]
        prev = envs[i]
        acc = np.zeros((core.shape[2], core.shape[2]))
        for x in (0, 1):
            g = core[:, x, :]
            acc += g.T @ prev @ g
        if rescale:
            scale = float(np.max(np.abs(acc)))
            if scale > 0.0:
                acc = acc / scale
        envs[i + 1] = acc
    return envs


def tt_normalizer(dist: TtDistribution) -> float:
    """Z = sum_p q(p), contracted in O(N r^3) instead of 2^N enumeration."""
    return float(right_envs(dist)[0][0, 0])


def sample_tt(dist: TtDistribution, count: int, rng: np.random.Generator,
              epsilon: float = 0.0, envs: Optional[list] = None) -> np.ndarray:
    """Draw masks left-to-right by conditional marginals of the squared chain.

    Per bit, the TT conditional is mixed with a fair coin:
    P_used = (1 - epsilon) * P_tt + epsilon * 0.5.
    Returns an int8 array of shape (count, n).
    """
    if envs is None:
        envs = right_envs(dist, rescale=True)
    n = dist.n
    bits = np.empty((count, n), dtype=np.int8)
    left = np.ones((count, 1))
    for i in range(n):
        core = dist.cores[i]
        env = envs[i + 1]
        u0 = left @ core[:, 0, :]
        u1 = left @ core[:, 1, :]
        w0 = np.maximum(np.einsum("kb,bc,kc->k", u0, env, u0), 0.0)
        w1 = np.maximum(np.einsum("kb,bc,kc->k", u1, env, u1), 0.0)
        tot = w0 + w1
        p1 = np.divide(w1, tot, out=np.full(count, 0.5), where=tot > 0.0)
        p_used = (1.0 - epsilon) * p1 + epsilon * 0.5
        take1 = rng.random(count) < p_used
        bits[:, i] = take1
        left = np.where(take1[:, None], u1, u0)
        # Rescale rows; conditional ratios are scale-invariant and this
        # prevents under/overflow on long chains.
        scale = np.max(np.abs(left), axis=1, keepdims=True)
        np.divide(left, scale, out=left, where=scale > 0.0)
    return bits


def sample_batch(dist: TtDistribution, config: RefineConfig, iteration: int,
                 qubo_seed: PruningMask, rng: np.random.Generator,
                 mutation_base: Optional[PruningMask] = None) -> list:
    """Compose one candidate batch of exactly config.batch masks.

    During the first seed_inject_iters iterations the seed mask itself is
    injected verbatim. Every iteration contributes single-bit mutations of
    the mutation base (the incumbent best; defaults to the seed), and the
    remaining slots are TT samples with epsilon-uniform mixing.
    """
    n = dist.n
    k = config.batch
    special = []
    if iteration < config.seed_inject_iters:
        special.append(qubo_seed)
    base = mutation_base if mutation_base is not None else qubo_seed
    for _ in range(config.mutations):
        if len(special) >= k:
            break
        special.append(base.flipped(int(rng.integers(n))))
    remaining = k - len(special)
    sampled = sample_tt(dist, remaining, rng, config.epsilon) if remaining else \
        np.empty((0, n), dtype=np.int8)
    return special + [PruningMask(row) for row in sampled]


def _chain_vectors(cores: list, bits: np.ndarray):
    """Normalized left/right partial products for one mask.

    Row scales cancel in the log-likelihood gradient, so only directions
    are kept; lefts[i] covers cores [0, i), rights[i] covers (i, N-1].
    """
    n = len(cores)
    lefts = [None] * (n + 1)
    rights = [None] * (n + 1)
    vec = np.ones(1)
    lefts[0] = vec
    for i in range(n):
        vec = vec @ cores[i][:, int(bits[i]), :]
        scale = float(np.max(np.abs(vec)))
        if scale > 0.0:
            vec = vec / scale
        lefts[i + 1] = vec
    vec = np.ones(1)
    rights[n] = vec
    for i in range(n - 1, -1, -1):
        vec = cores[i][:, int(bits[i]), :] @ vec
        scale = float(np.max(np.abs(vec)))
        if scale > 0.0:
            vec = vec / scale
        rights[i] = vec
    return lefts, rights


def loglik_gradient(dist: TtDistribution, elites: list) -> list:
    """Analytic gradient of the elites' log-likelihood sum_e log(q(e)/Z).

    For q = g^2 the per-elite term at position i is
    2 * outer(left, right) / (left @ G_i[x_i] @ right); the shared
    normalization term is 2 * FL_{i-1} G_i[x] E_i / Z per elite, with FL/E
    the doubled left/right environments. All chains and environments are
    rescaled in flight (the expressions are ratios), so long chains stay
    in range.
    """
    grads = [np.zeros_like(core) for core in dist.cores]
    for mask in elites:
        bits = mask.bits
        lefts, rights = _chain_vectors(dist.cores, bits)
        for i, core in enumerate(dist.cores):
            x = int(bits[i])
            l, r = lefts[i], rights[i + 1]
            ghat = float(l @ core[:, x, :] @ r)
            if ghat == 0.0:
                ghat = LOG_FLOOR
            grads[i][:, x, :] += 2.0 * np.outer(l, r) / ghat
    fl = left_envs(dist, rescale=True)
    er = right_envs(dist, rescale=True)
    count = float(len(elites))
    for i, core in enumerate(dist.cores):
        half = [fl[i] @ core[:, x, :] @ er[i + 1] for x in (0, 1)]
        z_i = sum(float(np.einsum("ab,ab->", h, core[:, x, :]))
                  for x, h in enumerate(half))
        if z_i <= 0.0:
            continue
        for x in (0, 1):
            grads[i][:, x, :] -= count * 2.0 * half[x] / z_i
    return grads


def update_elites(dist: TtDistribution, elites: list, learn_rate: float) -> TtDistribution:
    """One adaptive-moment ascent step on the elites' log-likelihood.

    The objective is the normalized likelihood sum_e log(q(e)/Z); without
    the Z term the ascent direction is dominated by pure core rescaling,
    which changes no probabilities and stalls concentration on long
    chains. Moment state persists on the distribution across calls within
    a run.
    """
    if not elites:
        raise ArgumentError("elites must be nonempty")
    grads = loglik_gradient(dist, elites)
    if dist.opt_m is None:
        dist.opt_m = [np.zeros_like(c) for c in dist.cores]
        dist.opt_v = [np.zeros_like(c) for c in dist.cores]
    dist.opt_t += 1
    t = dist.opt_t
    for core, g, m, v in zip(dist.cores, grads, dist.opt_m, dist.opt_v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        core += learn_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return dist


def save_checkpoint(path, dist: TtDistribution, rng: np.random.Generator,
                    iteration: int, used: int, best_bits: np.ndarray,
                    best_f: float, best_raw: float, history: list) -> None:
    """Serialize cores, optimizer moments, and RNG state for resumption."""
    arrays = {}
    for i, core in enumerate(dist.cores):
        arrays[f"core_{i}"] = core
    if dist.opt_m is not None:
        for i, (m, v) in enumerate(zip(dist.opt_m, dist.opt_v)):
            arrays[f"m_{i}"] = m
            arrays[f"v_{i}"] = v
    meta = {
        "n": dist.n,
        "opt_t": dist.opt_t,
        "has_moments": dist.opt_m is not None,
        "iteration": iteration,
        "used": used,
        "best_bits": [int(b) for b in best_bits],
        "best_f": best_f,
        "best_raw": best_raw,
        "history": history,
        "rng_state": rng.bit_generator.state,
    }
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_checkpoint(path):
    """Restore (dist, rng, iteration, used, best_bits, best_f, best_raw, history)."""
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    n = int(meta["n"])
    cores = [data[f"core_{i}"] for i in range(n)]
    dist = TtDistribution(cores=cores, opt_t=int(meta["opt_t"]))
    if meta["has_moments"]:
        dist.opt_m = [data[f"m_{i}"] for i in range(n)]
        dist.opt_v = [data[f"v_{i}"] for i in range(n)]
    rng = np.random.default_rng(0)
    state = meta["rng_state"]
    # JSON round-trips the uint128 SFC/PCG state words as ints already.
    rng.bit_generator.state = state
    return (dist, rng, int(meta["iteration"]), int(meta["used"]),
            np.array(meta["best_bits"], dtype=np.int8), float(meta["best_f"]),
            float(meta["best_raw"]), list(meta["history"]))


def refine(seed_mask: PruningMask, objective: ObjectiveHandle, k_target: int,
           config: RefineConfig, checkpoint_path=None, resume: bool = False):
    """Two-stage refinement loop: sample, score, select elites, ascend.

    The penalized objective f(p) = raw(p) - lambda * |sum p - K| guards the
    target cardinality; the best-ever mask by f never regresses and the
    seed is always evaluated first. Unique raw-metric evaluations are
    capped at config.budget; duplicates cost nothing. Returns
    (best_mask, best_raw_metric, history).
    """
    n = len(seed_mask)
    iters_total = math.ceil(config.budget / config.batch)

    def measure(mask: PruningMask, used: int):
        """(f, raw, used) or (None, None, used) when over budget and uncached."""
        cached = objective.lookup(mask)
        if cached is None:
            if used >= config.budget:
                return None, None, used
            used += 1
        raw = objective.evaluate(mask)
        return penalized_score(raw, cardinality(mask), k_target, config.lambda_card), raw, used

    if resume:
        if checkpoint_path is None:
            raise ArgumentError("resume requires a checkpoint path")
        (dist, rng, start_iter, used, best_bits,
         best_f, best_raw, history) = load_checkpoint(checkpoint_path)
        if dist.n != n:
            raise DimensionError(f"checkpoint chain length {dist.n} does not match mask {n}")
        best_mask = PruningMask(best_bits)
    else:
        dist = init_tt(n, config.rank, derive_seed(config.seed, "tt-init"))
        rng = np.random.default_rng(derive_seed(config.seed, "refine"))
        used = 0
        best_f, best_raw, used = measure(seed_mask, used)
        if best_f is None:
            raise EvaluationError("budget exhausted before the seed evaluation")
        best_mask = seed_mask
        history = []
        start_iter = 0

    for iteration in range(start_iter, iters_total):
        batch = sample_batch(dist, config, iteration, seed_mask, rng,
                             mutation_base=best_mask)
        scored = []
        for mask in batch:
            f, raw, used = measure(mask, used)
            if f is None:
                continue
            scored.append((f, mask))
            if f > best_f:
                best_f, best_raw, best_mask = f, raw, mask
        if scored:
            scored.sort(key=lambda item: -item[0])
            elites = [mask for _, mask in scored[:config.elites]]
            update_elites(dist, elites, config.learn_rate)
        history.append({
            "iteration": iteration,
            "best_f": best_f,
            "mean_f": float(np.mean([f for f, _ in scored])) if scored else None,
            "unique_evals": used,
            "best_cardinality": cardinality(best_mask),
        })
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, dist, rng, iteration + 1, used,
                            best_mask.bits, best_f, best_raw, history)
    return best_mask, best_raw, history
