"""QUBO assembly for the pruning variants.

Builds the symmetric-energy matrix from per-filter statistics: redundancy
as an outer product of L1 scores, importance on the diagonal, a capacity
incentive scaled by the coefficient gamma, and (for the hybrid variant)
an activation-similarity penalty on same-layer pairs. All ingredients go
through per-parameter scaling, variance normalization, and a spectral cap
on the redundancy matrix before assembly.

Energy convention: E(p) = sum_i Q_ii p_i + sum_{i<j} Q_ij p_i p_j, with
each unordered pair counted once. Lower is better.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (ArgumentError, ConvergenceWarning, DegenerateComponentWarning,
                     DimensionError, MissingDataError, ParseError)
from .problem import PruningMask, PruningProblem

VARIANTS = ("classic_l1", "gradient_aware", "hybrid")
FISHER_KINDS = ("none", "weight", "channel")

DEFAULT_EPS = 1e-12


@dataclass(frozen=True)
class CoefficientSet:
    """Tunable weights balancing the energy terms."""

    alpha_t: float = 1.0
    alpha_f: float = 0.0
    beta_diag: float = 1.0
    beta_off: float = 1.0
    lambda_sim: float = 1.0
    gamma: float = 0.0
    fisher_kind: str = "none"

    def __post_init__(self):
        for name in ("alpha_t", "alpha_f", "beta_diag", "beta_off", "lambda_sim", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ArgumentError(f"{name} must be finite and >= 0, got {v}")
        if self.fisher_kind not in FISHER_KINDS:
            raise ArgumentError(f"fisher_kind must be one of {FISHER_KINDS}, got {self.fisher_kind!r}")


@dataclass
class QuboMatrix:
    """Dense symmetric-energy QUBO with its normalized ingredients retained.

    `upper` stores only i<j entries; `components` keeps the normalized
    ingredients so the capacity coefficient can be swapped without
    re-normalizing.
    """

    n: int
    diag: np.ndarray
    upper: np.ndarray
    diag_base: np.ndarray
    components: dict
    gamma: float
    variant: str
    coeffs: CoefficientSet
    _coupling: Optional[np.ndarray] = field(default=None, repr=False)

    def coupling(self) -> np.ndarray:
        """Symmetric pair-coefficient matrix C with C[i,j] = Q_ij, zero diagonal."""
        if self._coupling is None:
            self._coupling = self.upper + self.upper.T
        return self._coupling


def capacity_fractions(problem: PruningProblem) -> np.ndarray:
    """D_i = N_i / sum_j N_j; the fraction of total capacity per filter."""
    counts = problem.param_counts()
    return counts / counts.sum()


def outer_redundancy(scores: np.ndarray) -> np.ndarray:
    """Pairwise redundancy as the outer product of per-filter scores."""
    s = np.asarray(scores, dtype=np.float64)
    return np.outer(s, s)


def _magnitude_scale(values: np.ndarray, eps: float, label: str) -> np.ndarray:
    """Divide by the std of |values| (+eps); warns when the component is constant."""
    std = float(np.std(np.abs(values))) if values.size else 0.0
    if std == 0.0:
        warnings.warn(f"component {label!r} has zero variance; scaling by 1/eps",
                      DegenerateComponentWarning, stacklevel=3)
    return values / (std + eps)


def normalize_components(A: np.ndarray, importance: np.ndarray, D: np.ndarray,
                         param_counts: np.ndarray, eps: float = DEFAULT_EPS):
    """Variance-normalize the QUBO ingredients.

    The importance vector is first divided by per-filter parameter counts,
    then every component is divided by the empirical standard deviation of
    its magnitudes plus eps. Diagonal and off-diagonal entries of A are
    scaled separately; the off-diagonal std is taken over nonzero entries
    only (defined as 0 for an empty set, so zeros stay zeros).

    Returns (A_hat, I_hat, D_hat) with A_hat recombined into a symmetric matrix.
    """
    if eps <= 0:
        raise ArgumentError(f"eps must be > 0, got {eps}")
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    diag = np.diag(A).copy()
    iu, ju = np.triu_indices(n, k=1)
    off = A[iu, ju]
    nz = off[off != 0.0]
    off_std = float(np.std(np.abs(nz))) if nz.size else 0.0
    if off.size and off_std == 0.0 and nz.size:
        warnings.warn("component 'A_offdiag' has zero variance; scaling by 1/eps",
                      DegenerateComponentWarning, stacklevel=2)
    diag_hat = _magnitude_scale(diag, eps, "A_diag")
    off_hat = off / (off_std + eps)
    a_hat = np.zeros_like(A)
    a_hat[iu, ju] = off_hat
    a_hat = a_hat + a_hat.T
    np.fill_diagonal(a_hat, diag_hat)
    imp_tilde = np.asarray(importance, dtype=np.float64) / np.asarray(param_counts, dtype=np.float64)
    i_hat = _magnitude_scale(imp_tilde, eps, "importance")
    d_hat = _magnitude_scale(np.asarray(D, dtype=np.float64), eps, "capacity")
    return a_hat, i_hat, d_hat


def scale_importance(importance: np.ndarray, param_counts: np.ndarray,
                     eps: float = DEFAULT_EPS, label: str = "importance") -> np.ndarray:
    """Per-parameter scaling followed by magnitude-variance normalization."""
    tilde = np.asarray(importance, dtype=np.float64) / np.asarray(param_counts, dtype=np.float64)
    return _magnitude_scale(tilde, eps, label)


def cap_spectral_norm(a_hat: np.ndarray, iters: int = 100, tol: float = 1e-8) -> np.ndarray:
    """Rescale a symmetric matrix so its spectral norm is at most 1.

    Power iteration starts from the normalized all-ones vector; the norm
    estimate is the extreme Rayleigh(-Ritz) quotient over the accumulated
    iterate basis, which stays accurate when leading eigenvalue magnitudes
    nearly tie (single-vector quotients stall there) and becomes exact when
    the basis saturates an invariant subspace. Stops once successive
    estimates agree within tol; if they never do, a ConvergenceWarning is
    emitted and the last estimate is used anyway.
    """
    if iters < 1:
        raise ArgumentError(f"iters must be >= 1, got {iters}")
    if tol <= 0:
        raise ArgumentError(f"tol must be > 0, got {tol}")
    a = np.asarray(a_hat, dtype=np.float64)
    n = a.shape[0]
    basis = [np.ones(n) / math.sqrt(n)]
    images = []
    sigma = 0.0
    converged = False
    for k in range(iters):
        images.append(a @ basis[-1])
        B = np.column_stack(basis)
        T = B.T @ np.column_stack(images)
        T = (T + T.T) / 2.0
        sigma_new = float(np.abs(np.linalg.eigvalsh(T)).max())
        stable = k > 0 and abs(sigma_new - sigma) <= tol * max(1.0, sigma_new)
        sigma = sigma_new
        if stable:
            converged = True
            break
        # Extend the Krylov basis with the re-orthogonalized power iterate.
        u = images[-1].copy()
        for _ in range(2):
            u -= B @ (B.T @ u)
        norm_u = float(np.linalg.norm(u))
        if norm_u <= 1e-12 * max(sigma, 1.0):
            # Invariant subspace reached: the Ritz value is exact.
            converged = True
            break
        basis.append(u / norm_u)
    if not converged:
        warnings.warn("power iteration did not stabilize; capping with last estimate",
                      ConvergenceWarning, stacklevel=2)
    # The 1e-12 slack keeps float noise in the estimate from rescaling a
    # matrix whose norm is exactly 1.
    if sigma > 1.0 + 1e-12:
        return a / sigma
    return a


def _similarity_penalty(problem: PruningProblem) -> np.ndarray:
    """Strictly-upper matrix of max(0, S_ij) for same-layer pairs.

    Cross-layer pairs carry no similarity term. Every layer with at least
    two filters must provide a block.
    """
    n = problem.n
    members = problem.layer_members()
    pen = np.zeros((n, n))
    for layer, ids in members.items():
        block = problem.similarity_for(layer)
        if block is None:
            if len(ids) >= 2:
                raise MissingDataError(
                    f"hybrid variant needs a similarity block for layer {layer}")
            continue
        idx = np.array(ids)
        sub = np.maximum(block.matrix, 0.0)
        pen[np.ix_(idx, idx)] = sub
    return np.triu(pen, k=1)


def assemble_qubo(problem: PruningProblem, coeffs: CoefficientSet, variant: str,
                  eps: float = DEFAULT_EPS) -> QuboMatrix:
    """Build the QUBO matrix for one variant.

    classic_l1:     Q_ii = A_hat_ii - gamma*D_hat_i,      Q_ij = 2*A_hat_ij
    gradient_aware: Q_ii = b_d*A_hat_ii + a_T*I_hat_i
                           [+ a_F*F_hat_i] - gamma*D_hat_i, Q_ij = 2*b_off*A_hat_ij
    hybrid:         gradient_aware plus Q_ij += lambda*max(0, S_ij)
                    for same-layer pairs
    """
    if variant not in VARIANTS:
        raise ArgumentError(f"variant must be one of {VARIANTS}, got {variant!r}")
    n = problem.n
    counts = problem.param_counts()
    A = outer_redundancy(problem.l1_scores())
    D = capacity_fractions(problem)
    a_hat, i_hat, d_hat = normalize_components(A, problem.taylor_scores(), D, counts, eps)
    a_hat = cap_spectral_norm(a_hat)
    a_diag = np.diag(a_hat).copy()
    a_off = np.triu(a_hat, k=1)

    fisher_hat = None
    if coeffs.fisher_kind != "none":
        raw = problem.fisher_scores(coeffs.fisher_kind)
        if raw is None:
            raise MissingDataError(
                f"fisher_kind={coeffs.fisher_kind!r} requires the corresponding scores "
                "on every filter")
        fisher_hat = scale_importance(raw, counts, eps, label=f"fisher_{coeffs.fisher_kind}")

    sim_pen = None
    if variant == "classic_l1":
        diag_base = a_diag.copy()
        upper = 2.0 * a_off
    else:
        diag_base = coeffs.beta_diag * a_diag + coeffs.alpha_t * i_hat
        if fisher_hat is not None:
            diag_base = diag_base + coeffs.alpha_f * fisher_hat
        upper = 2.0 * coeffs.beta_off * a_off
        if variant == "hybrid":
            sim_pen = _similarity_penalty(problem)
            upper = upper + coeffs.lambda_sim * sim_pen

    diag = diag_base - coeffs.gamma * d_hat
    components = {"a_diag": a_diag, "a_off": a_off, "importance": i_hat,
                  "capacity": d_hat, "similarity": sim_pen, "fisher": fisher_hat}
    return QuboMatrix(n=n, diag=diag, upper=upper, diag_base=diag_base,
                      components=components, gamma=coeffs.gamma,
                      variant=variant, coeffs=coeffs)


def with_gamma(q: QuboMatrix, gamma: float) -> QuboMatrix:
    """Re-assemble at a new capacity coefficient from stored components.

    Only the diagonal changes; off-diagonal entries and the normalized
    components are shared, so no re-normalization happens.
    """
    diag = q.diag_base - gamma * q.components["capacity"]
    return QuboMatrix(n=q.n, diag=diag, upper=q.upper, diag_base=q.diag_base,
                      components=q.components, gamma=gamma, variant=q.variant,
                      coeffs=replace(q.coeffs, gamma=gamma), _coupling=q._coupling)


def _check_mask(q: QuboMatrix, mask: PruningMask):
    if len(mask) != q.n:
        raise DimensionError(f"mask length {len(mask)} does not match QUBO size {q.n}")


def energy(q: QuboMatrix, mask: PruningMask) -> float:
    """E(p) = sum_i Q_ii p_i + sum_{i<j} Q_ij p_i p_j."""
    _check_mask(q, mask)
    b = mask.bits.astype(np.float64)
    return float(q.diag @ b + b @ (q.upper @ b))


def energy_batch(q: QuboMatrix, bits: np.ndarray) -> np.ndarray:
    """Energies for a (batch, n) matrix of masks."""
    P = np.asarray(bits, dtype=np.float64)
    return P @ q.diag + np.einsum("bi,bi->b", P @ q.upper, P)


def delta_energy(q: QuboMatrix, mask: PruningMask, flip_index: int) -> float:
    """energy(flip(p, i)) - energy(p), computed in O(N)."""
    _check_mask(q, mask)
    i = flip_index
    if not (0 <= i < q.n):
        raise IndexError(f"flip_index {i} out of range [0, {q.n})")
    b = mask.bits.astype(np.float64)
    row = q.upper[i, :] + q.upper[:, i]
    sign = 1.0 - 2.0 * b[i]
    return float(sign * (q.diag[i] + row @ b))


def export_qubo(q: QuboMatrix, path) -> None:
    """Diagnostic export: n, diagonal, coordinate-list upper, components."""
    iu, ju = np.nonzero(q.upper)
    doc = {
        "n": q.n,
        "variant": q.variant,
        "gamma": q.gamma,
        "diag": [float(v) for v in q.diag],
        "upper": [[int(i), int(j), float(q.upper[i, j])] for i, j in zip(iu, ju)],
        "components": {
            name: (None if arr is None else np.asarray(arr).tolist())
            for name, arr in q.components.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_qubo_export(path) -> QuboMatrix:
    """Reload a diagnostic export; energies match the in-memory assembly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        n = int(doc["n"])
        diag = np.array(doc["diag"], dtype=np.float64)
        upper = np.zeros((n, n))
        for i, j, v in doc["upper"]:
            upper[int(i), int(j)] = float(v)
        comps = {name: (None if arr is None else np.array(arr, dtype=np.float64))
                 for name, arr in doc["components"].items()}
        gamma = float(doc["gamma"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad QUBO export {path}: {exc}") from exc
    diag_base = diag + gamma * comps["capacity"]
    return QuboMatrix(n=n, diag=diag, upper=upper, diag_base=diag_base,
                      components=comps, gamma=gamma,
                      variant=str(doc.get("variant", "classic_l1")), coeffs=CoefficientSet())
