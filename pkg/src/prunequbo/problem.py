"""Pruning problem data model.

A problem bundles per-filter statistics (L1, Taylor, optional Fisher
scores, parameter counts, layer membership) with optional per-layer
activation-similarity blocks. Problems are immutable after construction
and serialize to a single self-describing JSON document (schema version 1).

Mask convention: bit 1 marks a filter for removal, bit 0 keeps it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, ParseError, ValidationError
from .seeding import normalize_seed

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FilterRecord:
    """Statistics for one prunable filter."""

    id: int
    layer: int
    param_count: int
    l1_score: float
    taylor_score: float
    fisher_w_score: Optional[float] = None
    fisher_c_score: Optional[float] = None


@dataclass(frozen=True)
class SimilarityBlock:
    """Activation-correlation matrix over one layer's filters."""

    layer: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class PruningProblem:
    """Immutable container for all per-filter statistics."""

    filters: tuple[FilterRecord, ...]
    similarity: tuple[SimilarityBlock, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "similarity", tuple(self.similarity))

    @property
    def n(self) -> int:
        return len(self.filters)

    def param_counts(self) -> np.ndarray:
        return np.array([f.param_count for f in self.filters], dtype=np.float64)

    def l1_scores(self) -> np.ndarray:
        return np.array([f.l1_score for f in self.filters], dtype=np.float64)

    def taylor_scores(self) -> np.ndarray:
        return np.array([f.taylor_score for f in self.filters], dtype=np.float64)

    def fisher_scores(self, kind: str) -> Optional[np.ndarray]:
        """Per-filter Fisher scores of the requested kind, or None if any is missing."""
        if kind == "weight":
            vals = [f.fisher_w_score for f in self.filters]
        elif kind == "channel":
            vals = [f.fisher_c_score for f in self.filters]
        else:
            raise ArgumentError(f"unknown fisher kind: {kind!r}")
        if any(v is None for v in vals):
            return None
        return np.array(vals, dtype=np.float64)

    def layers(self) -> np.ndarray:
        return np.array([f.layer for f in self.filters], dtype=np.int64)

    def layer_members(self) -> dict[int, list[int]]:
        """Filter indices grouped by layer, in id order."""
        members: dict[int, list[int]] = {}
        for f in self.filters:
            members.setdefault(f.layer, []).append(f.id)
        return members

    def similarity_for(self, layer: int) -> Optional[SimilarityBlock]:
        for block in self.similarity:
            if block.layer == layer:
                return block
        return None


@dataclass(frozen=True)
class PruningMask:
    """Length-N binary vector; 1 = pruned, 0 = retained."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.int8)
        if b.ndim != 1:
            raise ArgumentError("mask bits must be one-dimensional")
        if b.size and not np.isin(b, (0, 1)).all():
            raise ArgumentError("mask bits must be 0 or 1")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, PruningMask) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def key(self) -> bytes:
        """Canonical byte key for caching."""
        return self.bits.tobytes()

    def to01(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @staticmethod
    def from01(text: str) -> "PruningMask":
        if not text or any(c not in "01" for c in text):
            raise ArgumentError(f"not a bit string: {text!r}")
        return PruningMask(np.frombuffer(text.encode(), dtype=np.uint8) - ord("0"))

    def flipped(self, index: int) -> "PruningMask":
        b = self.bits.copy()
        b[index] = 1 - b[index]
        return PruningMask(b)


def cardinality(mask: PruningMask) -> int:
    """Number of set bits, i.e. filters marked for removal."""
    return int(mask.bits.sum())


def _check(cond: bool, message: str):
    if not cond:
        raise ValidationError(message)


def validate_problem(problem: PruningProblem) -> PruningProblem:
    """Check every structural invariant; raises ValidationError naming the offender."""
    n = problem.n
    _check(n >= 2, f"problem needs at least 2 filters, got {n}")
    seen = set()
    for pos, f in enumerate(problem.filters):
        _check(f.id == pos, f"filters[{pos}].id: expected {pos}, got {f.id}"
               + (" (duplicate id)" if f.id in seen else ""))
        seen.add(f.id)
        _check(int(f.param_count) >= 1, f"filters[{pos}].param_count must be >= 1, got {f.param_count}")
        for name in ("l1_score", "taylor_score", "fisher_w_score", "fisher_c_score"):
            v = getattr(f, name)
            if v is None:
                continue
            _check(math.isfinite(v) and v >= 0.0,
                   f"filters[{pos}].{name} must be finite and >= 0, got {v}")
    members = problem.layer_members()
    seen_layers = set()
    for bi, block in enumerate(problem.similarity):
        _check(block.layer not in seen_layers,
               f"similarity[{bi}]: layer {block.layer} appears in more than one block")
        seen_layers.add(block.layer)
        _check(block.layer in members,
               f"similarity[{bi}]: layer {block.layer} has no filters")
        m = block.matrix
        size = len(members[block.layer])
        _check(m.ndim == 2 and m.shape == (size, size),
               f"similarity[{bi}]: matrix shape {m.shape} does not match layer size {size}")
        _check(np.isfinite(m).all(), f"similarity[{bi}]: matrix has non-finite entries")
        _check(float(np.max(np.abs(m - m.T), initial=0.0)) <= 1e-6,
               f"similarity[{bi}]: matrix is not symmetric")
        _check(float(np.max(np.abs(np.diag(m) - 1.0), initial=0.0)) <= 1e-6,
               f"similarity[{bi}]: diagonal entries must equal 1")
        _check(float(np.max(np.abs(m), initial=0.0)) <= 1.0 + 1e-9,
               f"similarity[{bi}]: entries must lie in [-1, 1]")
    return problem


def _filter_from_obj(obj: dict, pos: int) -> FilterRecord:
    try:
        return FilterRecord(
            id=int(obj["id"]),
            layer=int(obj["layer"]),
            param_count=int(obj["param_count"]),
            l1_score=float(obj["l1"]),
            taylor_score=float(obj["taylor"]),
            fisher_w_score=None if obj.get("fisher_w") is None else float(obj["fisher_w"]),
            fisher_c_score=None if obj.get("fisher_c") is None else float(obj["fisher_c"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"filters[{pos}]: {exc}") from exc


def load_problem(path) -> PruningProblem:
    """Load and validate a problem file (JSON, schema version 1)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    if doc.get("version") != SCHEMA_VERSION:
        raise ParseError(f"{path}: unsupported version {doc.get('version')!r}")
    raw_filters = doc.get("filters")
    if not isinstance(raw_filters, list):
        raise ParseError(f"{path}: 'filters' must be an array")
    filters = [_filter_from_obj(o, i) for i, o in enumerate(raw_filters)]
    blocks = []
    for bi, o in enumerate(doc.get("similarity") or []):
        try:
            blocks.append(SimilarityBlock(layer=int(o["layer"]),
                                          matrix=np.asarray(o["matrix"], dtype=np.float64)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"similarity[{bi}]: {exc}") from exc
    metadata = doc.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise ParseError(f"{path}: 'metadata' must be an object")
    problem = PruningProblem(filters=tuple(filters), similarity=tuple(blocks),
                             metadata={str(k): str(v) for k, v in metadata.items()})
    return validate_problem(problem)


def save_problem(problem: PruningProblem, path) -> None:
    """Write the problem file; load_problem(save_problem(P)) is the identity."""
    doc = {
        "version": SCHEMA_VERSION,
        "filters": [],
        "similarity": [],
        "metadata": dict(problem.metadata),
    }
    for f in problem.filters:
        obj = {"id": f.id, "layer": f.layer, "param_count": f.param_count,
               "l1": f.l1_score, "taylor": f.taylor_score}
        if f.fisher_w_score is not None:
            obj["fisher_w"] = f.fisher_w_score
        if f.fisher_c_score is not None:
            obj["fisher_c"] = f.fisher_c_score
        doc["filters"].append(obj)
    for block in problem.similarity:
        doc["similarity"].append({"layer": block.layer,
                                  "matrix": [list(map(float, row)) for row in block.matrix]})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def synth_problem(n_filters: int, n_layers: int, seed: int) -> PruningProblem:
    """Deterministic synthetic problem for tests and benchmarks.

    Scores are lognormal (positive by construction); per-layer similarity
    blocks are normalized Gram matrices of random vectors, so symmetry,
    unit diagonal, [-1, 1] range and positive semidefiniteness hold by
    construction.
    """
    if n_filters < 2:
        raise ArgumentError(f"n_filters must be >= 2, got {n_filters}")
    if not (n_filters >= n_layers >= 1):
        raise ArgumentError(f"need n_filters >= n_layers >= 1, got {n_filters}, {n_layers}")
    rng = np.random.default_rng(normalize_seed(seed))
    base, extra = divmod(n_filters, n_layers)
    sizes = [base + (1 if i < extra else 0) for i in range(n_layers)]
    # One kernel geometry per layer so capacity fractions vary across layers.
    kernel_areas = rng.choice([1, 9, 25], size=n_layers)
    in_channels = rng.integers(4, 65, size=n_layers)
    filters = []
    blocks = []
    fid = 0
    for layer, size in enumerate(sizes):
        count = int(kernel_areas[layer] * in_channels[layer])
        l1 = rng.lognormal(mean=0.0, sigma=1.0, size=size)
        taylor = rng.lognormal(mean=0.0, sigma=1.0, size=size)
        fw = rng.lognormal(mean=-1.0, sigma=1.0, size=size)
        fc = rng.lognormal(mean=-1.0, sigma=1.0, size=size)
        for j in range(size):
            filters.append(FilterRecord(id=fid, layer=layer, param_count=count,
                                        l1_score=float(l1[j]), taylor_score=float(taylor[j]),
                                        fisher_w_score=float(fw[j]), fisher_c_score=float(fc[j])))
            fid += 1
        vecs = rng.normal(size=(size, size + 3))
        gram = vecs @ vecs.T
        norms = np.sqrt(np.diag(gram))
        sim = gram / np.outer(norms, norms)
        sim = np.clip((sim + sim.T) / 2.0, -1.0, 1.0)
        np.fill_diagonal(sim, 1.0)
        blocks.append(SimilarityBlock(layer=layer, matrix=sim))
    problem = PruningProblem(filters=tuple(filters), similarity=tuple(blocks),
                             metadata={"generator": "synthetic", "seed": str(seed)})
    return validate_problem(problem)
