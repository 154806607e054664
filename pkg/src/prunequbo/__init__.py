"""Pruning-mask search toolkit.

Builds hybrid QUBO objectives from per-filter statistics, solves them with
simulated annealing under an exact cardinality constraint enforced by a
binary search on the capacity coefficient, and refines the winning mask
with a tensor-train probabilistic optimizer driven by a true evaluation
metric.
"""

from .anneal import AnnealConfig, SolveResult, anneal, brute_force
from .capacity import CapacitySearchConfig, repair_mask, solve_with_cardinality
from .hparam import SearchSpace, TrialRecord, export_landscape, random_search
from .objective import (EvalRecord, ExternalObjective, ObjectiveHandle,
                        QuboEnergyObjective, SeparableObjective, evaluate,
                        evaluate_external)
from .problem import (FilterRecord, PruningMask, PruningProblem, SimilarityBlock,
                      cardinality, load_problem, save_problem, synth_problem)
from .qubo import (CoefficientSet, QuboMatrix, assemble_qubo, cap_spectral_norm,
                   capacity_fractions, delta_energy, energy, normalize_components,
                   outer_redundancy, with_gamma)
from .ttrefine import (RefineConfig, TtDistribution, init_tt, refine, sample_batch,
                       tt_normalizer, tt_unnorm_prob, update_elites)

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig", "SolveResult", "anneal", "brute_force",
    "CapacitySearchConfig", "repair_mask", "solve_with_cardinality",
    "SearchSpace", "TrialRecord", "export_landscape", "random_search",
    "EvalRecord", "ExternalObjective", "ObjectiveHandle", "QuboEnergyObjective",
    "SeparableObjective", "evaluate", "evaluate_external",
    "FilterRecord", "PruningMask", "PruningProblem", "SimilarityBlock",
    "cardinality", "load_problem", "save_problem", "synth_problem",
    "CoefficientSet", "QuboMatrix", "assemble_qubo", "cap_spectral_norm",
    "capacity_fractions", "delta_energy", "energy", "normalize_components",
    "outer_redundancy", "with_gamma",
    "RefineConfig", "TtDistribution", "init_tt", "refine", "sample_batch",
    "tt_normalizer", "tt_unnorm_prob", "update_elites",
]
