"""Command-line pipeline orchestration.

Subcommands cover each stage: `build` writes the QUBO diagnostic export,
`inspect` summarizes one, `solve` runs the exact-cardinality search,
`search` runs random coefficient search, `refine` runs the tensor-train
stage, and `pipeline` chains them from a JSON config, emitting a manifest
with content hashes. Every command is deterministic under --seed; all
randomness derives from the global seed via labeled streams.

Exit codes: 0 success, 2 validation, 3 bracket/solver failure, 4 evaluator
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from .anneal import AnnealConfig
from .capacity import CapacitySearchConfig, solve_with_cardinality
from .errors import (ArgumentError, BracketError, DimensionError, EvaluationError,
                     MissingDataError, ParseError, SizeError, ValidationError)
from .hparam import SearchSpace, export_landscape, random_search
from .objective import ExternalObjective, ObjectiveHandle, QuboEnergyObjective, SeparableObjective
from .problem import PruningMask, PruningProblem, cardinality, load_problem
from .qubo import (CoefficientSet, assemble_qubo, energy, export_qubo,
                   load_qubo_export)
from .seeding import derive_seed
from .ttrefine import RefineConfig, refine

logger = logging.getLogger("prunequbo")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_EVALUATOR = 4

VARIANT_ALIASES = {"classic": "classic_l1", "gradient": "gradient_aware", "hybrid": "hybrid"}


def _setup_logging():
    level = os.environ.get("PRUNEQUBO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _jsonl_writer(path):
    fh = open(path, "w", encoding="utf-8")

    def write(record: dict):
        fh.write(json.dumps(record, sort_keys=True) + "\n")

    return fh, write


def _coeffs_from_args(args) -> CoefficientSet:
    return CoefficientSet(alpha_t=args.alpha_t, alpha_f=args.alpha_f,
                          beta_diag=args.beta_diag, beta_off=args.beta_off,
                          lambda_sim=args.lambda_sim, gamma=args.gamma,
                          fisher_kind=args.fisher)


def _variant(args) -> str:
    return VARIANT_ALIASES[args.variant]


def make_evaluator(spec: str, problem: PruningProblem, variant: str,
                   coeffs: CoefficientSet, mode: str = "oneshot",
                   timeout: float = 600.0) -> ObjectiveHandle:
    """Build the objective named by an --evaluator spec.

    "separable" counts pruned filters, "qubo" negates the energy of a
    reference QUBO assembled from the given coefficients, and "cmd:<argv>"
    bridges to an external process.
    """
    if spec == "separable":
        return SeparableObjective(np.ones(problem.n))
    if spec == "qubo":
        return QuboEnergyObjective(assemble_qubo(problem, coeffs, variant))
    if spec.startswith("cmd:"):
        return ExternalObjective(spec[4:], n=problem.n, mode=mode, timeout=timeout)
    raise ArgumentError(f"unknown evaluator spec {spec!r}")


def _mask_doc(mask: PruningMask, gamma_final, e, args_seed, variant) -> dict:
    return {"mask": mask.to01(), "n": len(mask), "cardinality": cardinality(mask),
            "gamma_final": gamma_final, "energy": e, "seed": args_seed,
            "variant": variant}


def cmd_build(args) -> int:
    problem = load_problem(args.problem)
    q = assemble_qubo(problem, _coeffs_from_args(args), _variant(args))
    export_qubo(q, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    q = load_qubo_export(args.qubo)
    nnz = int(np.count_nonzero(q.upper))
    print(f"n={q.n} variant={q.variant} gamma={q.gamma}")
    print(f"diag: min={q.diag.min():.6g} max={q.diag.max():.6g}")
    print(f"upper: nonzeros={nnz}")
    for name, comp in sorted(q.components.items()):
        if comp is None:
            print(f"component {name}: absent")
        else:
            arr = np.asarray(comp)
            print(f"component {name}: shape={arr.shape} "
                  f"min={arr.min():.6g} max={arr.max():.6g}")
    return EXIT_OK


def _anneal_cfg(args) -> AnnealConfig:
    return AnnealConfig(num_reads=args.reads, sweeps_per_read=args.sweeps,
                        seed=derive_seed(args.seed, "anneal"))


def _capacity_cfg(args, k) -> CapacitySearchConfig:
    return CapacitySearchConfig(k_target=k, reads_search=args.reads_search,
                                reads_final=args.reads)


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    variant = _variant(args)
    os.makedirs(args.out, exist_ok=True)
    trace_path = os.path.join(args.out, "trace.jsonl")
    fh, write_trace = _jsonl_writer(trace_path)
    try:
        mask, gamma_final, result = solve_with_cardinality(
            problem, _coeffs_from_args(args), variant,
            _capacity_cfg(args, args.k), _anneal_cfg(args), trace=write_trace)
    finally:
        fh.close()
    q = assemble_qubo(problem, replace(_coeffs_from_args(args), gamma=gamma_final), variant)
    mask_path = os.path.join(args.out, "mask.json")
    _write_json(mask_path, _mask_doc(mask, gamma_final, energy(q, mask), args.seed, variant))
    print(f"wrote {mask_path} (cardinality {cardinality(mask)}, gamma {gamma_final:.6g})")
    return EXIT_OK


def cmd_search(args) -> int:
    problem = load_problem(args.problem)
    variant = _variant(args)
    os.makedirs(args.out, exist_ok=True)
    coeffs = _coeffs_from_args(args)
    evaluator = make_evaluator(args.evaluator, problem, variant, coeffs,
                               mode=args.evaluator_mode, timeout=args.timeout)
    try:
        best, trials = random_search(problem, variant, SearchSpace(), args.k,
                                     args.trials, evaluator,
                                     seed=derive_seed(args.seed, "search"),
                                     fisher_kind=args.fisher,
                                     anneal_cfg=_anneal_cfg(args),
                                     capacity_cfg=_capacity_cfg(args, args.k),
                                     workers=args.workers)
    finally:
        evaluator.close()
    ledger_path = os.path.join(args.out, "ledger.jsonl")
    with open(ledger_path, "w", encoding="utf-8") as fh:
        for rec in trials:
            fh.write(json.dumps({
                "index": rec.index,
                "coeffs": asdict(rec.coeffs),
                "mask": None if rec.mask is None else rec.mask.to01(),
                "gamma_final": rec.gamma_final,
                "proxy_score": rec.proxy_score,
                "error": rec.error,
            }, sort_keys=True) + "\n")
    landscape_path = os.path.join(args.out, "landscape.csv")
    export_landscape(trials, tuple(args.axes.split(",")), landscape_path)
    best_path = os.path.join(args.out, "best_trial.json")
    _write_json(best_path, {"index": best.index, "coeffs": asdict(best.coeffs),
                            "proxy_score": best.proxy_score,
                            "mask": None if best.mask is None else best.mask.to01(),
                            "gamma_final": best.gamma_final})
    print(f"wrote {ledger_path}, {landscape_path}, {best_path}")
    return EXIT_OK


def _refine_cfg(args) -> RefineConfig:
    return RefineConfig(budget=args.budget, batch=args.batch, rank=args.rank,
                        lambda_card=args.lambda_card,
                        seed=derive_seed(args.seed, "refine"))


def cmd_refine(args) -> int:
    problem = load_problem(args.problem)
    variant = _variant(args)
    os.makedirs(args.out, exist_ok=True)
    with open(args.mask, "r", encoding="utf-8") as fh:
        seed_doc = json.load(fh)
    seed_mask = PruningMask.from01(seed_doc["mask"])
    evaluator = make_evaluator(args.evaluator, problem, variant, _coeffs_from_args(args),
                               mode=args.evaluator_mode, timeout=args.timeout)
    try:
        best_mask, best_raw, history = refine(seed_mask, evaluator, args.k, _refine_cfg(args))
    finally:
        evaluator.close()
    history_path = os.path.join(args.out, "history.jsonl")
    with open(history_path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    refined_path = os.path.join(args.out, "refined.json")
    _write_json(refined_path, {"mask": best_mask.to01(), "n": len(best_mask),
                               "cardinality": cardinality(best_mask),
                               "raw_metric": best_raw, "seed": args.seed})
    print(f"wrote {refined_path}, {history_path}")
    return EXIT_OK


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def cmd_pipeline(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.config}: {exc}") from exc
    out = args.out or cfg.get("out")
    if not out:
        raise ArgumentError("pipeline needs an output directory (--out or config 'out')")
    os.makedirs(out, exist_ok=True)
    seed = int(cfg.get("seed", 0))
    problem = load_problem(cfg["problem"])
    variant = VARIANT_ALIASES[cfg.get("variant", "hybrid")]
    fisher = cfg.get("fisher", "none")
    k = int(cfg["k_target"])

    anneal_over = cfg.get("anneal", {})
    anneal_cfg = AnnealConfig(seed=derive_seed(seed, "anneal"), **anneal_over)
    cap_over = cfg.get("capacity", {})
    capacity_cfg = CapacitySearchConfig(k_target=k, **cap_over)
    refine_over = cfg.get("refine", {})
    refine_cfg = RefineConfig(seed=derive_seed(seed, "refine"), **refine_over)
    eval_spec = cfg.get("evaluator", "qubo")
    eval_mode = cfg.get("evaluator_mode", "oneshot")
    timeout = float(cfg.get("evaluator_timeout", 600.0))

    produced = []

    # Stage 1a: coefficients, fixed or found by random search.
    if "search" in cfg:
        s = cfg["search"]
        space_over = {name: tuple(rng) for name, rng in s.get("space", {}).items()}
        space = SearchSpace(**space_over)
        ref_coeffs = CoefficientSet(fisher_kind=fisher)
        proxy = make_evaluator(s.get("evaluator", "qubo"), problem, variant, ref_coeffs,
                               mode=eval_mode, timeout=timeout)
        try:
            best, trials = random_search(problem, variant, space, k,
                                         int(s.get("trials", 10)), proxy,
                                         seed=derive_seed(seed, "search"),
                                         fisher_kind=fisher, capacity_cfg=capacity_cfg,
                                         anneal_cfg=anneal_cfg,
                                         workers=int(s.get("workers", os.cpu_count() or 1)))
        finally:
            proxy.close()
        coeffs = best.coeffs
        ledger_path = os.path.join(out, "ledger.jsonl")
        with open(ledger_path, "w", encoding="utf-8") as fh:
            for rec in trials:
                fh.write(json.dumps({"index": rec.index, "coeffs": asdict(rec.coeffs),
                                     "proxy_score": rec.proxy_score,
                                     "gamma_final": rec.gamma_final,
                                     "error": rec.error}, sort_keys=True) + "\n")
        produced.append(ledger_path)
        landscape_path = os.path.join(out, "landscape.csv")
        export_landscape(trials, tuple(s.get("axes", ["alpha_t", "beta_off"])), landscape_path)
        produced.append(landscape_path)
    else:
        coeffs = CoefficientSet(fisher_kind=fisher, **cfg.get("coefficients", {}))

    # Stage 1b: exact-cardinality QUBO solve.
    trace_path = os.path.join(out, "trace.jsonl")
    fh, write_trace = _jsonl_writer(trace_path)
    try:
        mask, gamma_final, _ = solve_with_cardinality(problem, coeffs, variant,
                                                      capacity_cfg, anneal_cfg,
                                                      trace=write_trace)
    finally:
        fh.close()
    produced.append(trace_path)
    q_final = assemble_qubo(problem, replace(coeffs, gamma=gamma_final), variant)
    mask_path = os.path.join(out, "mask.json")
    _write_json(mask_path, _mask_doc(mask, gamma_final, energy(q_final, mask), seed, variant))
    produced.append(mask_path)

    # Stage 2: tensor-train refinement against the configured objective.
    evaluator = make_evaluator(eval_spec, problem, variant, coeffs,
                               mode=eval_mode, timeout=timeout)
    try:
        qubo_stage_f = evaluator.record(mask, k, refine_cfg.lambda_card).penalized
        best_mask, best_raw, history = refine(mask, evaluator, k, refine_cfg)
    finally:
        evaluator.close()
    history_path = os.path.join(out, "history.jsonl")
    with open(history_path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    produced.append(history_path)
    refined_path = os.path.join(out, "refined.json")
    _write_json(refined_path, {"mask": best_mask.to01(), "n": len(best_mask),
                               "cardinality": cardinality(best_mask),
                               "raw_metric": best_raw,
                               "penalized": history[-1]["best_f"] if history else None,
                               "qubo_stage_penalized": qubo_stage_f,
                               "seed": seed})
    produced.append(refined_path)

    manifest_path = os.path.join(out, "manifest.json")
    _write_json(manifest_path, {"files": [
        {"name": os.path.relpath(p, out), "sha256": _sha256(p)}
        for p in sorted(produced)
    ]})
    print(f"wrote {manifest_path}")
    return EXIT_OK


def _add_common(p, with_k=True):
    p.add_argument("--problem", required=True)
    p.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="hybrid")
    p.add_argument("--fisher", choices=("none", "weight", "channel"), default="none")
    p.add_argument("--seed", type=int, default=0)
    if with_k:
        p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha-t", dest="alpha_t", type=float, default=1.0)
    p.add_argument("--alpha-f", dest="alpha_f", type=float, default=0.0)
    p.add_argument("--beta-diag", dest="beta_diag", type=float, default=1.0)
    p.add_argument("--beta-off", dest="beta_off", type=float, default=1.0)
    p.add_argument("--lambda-sim", dest="lambda_sim", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)


def _add_solver(p):
    p.add_argument("--reads", type=int, default=100)
    p.add_argument("--reads-search", dest="reads_search", type=int, default=15)
    p.add_argument("--sweeps", type=int, default=1000)


def _add_evaluator(p):
    p.add_argument("--evaluator", default="qubo")
    p.add_argument("--evaluator-mode", dest="evaluator_mode",
                   choices=("oneshot", "session"), default="oneshot")
    p.add_argument("--timeout", type=float, default=600.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunequbo",
                                     description="QUBO pruning-mask pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="assemble a QUBO and write its diagnostic export")
    _add_common(p, with_k=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("inspect", help="summarize a QUBO export file")
    p.add_argument("--qubo", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("solve", help="solve with the exact cardinality constraint")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("search", help="random search over coefficients")
    _add_common(p)
    _add_solver(p)
    _add_evaluator(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--axes", default="alpha_t,beta_off")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="trial worker threads (default: processor count)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("refine", help="tensor-train refinement from a seed mask")
    _add_common(p)
    _add_evaluator(p)
    p.add_argument("--mask", required=True, help="seed mask file from `solve`")
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--batch", type=int, default=300)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--lambda-card", dest="lambda_card", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("pipeline", help="run search -> solve -> refine from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ParseError, ArgumentError, MissingDataError,
            DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BracketError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR


if __name__ == "__main__":
    sys.exit(main())
