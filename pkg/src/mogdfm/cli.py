"""Command-line interface: ``mogdfm <subcommand> --config FILE [--seed N] [--jobs N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 integrity failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import GAConfig, equal_budget_report, nsga2_run
from .config import Experiment, ExperimentConfig, config_to_dict, load_config, resolve
from .core import evaluate_all, shannon_entropy
from .errors import CapacityError, ConfigError, IntegrityError
from .io import (
    atomic_write,
    population_csv,
    read_json,
    read_population,
    sequences_text,
    trajectory_csv,
    trajectory_record,
    write_json,
)
from .pareto import brute_force_pareto, hypervolume_with_error, non_dominated_sort, pareto_mask
from .sampler import batch_generate
from .weights import EAGER_LIMIT, WeightLattice

logger = logging.getLogger("mogdfm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INTEGRITY = 0, 2, 3, 4


def _manifest(exp: Experiment, command: str) -> dict:
    return {
        "artifact": "mogdfm",
        "version": __version__,
        "command": command,
        "seed": exp.run.seed,
        "config": config_to_dict(exp.config),
        "config_dir": str(exp.base_dir.resolve()),
    }


def _names(exp: Experiment) -> list[str]:
    return [f.name for f in exp.objectives]


def _hv_entry(F, ref) -> dict:
    if ref is None:
        return {"hypervolume": None, "hypervolume_2sigma": None, "reference_point": None}
    hv, se = hypervolume_with_error(F, ref)
    return {"hypervolume": hv, "hypervolume_2sigma": 2 * se, "reference_point": [float(v) for v in ref]}


def summarize(trajectories, names, ref) -> dict:
    """Per-iteration mean/std of every objective plus final-batch hypervolume."""
    F = np.array([tr.final_objectives for tr in trajectories])
    out = {
        "objectives": names,
        "runs": len(trajectories),
        "final_mean": F.mean(axis=0),
        "final_std": F.std(axis=0),
        "accepted_steps_mean": float(np.mean([tr.accepted.sum() for tr in trajectories])),
        "front_size": int(pareto_mask(F).sum()),
    }
    if trajectories[0].objectives is not None:
        O = np.stack([tr.objectives for tr in trajectories])  # (runs, T, N)
        out["per_iteration"] = {"mean": O.mean(axis=0), "std": O.std(axis=0)}
    out.update(_hv_entry(F, ref))
    return out


def cmd_generate(exp: Experiment, out: Path, jobs: int) -> int:
    trajs = batch_generate(exp.run, exp.base, exp.objectives, exp.d, exp.config.batch,
                           assignment=exp.config.assignment, jobs=jobs)
    names = _names(exp)
    if exp.config.log_level == "full":
        for tr in trajs:
            stem = out / "runs" / f"run_{tr.run_index:04d}"
            atomic_write(stem.with_suffix(".csv"), trajectory_csv(tr, names))
            write_json(stem.with_suffix(".json"), trajectory_record(tr, exp.vocabulary, names))
    finals = np.array([tr.final for tr in trajs])
    F = np.array([tr.final_objectives for tr in trajs])
    atomic_write(out / "final.csv", population_csv(finals, F, exp.vocabulary, names))
    atomic_write(out / "final_sequences.txt", sequences_text(finals, exp.vocabulary))
    write_json(out / "summary.json", summarize(trajs, names, exp.reference_point))
    write_json(out / "manifest.json", _manifest(exp, "generate"))
    logger.info("wrote %d runs to %s", len(trajs), out)
    return EXIT_OK


def cmd_ablate(exp: Experiment, out: Path, jobs: int) -> int:
    """All-on run, each objective unguided in turn, and the two hypercone switches."""
    names = _names(exp)
    base_run = replace(exp.run, guided=None, disable_filtering=False, disable_adaptation=False)
    variants = {"all": base_run}
    if len(names) > 1:
        for n, name in enumerate(names):
            variants[f"without_{name}"] = replace(base_run, guided=tuple(m != n for m in range(len(names))))
    variants["without_filtering"] = replace(base_run, disable_filtering=True)
    variants["without_adaptation"] = replace(base_run, disable_adaptation=True)
    report = {"objectives": names, "runs": exp.config.batch, "variants": {}}
    for label, run in variants.items():
        trajs = batch_generate(run, exp.base, exp.objectives, exp.d, exp.config.batch,
                               assignment=exp.config.assignment, jobs=jobs)
        F = np.array([tr.final_objectives for tr in trajs])
        align = np.concatenate([tr.accepted_alignments() for tr in trajs])
        entry = {"final_mean": F.mean(axis=0), "final_std": F.std(axis=0),
                 "accepted_steps": int(align.size),
                 "mean_alignment_per_accepted_step": float(align.mean()) if align.size else None}
        entry.update(_hv_entry(F, exp.reference_point))
        report["variants"][label] = entry
        logger.info("ablation %s done", label)
    write_json(out / "ablation.json", report)
    write_json(out / "manifest.json", _manifest(exp, "ablate"))
    return EXIT_OK


def cmd_baseline(exp: Experiment, out: Path, jobs: int) -> int:
    b = exp.config.baseline
    cfg = GAConfig(b.population, b.generations, b.mutation_rate, b.crossover_rate, b.tournament_size, exp.run.seed)
    ga = nsga2_run(cfg, exp.objectives, exp.d, exp.K)
    names = _names(exp)
    atomic_write(out / "baseline_front.csv",
                 population_csv(ga.front.sequences, ga.front.objectives, exp.vocabulary, names, "member"))
    history = {"generations": cfg.generations, "evaluations": ga.evaluations,
               "front_sizes": [int(h.shape[0]) for h in ga.history]}
    if exp.reference_point is not None:
        history["hypervolume"] = ga.hypervolume_history(exp.reference_point)
        trajs = batch_generate(exp.run, exp.base, exp.objectives, exp.d, exp.config.batch,
                               assignment=exp.config.assignment, jobs=jobs)
        write_json(out / "budget_report.json",
                   equal_budget_report(exp.run, exp.base, exp.objectives, exp.d, exp.config.batch,
                                       exp.reference_point, b.population, exp.run.seed, trajs))
    write_json(out / "baseline_history.json", history)
    write_json(out / "manifest.json", _manifest(exp, "baseline"))
    return EXIT_OK


def cmd_pareto_oracle(exp: Experiment, out: Path, jobs: int) -> int:
    front = brute_force_pareto(exp.objectives, exp.d, exp.K)
    atomic_write(out / "pareto_front.csv",
                 population_csv(front.sequences, front.objectives, exp.vocabulary, _names(exp), "member"))
    info = {"front_size": len(front), "space_size": exp.K ** exp.d}
    info.update(_hv_entry(front.objectives, exp.reference_point))
    write_json(out / "pareto_oracle.json", info)
    write_json(out / "manifest.json", _manifest(exp, "pareto-oracle"))
    return EXIT_OK


def cmd_weights(exp: Experiment, out: Path, jobs: int) -> int:
    n_guided = len(exp.objectives) if exp.run.guided is None else sum(exp.run.guided)
    lattice = WeightLattice(n_guided, exp.run.num_div)
    info = {"objectives": n_guided, "divisions": exp.run.num_div, "count": lattice.count,
            "materialized": lattice.count <= EAGER_LIMIT}
    if info["materialized"]:
        W = lattice.to_array()
        rows = "".join(",".join(format(v, ".17g") for v in w) + "\n" for w in W)
        atomic_write(out / "weights.csv", rows)
    write_json(out / "weights.json", info)
    print(lattice.count)
    return EXIT_OK


def nearest_hamming(seqs: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Hamming distance from each sequence to its closest member of ``reference``."""
    if len(seqs) == 0:
        return np.zeros(0, dtype=np.int64)
    return (seqs[:, None, :] != reference[None, :, :]).sum(axis=2).min(axis=1)


def cmd_evaluate(results: Path, ref_override, out: Path | None) -> int:
    manifest = read_json(results / "manifest.json")
    try:
        cfg = ExperimentConfig.model_validate(manifest["config"])
    except (KeyError, ValueError) as exc:
        raise IntegrityError(f"{results / 'manifest.json'}: unusable config copy ({exc})") from None
    exp = resolve(cfg, manifest.get("config_dir", "."), seed=manifest.get("seed"))
    names = _names(exp)
    seqs, stored, _ = read_population(results / "final.csv", exp.vocabulary, names)
    bad = []
    for n, (x, f) in enumerate(zip(seqs, stored)):
        again = evaluate_all(x, exp.objectives)
        if not np.allclose(again, f, rtol=1e-12, atol=1e-12):
            bad.append((n, exp.vocabulary.decode(x), f.tolist(), again.tolist()))
    if bad:
        for n, s, was, now in bad:
            print(f"integrity mismatch: row {n} {s}: stored {was} recomputed {now}", file=sys.stderr)
        return EXIT_INTEGRITY
    ref = exp.reference_point if ref_override is None else np.asarray(ref_override, dtype=float)
    if ref is not None and ref.size != len(names):
        raise ConfigError(f"--ref: need {len(names)} values")
    # the base dataset is the reference set
    nearest = nearest_hamming(seqs, exp.base.sequences)
    entropy = np.array([shannon_entropy(x) for x in seqs])
    report = {
        "rows": int(len(seqs)),
        "integrity_mismatches": 0,
        "front_sizes": [len(f) for f in non_dominated_sort(stored)] if len(seqs) else [],
        "mean_hamming_to_reference": float(nearest.mean()) if nearest.size else None,
        "entropy": {"mean": float(entropy.mean()), "std": float(entropy.std()), "min": float(entropy.min()),
                    "max": float(entropy.max()), "quartiles": np.quantile(entropy, [0.25, 0.5, 0.75])}
        if len(seqs) else None,
    }
    report.update(_hv_entry(stored, ref))
    write_json((out or results) / "evaluation.json", report)
    print(f"hypervolume {report['hypervolume']}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "baseline": cmd_baseline,
    "pareto-oracle": cmd_pareto_oracle,
    "weights": cmd_weights,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mogdfm", description="Multi-objective guided discrete flow sampling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for batch runs")
        p.add_argument("--out", help="output directory (default: the config's 'output')")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("evaluate")
    p.add_argument("results", help="directory written by 'generate'")
    p.add_argument("--ref", type=lambda s: [float(v) for v in s.split(",")],
                   help="reference point, comma separated (default: from the config)")
    p.add_argument("--out", help="where to write evaluation.json (default: the results directory)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "evaluate":
            return cmd_evaluate(Path(args.results), args.ref, Path(args.out) if args.out else None)
        cfg = load_config(args.config)
        if cfg.mode is not None and cfg.mode != args.command:
            raise ConfigError(f"{args.config}: mode is {cfg.mode!r} but the command is {args.command!r}")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        config_dir = Path(args.config).resolve().parent
        exp = resolve(cfg, config_dir, seed=args.seed)
        if args.seed is not None:
            exp.config = exp.config.model_copy(update={"seed": args.seed})
        out = Path(args.out) if args.out else config_dir / cfg.output
        return COMMANDS[args.command](exp, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
