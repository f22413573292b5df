"""Command-line entry points: run, sweep, check-graph.

All run artifacts are deterministic in (config, seed): the trajectory log,
final parameter snapshot, and summary record never change across reruns.
Wall-clock timing goes to a separate run_info.json that sits outside the
determinism contract.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import copy
import json
import os
import sys
import time
from pathlib import Path

import yaml

from resilient_marl.config import (
    ConfigError,
    ExperimentConfig,
    build_simulation,
    config_from_dict,
    load_config,
    resolve_graph,
)
from resilient_marl.engine import SimulationError, run
from resilient_marl.graphs import (
    GraphError,
    PlacementError,
    adversary_fractions,
    is_r_local,
    max_r_robustness,
)
from resilient_marl.mdp import NonErgodicChainError

OUT_ROOT_ENV = "RESILIENT_MARL_OUT"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _resolve_out_dir(cfg: ExperimentConfig, cli_out, config_path) -> Path:
    if cli_out:
        return Path(cli_out)
    if cfg.out:
        return Path(cfg.out)
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    stem = Path(config_path).stem if config_path else "experiment"
    return root / f"{stem}.seed{cfg.seed}"


def run_experiment(cfg: ExperimentConfig, out_dir, quiet: bool = False) -> dict:
    """Execute one experiment and write its artifacts under out_dir.

    Writes trajectory.jsonl (metadata header, metric rows, trim events),
    final_params.json, summary.json, and run_info.json. Returns the
    summary record.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = build_simulation(cfg)
    config_doc = cfg.to_dict()
    started = time.time()
    log = run(sim, config_doc=config_doc)
    duration = time.time() - started

    log.write_jsonl(out_dir / "trajectory.jsonl")

    final = log.rows[-1]
    summary = {
        "final_j_oracle": final.j_oracle,
        "final_disagreement": final.disagreement,
        "initial_j_oracle": log.rows[0].j_oracle,
        "rounds_executed": log.metadata["rounds_executed"],
        "seed": cfg.seed,
        "config_sha256": log.metadata["config_sha256"],
        "config": config_doc,
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "final_params.json", "w", encoding="utf-8") as fh:
        json.dump(log.final_params, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "run_info.json", "w", encoding="utf-8") as fh:
        json.dump({"started_unix": started, "duration_sec": duration}, fh, indent=2)
        fh.write("\n")
    if not quiet:
        print(
            f"[resilient-marl] rounds={summary['rounds_executed']} "
            f"J={summary['final_j_oracle']:.6f} "
            f"disagreement={summary['final_disagreement']:.3e} -> {out_dir}"
        )
    return summary


def check_graph(cfg: ExperimentConfig) -> dict:
    """Topology diagnostics: connectivity, degrees, locality, robustness.

    Never rejects a non-F-local placement; it reports it, so misconfigured
    setups can be inspected before a run.
    """
    g = resolve_graph(cfg, enforce_f_local=False)
    report = {
        "n_nodes": g.n_nodes,
        "n_phases": g.n_phases,
        "connected": [bool(g.is_connected(p)) for p in range(g.n_phases)],
        "degrees": {
            "min": int(g.degrees(0).min()),
            "mean": float(g.degrees(0).mean()),
            "max": int(g.degrees(0).max()),
        },
        "adversaries": sorted(g.adversary_set),
        "trim_f": g.trim_f,
        "f_local": is_r_local(g, g.adversary_set, g.trim_f),
        "adversary_fraction_max": float(adversary_fractions(g).max()),
    }
    if g.static and g.n_nodes <= 16:
        report["max_r_robust"] = max_r_robustness(g)
    else:
        report["max_r_robust"] = None
        report["robustness_skipped"] = "graph is time-varying or larger than the 16-node cap"
    return report


def _print_graph_report(report):
    print(f"nodes: {report['n_nodes']}  phases: {report['n_phases']}")
    for p, ok in enumerate(report["connected"]):
        print(f"connected[phase {p}]: {ok}")
    if not all(report["connected"]):
        print("WARNING: graph has a disconnected phase; consensus cannot reach all agents")
    deg = report["degrees"]
    print(f"degrees: min {deg['min']} / mean {deg['mean']:.2f} / max {deg['max']}")
    print(f"adversaries: {report['adversaries']} (trim_f={report['trim_f']})")
    print(f"f_local: {report['f_local']}")
    print(f"adversary neighbor fraction (max over regular nodes): "
          f"{report['adversary_fraction_max']:.3f}")
    if report["max_r_robust"] is None:
        print(f"r-robustness: skipped ({report['robustness_skipped']})")
    else:
        print(f"r-robustness: holds up to r = {report['max_r_robust']}")


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _sweep_worker(args):
    doc, out_dir, quiet = args
    cfg = config_from_dict(doc)
    summary = run_experiment(cfg, out_dir, quiet=quiet)
    return {"out": str(out_dir), "final_j_oracle": summary["final_j_oracle"],
            "final_disagreement": summary["final_disagreement"],
            "rounds_executed": summary["rounds_executed"], "seed": summary["seed"]}


def run_sweep(sweep_doc: dict, out_root, jobs: int = 1, quiet: bool = False) -> list[dict]:
    """Run every override of a sweep document, one directory per run.

    Each run gets seed = base seed + run index unless its override pins a
    seed explicitly. Runs execute in parallel up to ``jobs``.
    """
    if not isinstance(sweep_doc, dict) or "base" not in sweep_doc or "runs" not in sweep_doc:
        raise ConfigError("<sweep>", "sweep document needs 'base' and 'runs'")
    base = sweep_doc["base"]
    runs = sweep_doc["runs"]
    if not isinstance(runs, list) or not runs:
        raise ConfigError("<sweep>.runs", "expected a nonempty list of runs")
    base_seed = base.get("seed", 0)
    out_root = Path(out_root)
    jobs = max(1, jobs)
    tasks = []
    for idx, entry in enumerate(runs):
        if not isinstance(entry, dict):
            raise ConfigError(f"<sweep>.runs[{idx}]", "expected a mapping")
        overrides = entry.get("overrides", {})
        name = entry.get("name", f"run_{idx:03d}")
        doc = _deep_merge(base, overrides)
        if "seed" not in overrides:
            doc["seed"] = base_seed + idx
        doc.pop("out", None)
        config_from_dict(doc)  # fail fast on any bad override before launching
        tasks.append((doc, out_root / name, quiet))
    if jobs == 1:
        results = [_sweep_worker(task) for task in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "sweep_summary.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return results


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="resilient-marl",
        description="Decentralized actor-critic simulator with trimmed-consensus defense",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True, help="YAML or JSON experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--quiet", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a list of config overrides")
    p_sweep.add_argument("--config", required=True, help="sweep document with base + runs")
    p_sweep.add_argument("--seed", type=int, default=None, help="override the base seed")
    p_sweep.add_argument("--out", default=None, help="output root directory")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p_sweep.add_argument("--quiet", action="store_true")

    p_check = sub.add_parser("check-graph", help="print topology diagnostics")
    p_check.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                doc = cfg.to_dict()
                doc["seed"] = args.seed
                cfg = config_from_dict(doc)
            out_dir = _resolve_out_dir(cfg, args.out, args.config)
            run_experiment(cfg, out_dir, quiet=args.quiet)
        elif args.command == "sweep":
            with open(args.config, "r", encoding="utf-8") as fh:
                sweep_doc = yaml.safe_load(fh.read())
            if args.seed is not None and isinstance(sweep_doc, dict):
                sweep_doc.setdefault("base", {})["seed"] = args.seed
            out_root = Path(args.out) if args.out else (
                Path(os.environ.get(OUT_ROOT_ENV, "runs")) / f"{Path(args.config).stem}-sweep"
            )
            run_sweep(sweep_doc, out_root, jobs=args.jobs, quiet=args.quiet)
        else:
            cfg = load_config(args.config)
            _print_graph_report(check_graph(cfg))
    except (ConfigError, GraphError, PlacementError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, NonErgodicChainError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
