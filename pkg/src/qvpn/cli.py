"""Command-line front end.

    qvpn <capacity|paths|allocate|ga|rl|report> --config <file> --out <dir>

Configs are JSON documents with a versioned schema: every config carries
{"version": 1, "seed": <int>} plus command-specific keys (see README).
All randomness derives from the top-level seed. Outputs are CSV files
(floats printed with repr for byte-stable reruns) plus a machine-readable
manifest.json; wall-clock timings live in the manifest only, never in CSV.
Pass "emit_plots": true to also write gnuplot scripts next to the CSVs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

from .topology import load_topology, engineer_repeaters
from .quantum_math import (
    default_strategy_catalog,
    load_strategy_catalog,
)
from .pathfinding import (
    WeightScheme,
    build_candidate_sets,
    baseline_selection,
    nearest_strategy_index,
)
from .workload import WorkloadParams, generate_workload, load_workload
from .allocation_lp import build_problem, solve
from . import ga_optimizer as ga
from . import rl_optimizer as rl
from .harness import (
    DegenerateVarianceError,
    Scenario,
    fairness_report,
    load_selection,
    point_workload,
    run_scenario,
    save_selection,
)


class ConfigError(ValueError):
    """Malformed or incomplete CLI configuration document."""


_BASELINES = {
    "hop": WeightScheme.HOP,
    "inv-egr": WeightScheme.INV_EGR,
    "inv-egr-sq": WeightScheme.INV_EGR_SQ,
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    try:
        import numpy as np
        if isinstance(value, (np.floating, np.integer)):
            return repr(float(value)) if isinstance(value, np.floating) else str(int(value))
    except ImportError:
        pass
    text = str(value)
    if "," in text or "\n" in text:
        raise ValueError(f"CSV cell may not contain commas or newlines: {text!r}")
    return text


def _write_csv(out_dir: Path, name: str, header, rows, config_hash: str, comments=()):
    lines = [f"# config_hash={config_hash}"]
    lines.extend(f"# {c}" for c in comments)
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    (out_dir / name).write_text("\n".join(lines) + "\n")
    return name


def _write_manifest(out_dir: Path, payload: dict):
    (out_dir / "manifest.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_plot(out_dir: Path, name: str, script: str, enabled: bool):
    if not enabled:
        return None
    (out_dir / name).write_text(script)
    return name


_GNUPLOT_PRELUDE = (
    'set datafile separator ","\n'
    'set datafile commentschars "#"\n'
    "set key autotitle columnhead\n"
    "set grid\n"
)


def _load_config(path: str) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    if config.get("version") != 1:
        raise ConfigError(f"unsupported config version {config.get('version')!r}, expected 1")
    if not isinstance(config.get("seed"), int):
        raise ConfigError("config needs an integer top-level \"seed\"")
    return config


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config is missing required key {key!r}")
    return config[key]


def _read_ref(config: dict, key: str, hasher) -> str:
    path = _require(config, key)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {key} file {path!r}: {exc}") from None
    hasher.update(f"\n--{key}--\n".encode())
    hasher.update(text.encode())
    return text


def _load_graph(config, hasher):
    graph = load_topology(_read_ref(config, "topology", hasher))
    eng = config.get("engineer")
    if eng is not None:
        graph = engineer_repeaters(graph, threshold_km=float(eng["threshold_km"]),
                                   spacing_km=float(eng["spacing_km"]))
    return graph


def _workload_params(config) -> WorkloadParams:
    raw = dict(config["workload_params"])
    for key in ("org_weight_range", "pair_weight_range", "fidelity_range"):
        if key in raw:
            raw[key] = tuple(raw[key])
    try:
        return WorkloadParams(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad workload_params: {exc}") from None


def _load_workload(config, graph, hasher):
    has_file = "workload" in config
    has_params = "workload_params" in config
    if has_file == has_params:
        raise ConfigError("config needs exactly one of \"workload\" / \"workload_params\"")
    if has_file:
        return load_workload(_read_ref(config, "workload", hasher))
    params = _workload_params(config)
    hasher.update(f"\n--workload_params--\n{params!r}".encode())
    return generate_workload(graph, params, config["seed"])


def _load_catalog(config, hasher):
    if "strategies" in config:
        catalog = load_strategy_catalog(_read_ref(config, "strategies", hasher))
    else:
        catalog = default_strategy_catalog()
    count = config.get("strategy_count")
    if count is not None:
        if not 1 <= count <= len(catalog):
            raise ConfigError(f"strategy_count {count} outside catalog of {len(catalog)}")
        catalog = catalog[:count]
    return tuple(catalog)


def _hasher(config) -> "hashlib._Hash":
    h = hashlib.sha256()
    h.update(json.dumps(config, sort_keys=True).encode())
    return h


def _rates_outputs(out_dir, workload, selection, solution, config_hash, emit_plots):
    rate_rows = []
    for pair_key in sorted(selection):
        org, a, b = pair_key
        for path, strategy in selection[pair_key]:
            rate = solution.rates.get((pair_key, path.nodes), 0.0)
            rate_rows.append((org, a, b, ">".join(path.nodes),
                              strategy.link_threshold, strategy.max_rounds, rate))
    outputs = [_write_csv(out_dir, "rates.csv",
                          ("org", "src", "dst", "path", "link_threshold", "max_rounds",
                           "rate_eprps"),
                          rate_rows, config_hash)]
    pair_rows = []
    for pair in workload.user_pairs:
        true_egr = solution.true_egr_per_pair.get(pair.key, 0.0)
        pair_rows.append((*pair.key, pair.weight, pair.fidelity_threshold, true_egr))
    outputs.append(_write_csv(out_dir, "pairs.csv",
                              ("org", "src", "dst", "demand_weight", "fidelity_threshold",
                               "true_egr"),
                              pair_rows, config_hash))
    plot = _write_plot(out_dir, "rates.gp", _GNUPLOT_PRELUDE + (
        "set style data histograms\nset style fill solid 0.7\n"
        "set xtics rotate by -45\nset ylabel 'true EGR (EPR/s)'\n"
        "plot 'pairs.csv' using 6:xtic(stringcolumn(1).'-'.stringcolumn(2).'-'.stringcolumn(3)) "
        "title 'true EGR'\n"), emit_plots)
    if plot:
        outputs.append(plot)
    return outputs


def cmd_capacity(config, out_dir):
    hasher = _hasher(config)
    graph = _load_graph(config, hasher)
    config_hash = hasher.hexdigest()
    rows = [(l.endpoints[0], l.endpoints[1], l.length_km, l.multiplex, l.alpha,
             l.base_fidelity, l.capacity_eprps) for l in graph.links]
    outputs = [_write_csv(out_dir, "links.csv",
                          ("src", "dst", "length_km", "multiplex", "alpha", "base_fidelity",
                           "capacity_eprps"),
                          rows, config_hash)]
    plot = _write_plot(out_dir, "links.gp", _GNUPLOT_PRELUDE + (
        "set xlabel 'length (km)'\nset ylabel 'capacity (EPR/s)'\nset logscale y\n"
        "plot 'links.csv' using 3:7 with points pt 7 title 'links'\n"),
        config.get("emit_plots", False))
    if plot:
        outputs.append(plot)
    return {
        "config_hash": config_hash,
        "num_nodes": len(graph.nodes),
        "num_repeaters": sum(1 for n in graph.nodes if n.is_repeater),
        "num_links": len(graph.links),
        "outputs": outputs,
    }


def cmd_paths(config, out_dir):
    hasher = _hasher(config)
    graph = _load_graph(config, hasher)
    workload = _load_workload(config, graph, hasher)
    config_hash = hasher.hexdigest()
    k = config.get("k", 5)
    candidates = build_candidate_sets(graph, workload, k=k)
    rows = []
    for pair in workload.user_pairs:
        for rank, path in enumerate(candidates[pair.key]):
            rows.append((*pair.key, rank, path.hop_count, path.bottleneck_capacity,
                         ">".join(path.nodes)))
    outputs = [_write_csv(out_dir, "paths.csv",
                          ("org", "src", "dst", "rank", "hops", "bottleneck_eprps", "path"),
                          rows, config_hash)]
    return {
        "config_hash": config_hash,
        "k": k,
        "num_pairs": len(workload.user_pairs),
        "num_paths": len(rows),
        "outputs": outputs,
    }


def _solve_selection(graph, workload, selection, p_max):
    problem = build_problem(graph, workload, selection, p_max=p_max)
    return solve(problem)


def cmd_allocate(config, out_dir):
    hasher = _hasher(config)
    graph = _load_graph(config, hasher)
    workload = _load_workload(config, graph, hasher)
    catalog = _load_catalog(config, hasher)
    p_max = config.get("p_max", 3)
    source = _require(config, "source")
    if "selection" in source:
        sel_path = source["selection"]
        try:
            text = Path(sel_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read selection file {sel_path!r}: {exc}") from None
        hasher.update(b"\n--selection--\n" + text.encode())
        selection = load_selection(text, graph)
    elif "baseline" in source:
        scheme = _BASELINES.get(source["baseline"])
        if scheme is None:
            raise ConfigError(f"unknown baseline {source['baseline']!r}, "
                              f"expected one of {sorted(_BASELINES)}")
        candidates = build_candidate_sets(graph, workload, k=config.get("k", 5))
        idx = nearest_strategy_index(catalog, source.get("threshold", 0.992))
        selection = baseline_selection(graph, workload, candidates, scheme,
                                       p_max=p_max, strategy_index=idx, catalog=catalog)
    else:
        raise ConfigError("source must contain \"selection\" (file) or \"baseline\" (scheme)")
    config_hash = hasher.hexdigest()
    solution = _solve_selection(graph, workload, selection, p_max)
    outputs = _rates_outputs(out_dir, workload, selection, solution, config_hash,
                             config.get("emit_plots", False))
    return {
        "config_hash": config_hash,
        "status": solution.status,
        "wegr": solution.wegr,
        "outputs": outputs,
    }


def cmd_ga(config, out_dir):
    hasher = _hasher(config)
    graph = _load_graph(config, hasher)
    workload = _load_workload(config, graph, hasher)
    catalog = _load_catalog(config, hasher)
    p_max = config.get("p_max", 3)
    k = config.get("k", 5)
    raw = dict(config.get("ga", {}))
    if "seed" in raw:
        raise ConfigError("ga block may not carry its own seed; use the top-level seed")
    try:
        ga_config = replace(ga.GaConfig(**raw), seed=config["seed"])
    except TypeError as exc:
        raise ConfigError(f"bad ga block: {exc}") from None
    config_hash = hasher.hexdigest()

    candidates = build_candidate_sets(graph, workload, k=k)
    problem = ga.GaProblem(graph, workload, candidates, catalog, p_max=p_max)
    idx = nearest_strategy_index(catalog, config.get("baseline_threshold", 0.992))
    heuristics = [
        baseline_selection(graph, workload, candidates, scheme,
                           p_max=p_max, strategy_index=idx, catalog=catalog)
        for scheme in _BASELINES.values()
    ]
    population = ga.initialize_population(problem, ga_config, seed_heuristics=heuristics)
    trace = ga.evolve(population, ga_config, problem)
    selection = problem.decode(trace.best_genome)
    solution = _solve_selection(graph, workload, selection, p_max)

    trace_rows = list(zip(range(len(trace.best_fitness)), trace.best_fitness,
                          trace.mean_fitness))
    outputs = [_write_csv(out_dir, "trace.csv",
                          ("generation", "best_wegr", "mean_fitness"),
                          trace_rows, config_hash)]
    (out_dir / "selection.txt").write_text(save_selection(selection))
    outputs.append("selection.txt")
    outputs.extend(_rates_outputs(out_dir, workload, selection, solution, config_hash,
                                  config.get("emit_plots", False)))
    plot = _write_plot(out_dir, "trace.gp", _GNUPLOT_PRELUDE + (
        "set xlabel 'generation'\nset ylabel 'W-EGR'\n"
        "plot 'trace.csv' using 1:2 with lines lw 2 title 'best', "
        "'trace.csv' using 1:3 with lines title 'population mean'\n"),
        config.get("emit_plots", False))
    if plot:
        outputs.append(plot)
    return {
        "config_hash": config_hash,
        "status": solution.status,
        "wegr": trace.best_wegr,
        "lp_solves": trace.lp_solves,
        "generations": ga_config.generations,
        "seconds": trace.seconds,
        "outputs": outputs,
    }


def cmd_rl(config, out_dir):
    hasher = _hasher(config)
    graph = _load_graph(config, hasher)
    workload = _load_workload(config, graph, hasher)
    catalog = _load_catalog(config, hasher)
    p_max = config.get("p_max", 3)
    k = config.get("k", 5)
    hidden = tuple(config.get("hidden", (128,)))
    raw = dict(config.get("rl", {}))
    if "seed" in raw:
        raise ConfigError("rl block may not carry its own seed; use the top-level seed")
    try:
        rl_config = replace(rl.TrainConfig(**raw), seed=config["seed"])
    except TypeError as exc:
        raise ConfigError(f"bad rl block: {exc}") from None
    config_hash = hasher.hexdigest()

    candidates = build_candidate_sets(graph, workload, k=k)
    problem = rl.RlProblem(workload, candidates, catalog[0], p_max=p_max)
    reward_cache = {}

    def environment(selection):
        key = tuple(sorted((pk, tuple(p.nodes for p, _ in chosen))
                           for pk, chosen in selection.items()))
        if key not in reward_cache:
            reward_cache[key] = _solve_selection(graph, workload, selection, p_max).wegr
        return reward_cache[key]

    start = time.perf_counter()
    policy = rl.PolicyNetwork.init(problem, hidden=hidden, seed=config["seed"])
    _, trace, _ = rl.train(policy, problem, rl_config, environment)
    seconds = time.perf_counter() - start
    selection = rl.greedy_selection(policy, problem)
    solution = _solve_selection(graph, workload, selection, p_max)

    outputs = [_write_csv(out_dir, "trace.csv", ("epoch", "mean_reward"),
                          list(zip(range(len(trace)), trace)), config_hash)]
    (out_dir / "selection.txt").write_text(save_selection(selection))
    outputs.append("selection.txt")
    (out_dir / "policy.bin").write_bytes(rl.save_policy(policy))
    outputs.append("policy.bin")
    outputs.extend(_rates_outputs(out_dir, workload, selection, solution, config_hash,
                                  config.get("emit_plots", False)))
    plot = _write_plot(out_dir, "trace.gp", _GNUPLOT_PRELUDE + (
        "set xlabel 'epoch'\nset ylabel 'mean reward (W-EGR)'\n"
        "plot 'trace.csv' using 1:2 with lines lw 2 title 'reward'\n"),
        config.get("emit_plots", False))
    if plot:
        outputs.append(plot)
    return {
        "config_hash": config_hash,
        "status": solution.status,
        "wegr": solution.wegr,
        "lp_solves": len(reward_cache),
        "epochs": rl_config.epochs,
        "seconds": seconds,
        "outputs": outputs,
    }


def cmd_report(config, out_dir):
    hasher = _hasher(config)
    graph = _load_graph(config, hasher)
    catalog = _load_catalog(config, hasher)
    workload = None
    params = None
    if "workload" in config:
        workload = load_workload(_read_ref(config, "workload", hasher))
    elif "workload_params" in config:
        params = _workload_params(config)
        hasher.update(f"\n--workload_params--\n{params!r}".encode())
    else:
        raise ConfigError("config needs one of \"workload\" / \"workload_params\"")

    sweep = config.get("sweep")
    axis = values = None
    if sweep is not None:
        axis = sweep.get("axis")
        values = tuple(sweep.get("values", ()))
    repetitions = config.get("repetitions", 1)
    seeds = tuple(config.get("seeds", range(config["seed"], config["seed"] + repetitions)))

    raw_ga = dict(config.get("ga", {}))
    raw_rl = dict(config.get("rl", {}))
    if "seed" in raw_ga or "seed" in raw_rl:
        raise ConfigError("ga/rl blocks may not carry their own seed")
    try:
        scenario = Scenario(
            name=config.get("name", "report"),
            graph=graph,
            workload=workload,
            workload_params=params,
            optimizer=config.get("optimizer", "baseline-hop"),
            ga_config=ga.GaConfig(**raw_ga) if raw_ga else None,
            rl_config=rl.TrainConfig(**raw_rl) if raw_rl else None,
            sweep_axis=axis,
            sweep_values=values if values else (),
            repetitions=repetitions,
            seeds=seeds,
            k=config.get("k", 5),
            p_max=config.get("p_max", 3),
            catalog=catalog,
            baseline_threshold=config.get("baseline_threshold", 0.992),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from None
    config_hash = hasher.hexdigest()

    result = run_scenario(scenario, max_workers=config.get("max_workers", 1))
    sweep_rows = [
        (p.axis_value if p.axis_value is not None else "", p.repetition, p.seed,
         p.status, p.wegr, p.error or "")
        for p in result.points
    ]
    comments = (f"scenario_hash={result.config_hash}",)
    outputs = [_write_csv(out_dir, "sweep.csv",
                          ("axis_value", "repetition", "seed", "status", "wegr", "error"),
                          sweep_rows, config_hash, comments)]
    plot = _write_plot(out_dir, "sweep.gp", _GNUPLOT_PRELUDE + (
        f"set xlabel '{axis or 'run'}'\nset ylabel 'W-EGR'\n"
        "plot 'sweep.csv' using 1:5 with linespoints lw 2 title 'W-EGR'\n"),
        config.get("emit_plots", False))
    if plot:
        outputs.append(plot)

    manifest = {
        "config_hash": config_hash,
        "scenario_hash": result.config_hash,
        "points": [
            {"axis_value": p.axis_value, "repetition": p.repetition, "seed": p.seed,
             "status": p.status,
             "wegr": None if math.isnan(p.wegr) else p.wegr,
             "seconds": p.seconds, "error": p.error}
            for p in result.points
        ],
        "outputs": outputs,
    }

    if config.get("fairness", True):
        final = result.points[-1]
        if final.status == "optimal":
            try:
                final_workload = point_workload(scenario, final.axis_value, final.seed)
                report = fairness_report(final.solution, final_workload, final.selection)
            except DegenerateVarianceError as exc:
                manifest["fairness_skipped"] = str(exc)
            else:
                pair_rows = [(*r.pair_key, r.true_egr, r.weighted_egr, r.demand_weight,
                              r.fidelity_threshold, r.min_hops, r.composite)
                             for r in report.pair_rows]
                outputs.append(_write_csv(
                    out_dir, "fairness.csv",
                    ("org", "src", "dst", "true_egr", "weighted_egr", "demand_weight",
                     "fidelity_threshold", "min_hops", "composite"),
                    pair_rows, config_hash,
                    (f"zero_rate_pairs={report.zero_rate_pairs}",)))
                outputs.append(_write_csv(
                    out_dir, "correlations.csv", ("metric", "pearson_r"),
                    [("demand_weight", report.corr_demand),
                     ("fidelity_threshold", report.corr_fidelity),
                     ("min_hops", report.corr_hops),
                     ("composite", report.corr_composite)],
                    config_hash))
                outputs.append(_write_csv(
                    out_dir, "orgs.csv", ("org", "true_egr", "weighted_egr"),
                    [(org, true, dict(report.org_weighted_egr)[org])
                     for org, true in report.org_true_egr],
                    config_hash))
                manifest["total_wegr"] = report.total_wegr
                manifest["zero_rate_pairs"] = report.zero_rate_pairs
                plot = _write_plot(out_dir, "fairness.gp", _GNUPLOT_PRELUDE + (
                    "set xlabel 'user pair (descending true EGR)'\n"
                    "set ylabel 'EPR/s'\nset logscale y\n"
                    "plot 'fairness.csv' using 0:4 with steps lw 2 title 'true EGR', "
                    "'fairness.csv' using 0:5 with steps title 'weighted EGR'\n"),
                    config.get("emit_plots", False))
                if plot:
                    outputs.append(plot)
        else:
            manifest["fairness_skipped"] = f"final point status {final.status!r}"
    return manifest


_COMMANDS = {
    "capacity": cmd_capacity,
    "paths": cmd_paths,
    "allocate": cmd_allocate,
    "ga": cmd_ga,
    "rl": cmd_rl,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qvpn",
        description="qVPN resource management: capacities, candidate paths, "
                    "rate allocation, GA/RL selection search, sweep reports.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("capacity", "derive per-link EPR capacities from a topology file"),
        ("paths", "enumerate candidate paths for a workload"),
        ("allocate", "solve the rate-allocation LP for a selection or baseline"),
        ("ga", "genetic search over joint path/strategy selections"),
        ("rl", "policy-gradient search over path selections"),
        ("report", "scenario sweep with fairness statistics"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
    args = parser.parse_args(argv)

    try:
        config = _load_config(args.config)
    except ConfigError as exc:
        print(f"qvpn: config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    start = time.perf_counter()
    try:
        manifest = _COMMANDS[args.command](config, out_dir)
    except ConfigError as exc:
        print(f"qvpn: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"qvpn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest.update({
        "command": args.command,
        "version": 1,
        "seed": config["seed"],
        "total_seconds": time.perf_counter() - start,
    })
    _write_manifest(out_dir, manifest)
    status = manifest.get("status")
    wegr = manifest.get("wegr", manifest.get("total_wegr"))
    summary = f"qvpn {args.command}: wrote {len(manifest['outputs'])} outputs to {out_dir}"
    if status is not None:
        summary += f" (status={status}"
        summary += f", wegr={wegr})" if wegr is not None else ")"
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
