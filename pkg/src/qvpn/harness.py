"""Experiment orchestration: scenario sweeps, fairness statistics, Pearson r.

A Scenario bundles a topology, a workload (explicit or generation parameters),
an optimizer choice, and one optional sweep axis. run_scenario evaluates every
(sweep value, repetition) cell and returns an ordered result bundle stamped
with a hash of the full configuration. Failures are recorded per point; the
remaining points still run.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace, field

from .topology import NetworkGraph, save_topology
from .quantum_math import (
    DEFAULT_NOISE,
    DistillationStrategy,
    NoiseParams,
    default_strategy_catalog,
)
from .pathfinding import (
    WeightScheme,
    build_candidate_sets,
    baseline_selection,
    nearest_strategy_index,
    path_from_nodes,
)
from .workload import Workload, WorkloadParams, generate_workload, save_workload
from .allocation_lp import build_problem, solve
from . import ga_optimizer as ga
from . import rl_optimizer as rl


class DegenerateVarianceError(ValueError):
    """Pearson r is undefined: fewer than two points, or a zero-variance input."""


def pearson(xs, ys) -> float:
    """Pearson product-moment correlation coefficient."""
    xs = list(xs)
    ys = list(ys)
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise DegenerateVarianceError(f"need at least 2 points, got {n}")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    # variance indistinguishable from accumulated rounding noise counts as zero
    if sxx <= 1e-15 * n * (mx * mx + 1.0):
        raise DegenerateVarianceError("x values have (numerically) zero variance")
    if syy <= 1e-15 * n * (my * my + 1.0):
        raise DegenerateVarianceError("y values have (numerically) zero variance")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


OPTIMIZERS = ("baseline-hop", "baseline-inv-egr", "baseline-inv-egr-sq", "ga", "rl")
SWEEP_AXES = ("p_max", "strategy_count", "pairs_per_org", "k", "r_max")

_BASELINE_SCHEMES = {
    "baseline-hop": WeightScheme.HOP,
    "baseline-inv-egr": WeightScheme.INV_EGR,
    "baseline-inv-egr-sq": WeightScheme.INV_EGR_SQ,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: NetworkGraph
    workload: Workload | None = None
    workload_params: WorkloadParams | None = None
    optimizer: str = "baseline-hop"
    ga_config: ga.GaConfig | None = None
    rl_config: rl.TrainConfig | None = None
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    repetitions: int = 1
    seeds: tuple = (0,)
    k: int = 5
    p_max: int = 3
    catalog: tuple = field(default_factory=default_strategy_catalog)
    noise: NoiseParams = DEFAULT_NOISE
    baseline_threshold: float = 0.992  # greedy baselines distill links to (nearest of) this

    def __post_init__(self):
        if (self.workload is None) == (self.workload_params is None):
            raise ValueError("exactly one of workload / workload_params must be set")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if len(self.seeds) != self.repetitions:
            raise ValueError(f"need {self.repetitions} seeds, got {len(self.seeds)}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("repetition seeds must be distinct")
        if self.sweep_axis is None:
            if self.sweep_values:
                raise ValueError("sweep_values given without a sweep_axis")
        else:
            if self.sweep_axis not in SWEEP_AXES:
                raise ValueError(f"unknown sweep axis {self.sweep_axis!r}, expected one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise ValueError("sweep_axis set but sweep_values empty")
            for a, b in zip(self.sweep_values, self.sweep_values[1:]):
                if not a < b:
                    raise ValueError(f"sweep values must be strictly increasing, got {a} before {b}")
            if self.sweep_axis == "pairs_per_org" and self.workload_params is None:
                raise ValueError("pairs_per_org sweep needs workload_params, not a fixed workload")


@dataclass(frozen=True)
class PointResult:
    axis_value: object
    repetition: int
    seed: int
    status: str  # "optimal" | "infeasible" | "error"
    wegr: float
    seconds: float
    selection: dict | None = None
    solution: object | None = None
    trace: object | None = None
    error: str | None = None


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    config_hash: str
    points: tuple

    def point(self, axis_value, repetition=0):
        for p in self.points:
            if p.axis_value == axis_value and p.repetition == repetition:
                return p
        raise KeyError(f"no point for axis_value={axis_value!r} repetition={repetition}")


def scenario_config_text(scenario: Scenario) -> str:
    """Canonical text dump of everything that influences a scenario's results."""
    parts = [
        f"name={scenario.name}",
        "topology:\n" + save_topology(scenario.graph),
        f"workload={'<explicit>' if scenario.workload is not None else None}",
    ]
    if scenario.workload is not None:
        parts.append(save_workload(scenario.workload))
    if scenario.workload_params is not None:
        parts.append(repr(scenario.workload_params))
    parts.extend([
        f"optimizer={scenario.optimizer}",
        f"ga={scenario.ga_config!r}",
        f"rl={scenario.rl_config!r}",
        f"sweep={scenario.sweep_axis}:{scenario.sweep_values!r}",
        f"repetitions={scenario.repetitions} seeds={scenario.seeds!r}",
        f"k={scenario.k} p_max={scenario.p_max}",
        f"catalog={[s.link_threshold for s in scenario.catalog]!r}",
        f"max_rounds={[s.max_rounds for s in scenario.catalog]!r}",
        f"noise={scenario.noise!r}",
        f"baseline_threshold={scenario.baseline_threshold!r}",
    ])
    return "\n".join(parts)


def scenario_hash(scenario: Scenario) -> str:
    return hashlib.sha256(scenario_config_text(scenario).encode()).hexdigest()


def point_workload(scenario: Scenario, axis_value, seed):
    """The workload a sweep point actually optimizes (regenerated or rebuilt)."""
    if scenario.sweep_axis == "pairs_per_org":
        params = replace(scenario.workload_params, pairs_per_org=axis_value)
        return generate_workload(scenario.graph, params, seed)
    if scenario.workload is not None:
        wl = scenario.workload
    else:
        wl = generate_workload(scenario.graph, scenario.workload_params, seed)
    if scenario.sweep_axis == "r_max":
        pairs = tuple(replace(p, r_max=float(axis_value)) for p in wl.user_pairs)
        wl = Workload(organizations=wl.organizations, user_pairs=pairs, seed=wl.seed)
    return wl


def _run_point(scenario: Scenario, axis_value, repetition: int, seed: int) -> PointResult:
    start = time.perf_counter()
    p_max = axis_value if scenario.sweep_axis == "p_max" else scenario.p_max
    k = axis_value if scenario.sweep_axis == "k" else scenario.k
    if scenario.sweep_axis == "strategy_count":
        if not 1 <= axis_value <= len(scenario.catalog):
            raise ValueError(f"strategy count {axis_value} outside catalog of {len(scenario.catalog)}")
        catalog = scenario.catalog[:axis_value]
    else:
        catalog = tuple(scenario.catalog)

    workload = point_workload(scenario, axis_value, seed)
    candidates = build_candidate_sets(scenario.graph, workload, k=k)
    trace = None

    if scenario.optimizer in _BASELINE_SCHEMES:
        idx = nearest_strategy_index(catalog, scenario.baseline_threshold)
        selection = baseline_selection(
            scenario.graph, workload, candidates, _BASELINE_SCHEMES[scenario.optimizer],
            p_max=p_max, strategy_index=idx, catalog=catalog)
    elif scenario.optimizer == "ga":
        problem = ga.GaProblem(scenario.graph, workload, candidates, catalog,
                               noise=scenario.noise, p_max=p_max)
        config = replace(scenario.ga_config or ga.GaConfig(), seed=seed)
        idx = nearest_strategy_index(catalog, scenario.baseline_threshold)
        heuristics = [
            baseline_selection(scenario.graph, workload, candidates, scheme,
                               p_max=p_max, strategy_index=idx, catalog=catalog)
            for scheme in _BASELINE_SCHEMES.values()
        ]
        population = ga.initialize_population(problem, config, seed_heuristics=heuristics)
        trace = ga.evolve(population, config, problem)
        selection = problem.decode(trace.best_genome)
    else:  # "rl"
        problem = rl.RlProblem(workload, candidates, catalog[0], p_max=p_max)
        config = replace(scenario.rl_config or rl.TrainConfig(), seed=seed)
        reward_cache = {}

        def environment(selection):
            key = tuple(sorted((pk, tuple(p.nodes for p, _ in chosen))
                               for pk, chosen in selection.items()))
            if key not in reward_cache:
                prob = build_problem(scenario.graph, workload, selection,
                                     noise=scenario.noise, p_max=p_max)
                sol = solve(prob)
                reward_cache[key] = sol.wegr
            return reward_cache[key]

        policy = rl.PolicyNetwork.init(problem, seed=seed)
        _, trace, _ = rl.train(policy, problem, config, environment)
        selection = rl.greedy_selection(policy, problem)

    solution = solve(build_problem(scenario.graph, workload, selection,
                                   noise=scenario.noise, p_max=p_max))
    seconds = time.perf_counter() - start
    return PointResult(
        axis_value=axis_value, repetition=repetition, seed=seed,
        status=solution.status, wegr=solution.wegr, seconds=seconds,
        selection=selection, solution=solution, trace=trace)


def run_scenario(scenario: Scenario, max_workers: int = 1) -> ScenarioResult:
    """Evaluate every sweep point x repetition; errors are recorded per point."""
    config_hash = scenario_hash(scenario)
    axis_values = scenario.sweep_values if scenario.sweep_axis is not None else (None,)
    tasks = [(value, rep, scenario.seeds[rep])
             for value in axis_values for rep in range(scenario.repetitions)]

    def guarded(task):
        value, rep, seed = task
        try:
            return _run_point(scenario, value, rep, seed)
        except Exception as exc:  # recorded, sweep continues
            return PointResult(axis_value=value, repetition=rep, seed=seed,
                               status="error", wegr=float("nan"), seconds=0.0,
                               error=f"{type(exc).__name__}: {exc}")

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            points = tuple(pool.map(guarded, tasks))
    else:
        points = tuple(guarded(t) for t in tasks)
    return ScenarioResult(scenario=scenario, config_hash=config_hash, points=points)


@dataclass(frozen=True)
class PairFairnessRow:
    pair_key: tuple
    true_egr: float
    weighted_egr: float
    demand_weight: float  # lambda
    fidelity_threshold: float
    min_hops: float  # nan when the pair received no rate
    composite: float  # w * lambda / (F * L); nan when min_hops undefined


@dataclass(frozen=True)
class FairnessReport:
    pair_rows: tuple  # PairFairnessRow, descending true EGR
    corr_demand: float
    corr_fidelity: float
    corr_hops: float
    corr_composite: float
    org_true_egr: tuple  # ((org_id, value), ...) ordered by org id
    org_weighted_egr: tuple
    total_wegr: float
    zero_rate_pairs: int
    degenerate_metrics: tuple  # metric names whose correlation was undefined


def fairness_report(solution, workload: Workload, selection) -> FairnessReport:
    """Distributional statistics of an optimal allocation.

    Pairs with zero rate are excluded from the correlation inputs and counted
    in zero_rate_pairs. A metric with (numerically) zero variance across the
    remaining pairs yields a nan correlation and is listed in
    degenerate_metrics; if fewer than two pairs have positive rate the
    correlations are undefined as a whole and DegenerateVarianceError is
    raised.
    """
    if solution.status != "optimal":
        raise ValueError(f"fairness report needs an optimal solution, got {solution.status!r}")
    rate_tol = 1e-9
    for pk, nodes in solution.rates:
        if pk not in selection:
            raise ValueError(f"solution rate for pair {pk!r} absent from selection")
    rows = []
    for pair in workload.user_pairs:
        org = workload.org_by_id(pair.org_id)
        hops = [len(nodes) - 1
                for (pk, nodes), rate in solution.rates.items()
                if pk == pair.key and rate > rate_tol]
        if hops:
            true_egr = solution.true_egr_per_pair[pair.key]
            min_hops = float(min(hops))
            composite = org.weight * pair.weight / (pair.fidelity_threshold * min_hops)
        else:
            true_egr = 0.0
            min_hops = float("nan")
            composite = float("nan")
        rows.append(PairFairnessRow(
            pair_key=pair.key, true_egr=true_egr,
            weighted_egr=org.weight * pair.weight * true_egr,
            demand_weight=pair.weight, fidelity_threshold=pair.fidelity_threshold,
            min_hops=min_hops, composite=composite))
    rows.sort(key=lambda r: (-r.true_egr, r.pair_key))

    active = [r for r in rows if not math.isnan(r.min_hops)]
    zero_rate = len(rows) - len(active)
    if len(active) < 2:
        raise DegenerateVarianceError(
            f"correlations need at least 2 pairs with positive rate, got {len(active)}")

    truths = [r.true_egr for r in active]
    correlations = {}
    degenerate = []
    for name, values in (
        ("demand", [r.demand_weight for r in active]),
        ("fidelity", [r.fidelity_threshold for r in active]),
        ("hops", [r.min_hops for r in active]),
        ("composite", [r.composite for r in active]),
    ):
        try:
            correlations[name] = pearson(values, truths)
        except DegenerateVarianceError:
            correlations[name] = float("nan")
            degenerate.append(name)

    org_true = {org.id: 0.0 for org in workload.organizations}
    org_weighted = {org.id: 0.0 for org in workload.organizations}
    for r in rows:
        org_true[r.pair_key[0]] += r.true_egr
        org_weighted[r.pair_key[0]] += r.weighted_egr
    return FairnessReport(
        pair_rows=tuple(rows),
        corr_demand=correlations["demand"],
        corr_fidelity=correlations["fidelity"],
        corr_hops=correlations["hops"],
        corr_composite=correlations["composite"],
        org_true_egr=tuple(sorted(org_true.items())),
        org_weighted_egr=tuple(sorted(org_weighted.items())),
        total_wegr=solution.wegr,
        zero_rate_pairs=zero_rate,
        degenerate_metrics=tuple(degenerate),
    )


# Selection file: line-oriented, header "qvpn-selection v1", then one line per
# active (pair, path, strategy):
#   select <org> <a> <b> path <node> <node> ... threshold <t> max_rounds <n>
SELECTION_HEADER = "qvpn-selection v1"


def save_selection(selection) -> str:
    out = [SELECTION_HEADER]
    for pair_key in sorted(selection):
        org, a, b = pair_key
        for path, strategy in selection[pair_key]:
            nodes = " ".join(path.nodes)
            out.append(f"select {org} {a} {b} path {nodes} "
                       f"threshold {strategy.link_threshold!r} max_rounds {strategy.max_rounds}")
    return "\n".join(out) + "\n"


def load_selection(source: str, graph: NetworkGraph):
    """Parse a selection document against a graph; round-trips save_selection."""
    lines = source.splitlines()
    if not lines or lines[0].strip() != SELECTION_HEADER:
        raise ValueError(f"missing selection header {SELECTION_HEADER!r}")
    selection = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = text.split()
        try:
            if tokens[0] != "select" or tokens[4] != "path":
                raise ValueError("expected 'select <org> <a> <b> path ...'")
            org, a, b = tokens[1:4]
            t_idx = tokens.index("threshold")
            if tokens[t_idx + 2] != "max_rounds":
                raise ValueError("expected 'threshold <t> max_rounds <n>'")
            nodes = tuple(tokens[5:t_idx])
            strategy = DistillationStrategy(float(tokens[t_idx + 1]), int(tokens[t_idx + 3]))
            pair_key = (org, a, b)
            if not nodes or nodes[0] != a or nodes[-1] != b:
                raise ValueError("path must run from the pair's first endpoint to its second")
            path = path_from_nodes(graph, pair_key, nodes)
        except (ValueError, IndexError, KeyError) as exc:
            raise ValueError(f"selection line {lineno}: {exc}") from None
        selection.setdefault(pair_key, []).append((path, strategy))
    return selection
