"""Genetic search over joint (path, distillation strategy) assignments.

A genome is a flat list of (path index, strategy index) genes, p_max slots
per user pair in a fixed pair order. Fitness is the W-EGR of the decoded
selection through the allocation LP; infeasible selections score 0 so the
search can walk out of infeasible regions. Random streams are derived per
(seed, generation, slot), so results do not depend on evaluation order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .allocation_lp import SolverError, wegr_of_selection
from .quantum_math import DEFAULT_NOISE


@dataclass(frozen=True)
class Genome:
    genes: tuple  # ((path_idx, strategy_idx), ...) of length num_pairs * p_max


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    generations: int = 1000
    mode: str = "dynamic"  # "dynamic" | "static"
    elitism_count: int = 1
    seed: int = 0
    # schedule endpoints; static mode holds the start values constant
    mutation_start: float = 0.3
    mutation_end: float = 0.02
    crossover_start: float = 0.9
    crossover_end: float = 0.6
    pool_start: float = 1.0
    pool_end: float = 0.2

    def __post_init__(self):
        if self.mode not in ("dynamic", "static"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("mutation_start", "mutation_end", "crossover_start",
                     "crossover_end", "pool_start", "pool_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {v}")
        if not 1 <= self.elitism_count < self.population_size:
            raise ValueError("need 1 <= elitism_count < population_size")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @classmethod
    def static_mode(cls, **overrides):
        """Truncation selection of the top 20% with fixed probabilities."""
        defaults = dict(mode="static", mutation_start=0.05, mutation_end=0.05,
                        crossover_start=0.8, crossover_end=0.8,
                        pool_start=0.2, pool_end=0.2)
        defaults.update(overrides)
        return cls(**defaults)


@dataclass
class GaTrace:
    best_fitness: list = field(default_factory=list)  # per generation, incl. initial
    mean_fitness: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_genome: Genome | None = None
    best_wegr: float = 0.0
    lp_solves: int = 0


def dynamic_schedule(generation: int, total: int, config: GaConfig = GaConfig()):
    """Linear decay of (selection pool fraction, mutation, crossover).

    Generation 0 returns the start values, generation total-1 the end values,
    the midpoint their arithmetic mean.
    """
    if not 0 <= generation < total:
        raise ValueError(f"generation {generation} outside [0,{total})")
    t = generation / (total - 1) if total > 1 else 1.0
    lerp = lambda a, b: a + t * (b - a)
    return (
        lerp(config.pool_start, config.pool_end),
        lerp(config.mutation_start, config.mutation_end),
        lerp(config.crossover_start, config.crossover_end),
    )


class GaProblem:
    """Evaluation context: decode genomes, cache LP fitness by decoded selection."""

    def __init__(self, graph, workload, candidates, catalog, noise=DEFAULT_NOISE, p_max=3):
        self.graph = graph
        self.workload = workload
        self.catalog = list(catalog)
        self.noise = noise
        self.p_max = p_max
        # pairs with empty candidate sets are excluded up front; their R_min
        # rows still live in the LP and decide feasibility
        self.pair_order = [p.key for p in workload.user_pairs if candidates.get(p.key)]
        self.candidates = {k: list(candidates[k]) for k in self.pair_order}
        self._cache = {}
        self.lp_solves = 0

    def genome_length(self):
        return len(self.pair_order) * self.p_max

    def gene_space(self, slot):
        """(num paths, num strategies) valid at a given gene slot."""
        pair_key = self.pair_order[slot // self.p_max]
        return len(self.candidates[pair_key]), len(self.catalog)

    def decode(self, genome: Genome):
        """Genome -> {pair_key: [(path, strategy), ...]}; duplicate path
        indices within a pair keep their first occurrence."""
        selection = {}
        for i, pair_key in enumerate(self.pair_order):
            genes = genome.genes[i * self.p_max:(i + 1) * self.p_max]
            seen = set()
            picks = []
            for path_idx, strat_idx in genes:
                if path_idx in seen:
                    continue
                seen.add(path_idx)
                picks.append((self.candidates[pair_key][path_idx], self.catalog[strat_idx]))
            selection[pair_key] = picks
        return selection

    def _cache_key(self, genome: Genome):
        key = []
        for i in range(len(self.pair_order)):
            genes = genome.genes[i * self.p_max:(i + 1) * self.p_max]
            seen = {}
            for path_idx, strat_idx in genes:
                seen.setdefault(path_idx, strat_idx)
            key.append(tuple(sorted(seen.items())))
        return tuple(key)

    def fitness(self, genome: Genome) -> float:
        key = self._cache_key(genome)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        try:
            value = wegr_of_selection(self.graph, self.workload, self.decode(genome),
                                      self.noise, self.p_max)
        except SolverError as exc:
            raise SolverError(f"{exc} (while scoring genome {genome.genes})") from exc
        self.lp_solves += 1
        self._cache[key] = value
        return value

    def encode_selection(self, selection) -> Genome:
        """Inverse of decode for seeding: pad unused slots by repeating the
        first pick (duplicates collapse back out at decode time)."""
        genes = []
        for pair_key in self.pair_order:
            picks = selection.get(pair_key, [])
            slots = []
            for path, strategy in picks[: self.p_max]:
                path_idx = next(
                    i for i, c in enumerate(self.candidates[pair_key])
                    if c.link_keys == path.link_keys
                )
                strat_idx = next(
                    i for i, s in enumerate(self.catalog)
                    if abs(s.link_threshold - strategy.link_threshold) < 1e-12
                )
                slots.append((path_idx, strat_idx))
            if not slots:
                slots = [(0, 0)]
            while len(slots) < self.p_max:
                slots.append(slots[0])
            genes.extend(slots)
        return Genome(tuple(genes))


def random_genome(problem: GaProblem, rng) -> Genome:
    genes = []
    for slot in range(problem.genome_length()):
        n_paths, n_strats = problem.gene_space(slot)
        genes.append((int(rng.integers(n_paths)), int(rng.integers(n_strats))))
    return Genome(tuple(genes))


def initialize_population(problem: GaProblem, config: GaConfig, seed_heuristics=()):
    """Population of size N: injected heuristic genomes, then uniform random."""
    heur = [problem.encode_selection(sel) for sel in seed_heuristics]
    if config.population_size < len(heur):
        raise ValueError(
            f"population size {config.population_size} below the "
            f"{len(heur)} injected heuristics"
        )
    population = list(heur)
    for i in range(config.population_size - len(heur)):
        rng = np.random.default_rng([config.seed, 0, i])
        population.append(random_genome(problem, rng))
    return population


def _schedule_for(config: GaConfig, generation: int):
    if config.mode == "static":
        return config.pool_start, config.mutation_start, config.crossover_start
    return dynamic_schedule(generation, max(config.generations, 1), config)


def _pick_parent(rng, order, fitnesses, pool_size, proportional):
    pool = order[:pool_size]
    if proportional:
        weights = np.array([fitnesses[i] for i in pool], dtype=float)
        total = weights.sum()
        if total > 0:
            return pool[rng.choice(len(pool), p=weights / total)]
    return pool[rng.integers(len(pool))]


def _mutate(genes, problem, rng, prob):
    out = list(genes)
    for slot in range(len(out)):
        if rng.random() < prob:
            n_paths, n_strats = problem.gene_space(slot)
            path_idx, strat_idx = out[slot]
            if rng.random() < 0.5:
                path_idx = int(rng.integers(n_paths))
            else:
                strat_idx = int(rng.integers(n_strats))
            out[slot] = (path_idx, strat_idx)
    return tuple(out)


def evolve(population, config: GaConfig, problem: GaProblem) -> GaTrace:
    """Run the generational loop; returns the trace (one row per generation,
    including the initial population as generation 0)."""
    trace = GaTrace()
    pop = list(population)
    length = problem.genome_length()
    for genome in pop:
        if len(genome.genes) != length:
            raise ValueError("genome length does not match the problem encoding")

    def record(fitnesses, elapsed):
        trace.best_fitness.append(max(fitnesses))
        trace.mean_fitness.append(float(np.mean(fitnesses)))
        trace.seconds.append(elapsed)

    t0 = time.perf_counter()
    fitnesses = [problem.fitness(g) for g in pop]
    record(fitnesses, time.perf_counter() - t0)

    for gen in range(1, config.generations + 1):
        t0 = time.perf_counter()
        pool_frac, mut_prob, cross_prob = _schedule_for(config, gen - 1)
        order = sorted(range(len(pop)), key=lambda i: (-fitnesses[i], i))
        pool_size = max(1, int(np.ceil(pool_frac * len(pop))))
        proportional = config.mode == "dynamic"

        next_pop = [pop[i] for i in order[: config.elitism_count]]
        for slot in range(config.population_size - config.elitism_count):
            rng = np.random.default_rng([config.seed, gen, slot])
            p1 = pop[_pick_parent(rng, order, fitnesses, pool_size, proportional)]
            p2 = pop[_pick_parent(rng, order, fitnesses, pool_size, proportional)]
            if rng.random() < cross_prob and length > 1:
                cut = int(rng.integers(1, length))
                child = p1.genes[:cut] + p2.genes[cut:]
            else:
                child = p1.genes
            next_pop.append(Genome(_mutate(child, problem, rng, mut_prob)))
        pop = next_pop
        fitnesses = [problem.fitness(g) for g in pop]
        record(fitnesses, time.perf_counter() - t0)

    best_idx = max(range(len(pop)), key=lambda i: (fitnesses[i], -i))
    # elitism guarantees the final population contains the best-ever genome
    trace.best_genome = pop[best_idx]
    trace.best_wegr = fitnesses[best_idx]
    trace.lp_solves = problem.lp_solves
    return trace
