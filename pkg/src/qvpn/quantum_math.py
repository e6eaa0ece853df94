"""Static fidelity model: nested-swap fidelity, DEJMPS purification, overhead g(.).

States are Bell-diagonal with coefficients (a, b, c, d) over the Bell basis
ordered (phi+, psi+, psi-, phi-); the fidelity is a. One purification round
consumes two pairs and keeps one with probability p, so distilling a pair
through rounds k = 1..n costs g = prod(2/p_k) base pairs per output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

# Absolute tolerance for all fidelity threshold comparisons.
FIDELITY_ATOL = 1e-9

DEFAULT_MAX_ROUNDS = 20


@dataclass(frozen=True)
class BellDiagonalState:
    coefficients: tuple  # (a, b, c, d), nonnegative, summing to 1

    def __post_init__(self):
        coeffs = tuple(float(x) for x in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) != 4:
            raise ValueError("Bell-diagonal state needs exactly 4 coefficients")
        if any(x < 0 for x in coeffs):
            raise ValueError(f"negative coefficient in {coeffs}")
        if abs(sum(coeffs) - 1.0) > 1e-12:
            raise ValueError(f"coefficients must sum to 1, got {sum(coeffs)!r}")

    @property
    def fidelity(self):
        return self.coefficients[0]


def werner(fidelity: float) -> BellDiagonalState:
    """Werner state with the given fidelity: (F, (1-F)/3, (1-F)/3, (1-F)/3)."""
    rest = (1.0 - fidelity) / 3.0
    return BellDiagonalState((fidelity, rest, rest, rest))


@dataclass(frozen=True)
class NoiseParams:
    two_qubit_gate_fidelity: float = 1.0  # P2
    measurement_fidelity: float = 0.99  # eta
    swap_success_prob: float = 1.0  # q

    def __post_init__(self):
        for name in ("two_qubit_gate_fidelity", "measurement_fidelity", "swap_success_prob"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0,1], got {v}")


DEFAULT_NOISE = NoiseParams()


@dataclass(frozen=True)
class DistillationStrategy:
    link_threshold: float  # link-level fidelity target before swapping
    max_rounds: int = DEFAULT_MAX_ROUNDS

    def __post_init__(self):
        if not 0.25 < self.link_threshold < 1.0:
            raise ValueError(f"link threshold must lie in (0.25,1), got {self.link_threshold}")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")


@dataclass(frozen=True)
class OverheadResult:
    overhead: float  # g, base pairs consumed per output pair; inf when infeasible
    rounds: int
    achieved_fidelity: float
    feasible: bool


def swap_chain_fidelity(link_fidelity: float, num_links: int, noise: NoiseParams = DEFAULT_NOISE) -> float:
    """End-to-end fidelity of a path of num_links identical links after nested swaps.

    S = 1/4 + 3/4 * (P2*(4*eta^2 - 1)/3)^(N-1) * ((4*F - 1)/3)^N
    where N is the link count (N-1 swaps). Reduces to the link fidelity at N=1.
    """
    if num_links < 1:
        raise ValueError(f"path must have at least one link, got {num_links}")
    if not 0.25 < link_fidelity <= 1.0:
        raise ValueError(f"link fidelity must lie in (0.25,1], got {link_fidelity}")
    p2 = noise.two_qubit_gate_fidelity
    eta = noise.measurement_fidelity
    gate = p2 * (4.0 * eta * eta - 1.0) / 3.0
    state = (4.0 * link_fidelity - 1.0) / 3.0
    return 0.25 + 0.75 * gate ** (num_links - 1) * state**num_links


def purify_step(state_a: BellDiagonalState, state_b: BellDiagonalState):
    """One DEJMPS round: consume two pairs, keep one, post-selected on success.

    Returns (output state, success probability). The map below is the
    Bell-diagonal recurrence of the rotate + bilateral-CNOT + coincidence
    circuit; tests hold it to the density-matrix simulation within 1e-10.
    """
    a1, b1, c1, d1 = state_a.coefficients
    a2, b2, c2, d2 = state_b.coefficients
    p = (a1 + c1) * (a2 + c2) + (b1 + d1) * (b2 + d2)
    if p < 1e-12:
        raise ValueError(f"degenerate purification step, success probability {p!r}")
    out = (
        (a1 * a2 + c1 * c2) / p,
        (b1 * b2 + d1 * d2) / p,
        (b1 * d2 + d1 * b2) / p,
        (a1 * c2 + c1 * a2) / p,
    )
    # renormalize away accumulated rounding so downstream states stay valid
    total = sum(out)
    return BellDiagonalState(tuple(x / total for x in out)), p


def purification_overhead(input_fidelity: float, target_fidelity: float,
                          max_rounds: int = DEFAULT_MAX_ROUNDS) -> OverheadResult:
    """Base pairs needed per output pair distilled from Werner(input) to the target.

    Symmetric recurrence: each round purifies two identical copies of the
    current state. Overhead multiplies by 2/p_k per round. Infeasibility
    (target unreached within max_rounds) is a tagged result, not an error.
    """
    if not 0.25 < input_fidelity <= 1.0:
        raise ValueError(f"input fidelity must lie in (0.25,1], got {input_fidelity}")
    if not 0.25 < target_fidelity < 1.0:
        raise ValueError(f"target fidelity must lie in (0.25,1), got {target_fidelity}")
    state = werner(input_fidelity)
    overhead = 1.0
    rounds = 0
    while state.fidelity < target_fidelity - FIDELITY_ATOL:
        if rounds >= max_rounds:
            return OverheadResult(math.inf, rounds, state.fidelity, False)
        prev = state.fidelity
        state, p = purify_step(state, state)
        overhead *= 2.0 / p
        rounds += 1
        if state.fidelity <= prev + 1e-15:
            # map stalled (at or below the F=0.5 fixed line); cap would only spin
            return OverheadResult(math.inf, rounds, state.fidelity, False)
    return OverheadResult(overhead, rounds, state.fidelity, True)


@lru_cache(maxsize=65536)
def _overhead_cached(input_fidelity, target_fidelity, max_rounds):
    return purification_overhead(input_fidelity, target_fidelity, max_rounds)


def path_overhead_per_link(link_fidelity: float, path_length_links: int,
                           strategy: DistillationStrategy, user_threshold: float,
                           noise: NoiseParams = DEFAULT_NOISE) -> OverheadResult:
    """Per-link base-EPR cost g of serving one end-to-end pair over this path.

    Two stages: link-level distillation of raw pairs up to the strategy
    threshold, then end-to-end distillation of the swapped pair up to the
    user threshold. g_total = g_link * g_e2e, since every e2e input pair
    costs g_link raw pairs on each link. The swap chain is evaluated at the
    nominal post-distillation link fidelity max(F_l, threshold).
    """
    g_link = 1.0
    rounds = 0
    if strategy.link_threshold > link_fidelity + FIDELITY_ATOL:
        res = _overhead_cached(link_fidelity, strategy.link_threshold, strategy.max_rounds)
        if not res.feasible:
            return res
        g_link, rounds = res.overhead, res.rounds
    chain_input = max(link_fidelity, strategy.link_threshold)
    s = swap_chain_fidelity(chain_input, path_length_links, noise)
    if s >= user_threshold - FIDELITY_ATOL:
        return OverheadResult(g_link, rounds, s, True)
    if s <= 0.25:
        return OverheadResult(math.inf, rounds, s, False)
    e2e = _overhead_cached(s, user_threshold, strategy.max_rounds)
    if not e2e.feasible:
        return OverheadResult(math.inf, rounds + e2e.rounds, e2e.achieved_fidelity, False)
    return OverheadResult(g_link * e2e.overhead, rounds + e2e.rounds, e2e.achieved_fidelity, True)


def default_strategy_catalog(count: int = 16, low: float = 0.8, high: float = 0.998,
                             max_rounds: int = DEFAULT_MAX_ROUNDS):
    """Uniformly spaced link-threshold catalog, sorted ascending."""
    if count < 1:
        raise ValueError("catalog needs at least one strategy")
    if count == 1:
        return [DistillationStrategy(low, max_rounds)]
    step = (high - low) / (count - 1)
    return [DistillationStrategy(low + i * step, max_rounds) for i in range(count)]


def load_strategy_catalog(source: str, max_rounds: int = DEFAULT_MAX_ROUNDS):
    """Parse a catalog document: one threshold per line, # comments allowed."""
    thresholds = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            thresholds.append(float(text))
        except ValueError:
            raise ValueError(f"line {lineno}: bad threshold {text!r}") from None
    if not thresholds:
        raise ValueError("strategy catalog is empty")
    if thresholds != sorted(thresholds):
        raise ValueError("strategy catalog must be sorted ascending by threshold")
    return [DistillationStrategy(t, max_rounds) for t in thresholds]


def save_strategy_catalog(catalog) -> str:
    return "\n".join(repr(s.link_threshold) for s in catalog) + "\n"
