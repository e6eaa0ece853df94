"""Weighted-EGR rate allocation: build and solve the LP for a fixed selection.

For a selection assigning each user pair up to P_max (path, strategy)
choices, the LP maximizes sum over variables of w_k * lambda^k_u *
q^(|p|-1) * x subject to per-link capacity rows (coefficients are the
distillation overhead g per link), per-pair min/max rate rows on the raw
sums, and x >= 0. Infeasible (path, strategy) pairs are dropped at build
time; an unsatisfiable R_min row then makes the whole problem infeasible,
which reports as W-EGR 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .quantum_math import DEFAULT_NOISE, NoiseParams, path_overhead_per_link

SOLVER_TOL = 1e-7


class SolverError(RuntimeError):
    """LP solver failed numerically; never swallowed."""


@dataclass(frozen=True)
class LinearProgram:
    """maximize objective . x  subject to  row_coeffs @ x <= row_bounds, x >= 0."""

    objective: np.ndarray
    row_coeffs: np.ndarray
    row_bounds: np.ndarray
    row_labels: tuple = ()


@dataclass(frozen=True)
class AllocationProblem:
    variables: tuple  # (pair_key, CandidatePath, DistillationStrategy) per column
    lp: LinearProgram
    pair_keys: tuple  # all workload pair keys, in workload order
    swap_success_prob: float = 1.0  # q, for recovering true EGR from raw rates

    @property
    def num_variables(self):
        return len(self.variables)


@dataclass(frozen=True)
class AllocationSolution:
    status: str  # "optimal" | "infeasible"
    rates: dict  # (pair_key, path nodes) -> rate
    wegr: float  # 0 when infeasible
    true_egr_per_pair: dict  # pair_key -> unweighted sum of q^(|p|-1) * x


def _overhead_for(path, strategy, user_threshold, graph, noise):
    """Per-link overhead coefficients of a (path, strategy) choice, or None
    if any stage is infeasible. Cached on the CandidatePath."""
    cache_key = (strategy.link_threshold, strategy.max_rounds, user_threshold, noise)
    hit = path.strategy_cache.get(cache_key)
    if hit is None:
        per_link = []
        feasible = True
        for lk in path.link_keys:
            link = graph.link_by_key[lk]
            res = path_overhead_per_link(
                link.base_fidelity, path.hop_count, strategy, user_threshold, noise
            )
            if not res.feasible:
                feasible = False
                break
            per_link.append(res.overhead)
        hit = tuple(per_link) if feasible else False
        path.strategy_cache[cache_key] = hit
    return None if hit is False else hit


def build_problem(graph, workload, selection, noise: NoiseParams = DEFAULT_NOISE,
                  p_max: int = 3) -> AllocationProblem:
    """Assemble the LP for one selection.

    selection: {pair_key: [(CandidatePath, DistillationStrategy), ...]}.
    Raises ValueError if a selected path's endpoints mismatch its pair or a
    pair exceeds p_max paths.
    """
    pair_by_key = {p.key: p for p in workload.user_pairs}
    variables = []
    columns = []  # per variable: dict link_key -> overhead coefficient
    q = noise.swap_success_prob
    objective = []
    for pair_key, choices in selection.items():
        pair = pair_by_key.get(pair_key)
        if pair is None:
            raise ValueError(f"selection references unknown pair {pair_key}")
        if len(choices) > p_max:
            raise ValueError(f"pair {pair_key} selects {len(choices)} paths, cap is {p_max}")
        org = workload.org_by_id(pair.org_id)
        seen_paths = set()
        for path, strategy in choices:
            ends = (path.nodes[0], path.nodes[-1])
            if set(ends) != set(pair.endpoints):
                raise ValueError(
                    f"path endpoints {ends} do not match pair {pair_key}"
                )
            if path.link_keys in seen_paths:
                continue
            seen_paths.add(path.link_keys)
            coeffs = _overhead_for(path, strategy, pair.fidelity_threshold, graph, noise)
            if coeffs is None:
                continue  # infeasible strategy for this pair, excluded up front
            variables.append((pair_key, path, strategy))
            columns.append(dict(zip(path.link_keys, coeffs)))
            objective.append(org.weight * pair.weight * q ** (path.hop_count - 1))

    n = len(variables)
    rows = []
    bounds = []
    labels = []
    touched = sorted({lk for col in columns for lk in col})
    for lk in touched:
        row = np.zeros(n)
        for j, col in enumerate(columns):
            if lk in col:
                row[j] = col[lk]
        rows.append(row)
        bounds.append(graph.link_by_key[lk].capacity_eprps)
        labels.append(("cap", lk))
    for pair in workload.user_pairs:
        mask = np.array([1.0 if variables[j][0] == pair.key else 0.0 for j in range(n)])
        if pair.r_min > 0:
            rows.append(-mask)
            bounds.append(-pair.r_min)
            labels.append(("rmin", pair.key))
        if math.isfinite(pair.r_max):
            rows.append(mask)
            bounds.append(pair.r_max)
            labels.append(("rmax", pair.key))

    lp = LinearProgram(
        objective=np.array(objective, dtype=float),
        row_coeffs=np.array(rows, dtype=float).reshape(len(bounds), n),
        row_bounds=np.array(bounds, dtype=float),
        row_labels=tuple(labels),
    )
    return AllocationProblem(
        variables=tuple(variables),
        lp=lp,
        pair_keys=tuple(p.key for p in workload.user_pairs),
        swap_success_prob=q,
    )


def solve_lp(lp: LinearProgram):
    """Solve the raw interface problem. Returns ("optimal", x) or ("infeasible", None)."""
    n = len(lp.objective)
    res = linprog(
        c=-lp.objective,
        A_ub=lp.row_coeffs if len(lp.row_bounds) else None,
        b_ub=lp.row_bounds if len(lp.row_bounds) else None,
        bounds=[(0, None)] * n,
        method="highs",
        options={"primal_feasibility_tolerance": SOLVER_TOL,
                 "dual_feasibility_tolerance": SOLVER_TOL},
    )
    if res.status == 2:
        return "infeasible", None
    if res.status != 0:
        raise SolverError(f"LP solve failed (status {res.status}): {res.message}")
    return "optimal", np.clip(res.x, 0.0, None)


def solve(problem: AllocationProblem) -> AllocationSolution:
    """Solve to optimality or report infeasibility (wegr 0 by convention)."""
    lp = problem.lp
    n = problem.num_variables
    infeasible = AllocationSolution(
        status="infeasible",
        rates={},
        wegr=0.0,
        true_egr_per_pair={k: 0.0 for k in problem.pair_keys},
    )
    if n == 0:
        # no variables: feasible iff no min-rate rows exist
        if any(kind == "rmin" for kind, _ in lp.row_labels):
            return infeasible
        return AllocationSolution("optimal", {}, 0.0,
                                  {k: 0.0 for k in problem.pair_keys})

    status, x = solve_lp(lp)
    if status == "infeasible":
        return infeasible
    q = problem.swap_success_prob
    rates = {}
    true_egr = {k: 0.0 for k in problem.pair_keys}
    for j, (pair_key, path, _) in enumerate(problem.variables):
        rates[(pair_key, path.nodes)] = float(x[j])
        true_egr[pair_key] += float(x[j]) * q ** (path.hop_count - 1)
    wegr = float(lp.objective @ x)
    return AllocationSolution("optimal", rates, wegr, true_egr)


def wegr_of_selection(graph, workload, selection, noise: NoiseParams = DEFAULT_NOISE,
                      p_max: int = 3) -> float:
    """Convenience: build + solve; 0 on infeasible. Propagates solver failures."""
    problem = build_problem(graph, workload, selection, noise, p_max)
    return solve(problem).wegr
