"""Organization/user-pair workloads: generation, serialization, validation.

Generation mirrors the evaluation setup: K organizations with uniform random
weights, a fixed number of pairs per organization drawn among non-repeater
nodes within a hop cap, per-pair weights and fidelity thresholds uniform in
configured ranges, and fixed or uniformly drawn rate bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .topology import NetworkGraph, min_hop_distances


class WorkloadError(ValueError):
    """Malformed or inconsistent workload document."""


@dataclass(frozen=True)
class Organization:
    id: str
    weight: float  # w_k

    def __post_init__(self):
        if self.weight <= 0:
            raise WorkloadError(f"org {self.id!r}: weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class UserPair:
    org_id: str
    endpoints: tuple  # (a, b) node ids
    weight: float  # lambda^k_u
    fidelity_threshold: float  # F^k_u
    r_min: float
    r_max: float

    def __post_init__(self):
        a, b = self.endpoints
        if a == b:
            raise WorkloadError(f"pair in org {self.org_id!r}: endpoints must differ, got {a!r}")
        if self.weight <= 0:
            raise WorkloadError(f"pair {a!r}-{b!r}: weight must be positive")
        if not 0.25 < self.fidelity_threshold < 1.0:
            raise WorkloadError(
                f"pair {a!r}-{b!r}: fidelity threshold must lie in (0.25,1), "
                f"got {self.fidelity_threshold}"
            )
        if not 0 <= self.r_min <= self.r_max:
            raise WorkloadError(
                f"pair {a!r}-{b!r}: need 0 <= R_min <= R_max, got {self.r_min}, {self.r_max}"
            )

    @property
    def key(self):
        return (self.org_id, self.endpoints[0], self.endpoints[1])


@dataclass(frozen=True)
class WorkloadParams:
    num_orgs: int = 3
    pairs_per_org: int = 50
    org_weight_range: tuple = (0.1, 1.0)
    pair_weight_range: tuple = (0.3, 0.7)
    fidelity_range: tuple = (0.75, 0.90)
    hop_cap: int = 7
    r_min: float = 10.0
    r_max: float = 1000.0
    random_r_max: bool = False  # draw R_max ~ Unif[10, r_max] per pair


@dataclass(frozen=True)
class Workload:
    organizations: tuple
    user_pairs: tuple
    seed: int | None = None
    # provenance only; the file format does not carry it, so it is not compared
    params: WorkloadParams | None = field(default=None, compare=False)

    def __post_init__(self):
        org_ids = [o.id for o in self.organizations]
        if len(set(org_ids)) != len(org_ids):
            raise WorkloadError("duplicate organization ids")
        known = set(org_ids)
        for p in self.user_pairs:
            if p.org_id not in known:
                raise WorkloadError(f"pair {p.endpoints} references unknown org {p.org_id!r}")

    def org_by_id(self, org_id):
        for o in self.organizations:
            if o.id == org_id:
                return o
        raise KeyError(org_id)


def generate_workload(graph: NetworkGraph, params: WorkloadParams, seed: int) -> Workload:
    """Seeded random workload on the given graph.

    Candidate endpoints are non-repeater nodes whose min-hop distance is
    within params.hop_cap; each organization samples its pairs without
    replacement (orgs may share pairs). Raises WorkloadError if the graph
    cannot supply pairs_per_org qualifying pairs.
    """
    rng = np.random.default_rng(seed)
    users = sorted(n.id for n in graph.user_nodes())
    qualifying = []
    for i, a in enumerate(users):
        dist = min_hop_distances(graph, a)
        for b in users[i + 1:]:
            if 0 < dist.get(b, math.inf) <= params.hop_cap:
                qualifying.append((a, b))
    if len(qualifying) < params.pairs_per_org:
        raise WorkloadError(
            f"graph supplies only {len(qualifying)} pairs within hop cap "
            f"{params.hop_cap}, need {params.pairs_per_org}"
        )

    orgs = []
    pairs = []
    lo_w, hi_w = params.org_weight_range
    lo_l, hi_l = params.pair_weight_range
    lo_f, hi_f = params.fidelity_range
    for knum in range(params.num_orgs):
        org_id = f"org{knum + 1}"
        orgs.append(Organization(id=org_id, weight=float(rng.uniform(lo_w, hi_w))))
    for org in orgs:
        chosen = rng.permutation(len(qualifying))[: params.pairs_per_org]
        for idx in sorted(chosen):
            a, b = qualifying[idx]
            r_max = params.r_max
            if params.random_r_max:
                r_max = float(rng.uniform(10.0, params.r_max))
            pairs.append(
                UserPair(
                    org_id=org.id,
                    endpoints=(a, b),
                    weight=float(rng.uniform(lo_l, hi_l)),
                    fidelity_threshold=float(rng.uniform(lo_f, hi_f)),
                    r_min=params.r_min,
                    r_max=r_max,
                )
            )
    return Workload(organizations=tuple(orgs), user_pairs=tuple(pairs), seed=seed, params=params)


def load_workload(source: str) -> Workload:
    """Parse a workload document: header `qvpn-workload v1`, org and pair lines."""
    lines = source.splitlines()
    content = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            content.append((lineno, text))
    if not content or content[0][1] != "qvpn-workload v1":
        raise WorkloadError("missing or unsupported header, expected 'qvpn-workload v1'")
    orgs = []
    pairs = []
    seed = None
    for lineno, text in content[1:]:
        parts = text.split()
        try:
            if parts[0] == "org":
                if len(parts) != 3:
                    raise WorkloadError(f"line {lineno}: org line expects '<id> <weight>'")
                orgs.append(Organization(id=parts[1], weight=float(parts[2])))
            elif parts[0] == "pair":
                if len(parts) != 8:
                    raise WorkloadError(
                        f"line {lineno}: pair line expects "
                        "'<org> <a> <b> <lambda> <Fth> <Rmin> <Rmax>'"
                    )
                pairs.append(
                    UserPair(
                        org_id=parts[1],
                        endpoints=(parts[2], parts[3]),
                        weight=float(parts[4]),
                        fidelity_threshold=float(parts[5]),
                        r_min=float(parts[6]),
                        r_max=float(parts[7]),
                    )
                )
            elif parts[0] == "seed":
                seed = int(parts[1])
            else:
                raise WorkloadError(f"line {lineno}: unknown directive {parts[0]!r}")
        except ValueError as exc:
            if isinstance(exc, WorkloadError):
                raise
            raise WorkloadError(f"line {lineno}: {exc}") from None
    return Workload(organizations=tuple(orgs), user_pairs=tuple(pairs), seed=seed)


def save_workload(wl: Workload) -> str:
    """Serialize to the line format; floats use repr so round-trips are exact."""
    out = ["qvpn-workload v1"]
    if wl.seed is not None:
        out.append(f"seed {wl.seed}")
    for o in wl.organizations:
        out.append(f"org {o.id} {o.weight!r}")
    for p in wl.user_pairs:
        a, b = p.endpoints
        out.append(
            f"pair {p.org_id} {a} {b} {p.weight!r} {p.fidelity_threshold!r} "
            f"{p.r_min!r} {p.r_max!r}"
        )
    return "\n".join(out) + "\n"
