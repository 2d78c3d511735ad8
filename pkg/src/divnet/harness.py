"""Random instance generation and the experiment families.

Generated networks are connected (random spanning tree first, then random
extra edges up to round(hosts * degree / 2) total), give every host the same
services and candidate lists, and draw per-service similarity tables with
uniform off-diagonal values. Everything derives from one seed.

Four experiment families mirror the evaluation axes: ``structure`` adds
random edges (more routing nodes), ``variety`` sweeps products per service,
``constraints`` sweeps counts of constraints generated to conflict with the
unconstrained optimum, and ``scale`` sweeps instance size recording solve
time only. Rows are keyed by parameters plus replicate seed, so report
assembly is order-independent.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .bayes import ExploitKit, build_bn, diversity_metric, infer
from .errors import ValidationError
from .mrf import SolverConfig, build_problem, solve_trws
from .netmodel import Assignment, Constraint, Network, UNDESIRABLE
from .seeding import derive_seed, rng
from .similarity import ProductId, SimilarityTable

REPORT_HEADER = [
    "family", "hosts", "degree", "services", "products", "constraints",
    "log10_p_prime", "log10_p", "d_bn", "energy", "gap", "solve_ms", "seed",
]

FAMILIES = ("structure", "variety", "constraints", "scale")


@dataclass(frozen=True)
class GenSpec:
    hosts: int
    degree: float
    services: int = 3
    products: int = 3
    sim_lo: float = 0.05
    sim_hi: float = 0.95
    seed: int = 42

    def __post_init__(self):
        if self.hosts < 2:
            raise ValidationError("hosts must be >= 2")
        if not 1 <= self.degree < self.hosts:
            raise ValidationError("degree must satisfy 1 <= degree < hosts")
        if self.n_edges() < self.hosts - 1:
            raise ValidationError(
                f"degree {self.degree} infeasible: {self.n_edges()} edges cannot connect "
                f"{self.hosts} hosts"
            )
        if self.services < 1 or self.products < 1:
            raise ValidationError("services and products must be >= 1")
        if not 0.0 <= self.sim_lo <= self.sim_hi <= 1.0:
            raise ValidationError("similarity range must satisfy 0 <= lo <= hi <= 1")

    def n_edges(self) -> int:
        return int(round(self.hosts * self.degree / 2))


def random_table(service: str, products: Sequence[ProductId], lo, hi, gen) -> SimilarityTable:
    k = len(products)
    values = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            values[i, j] = values[j, i] = gen.uniform(lo, hi)
    return SimilarityTable(service, tuple(products), values)


def _random_edges(n_hosts: int, n_edges: int, gen) -> np.ndarray:
    """Spanning tree plus uniform extra edges, as an (E, 2) index array."""
    parents = np.array([int(gen.integers(0, i)) for i in range(1, n_hosts)])
    tree = np.column_stack([parents, np.arange(1, n_hosts)])
    existing = set(map(tuple, tree))
    extra = []
    need = n_edges - len(tree)
    while need > 0:
        a = gen.integers(0, n_hosts, size=max(64, 2 * need))
        b = gen.integers(0, n_hosts, size=max(64, 2 * need))
        for x, y in zip(a.tolist(), b.tolist()):
            if need == 0:
                break
            if x == y:
                continue
            key = (min(x, y), max(x, y))
            if key in existing:
                continue
            existing.add(key)
            extra.append(key)
            need -= 1
    edges = np.vstack([tree] + ([np.array(extra)] if extra else []))
    edges = np.sort(edges, axis=1)
    return edges


def gen_network(spec: GenSpec) -> tuple[Network, list[SimilarityTable]]:
    """Deterministic random network plus per-service similarity tables.

    Graph topology depends only on (seed, hosts, degree), so sweeping
    services or products keeps the topology fixed.
    """
    graph_gen = rng(spec.seed, "graph", spec.hosts, spec.degree)
    edges = _random_edges(spec.hosts, spec.n_edges(), graph_gen)
    hosts = tuple(f"h{i}" for i in range(spec.hosts))
    links = tuple((hosts[a], hosts[b]) for a, b in edges.tolist())
    services = tuple(f"s{k}" for k in range(spec.services))
    tables = []
    candidates = {}
    table_gen = rng(spec.seed, "tables", spec.services, spec.products)
    for s in services:
        products = tuple(ProductId(s, f"{s}_p{j}") for j in range(spec.products))
        tables.append(random_table(s, products, spec.sim_lo, spec.sim_hi, table_gen))
        for h in hosts:
            candidates[(h, s)] = products
    return Network(hosts, links, services, candidates), tables


def routing_nodes(n: Network) -> list[str]:
    """Hosts with degree at least 3."""
    deg = {h: 0 for h in n.hosts}
    for a, b in n.links:
        deg[a] += 1
        deg[b] += 1
    return [h for h in n.hosts if deg[h] >= 3]


def count_attack_paths(n: Network, entry: str, target: str, cap: int = 1_000_000):
    """Number of simple paths entry -> target: (count, capped).

    Exact until ``cap`` paths are found, then reported as at-least-cap.
    """
    for h in (entry, target):
        if h not in n.hosts:
            raise ValidationError(f"host {h!r} not in network")
    adjacency: dict[str, list[str]] = {h: [] for h in n.hosts}
    for a, b in n.links:
        adjacency[a].append(b)
        adjacency[b].append(a)
    count = 0
    # iterative DFS over (host, neighbor cursor) with an on-path set
    stack = [(entry, 0)]
    on_path = {entry}
    while stack:
        host, cursor = stack[-1]
        if cursor >= len(adjacency[host]):
            stack.pop()
            on_path.discard(host)
            continue
        stack[-1] = (host, cursor + 1)
        nxt = adjacency[host][cursor]
        if nxt in on_path:
            continue
        if nxt == target:
            count += 1
            if count >= cap:
                return cap, True
            continue
        stack.append((nxt, 0))
        on_path.add(nxt)
    return count, False


# -- evaluation helpers ---------------------------------------------------------


def pick_evaluation_slots(n: Network, max_depth: int = 3):
    """Deterministic entry roots and target: up to three entry hosts plus the
    last host within ``max_depth`` hops of them (keeps sampled estimates of
    the target marginal usable)."""
    n_roots = min(3, len(n.hosts) - 1)
    roots = [(h, 1.0) for h in n.hosts[:n_roots]]
    adjacency: dict[str, list[str]] = {h: [] for h in n.hosts}
    for a, b in n.links:
        adjacency[a].append(b)
        adjacency[b].append(a)
    layer = {h: 0 for h, _ in roots}
    frontier = [h for h, _ in roots]
    while frontier:
        nxt = []
        for h in frontier:
            for nb in adjacency[h]:
                if nb not in layer:
                    layer[nb] = layer[h] + 1
                    nxt.append(nb)
        frontier = nxt
    depth = min(max_depth, max(layer.values()))
    if depth == 0:
        raise ValidationError("network has no host outside the root set")
    candidates = [h for h in n.hosts if layer.get(h) == depth]
    return roots, candidates[-1]


def evaluate_assignment(
    n: Network,
    tables: Sequence[SimilarityTable],
    a: Assignment,
    roots,
    target: str,
    p_avg: float = 0.08,
    samples: int = 400_000,
    seed: int = 0,
    threads: int = 1,
):
    """Sampled diversity evaluation: (log10 P', log10 P, d_bn)."""
    kit = ExploitKit(tuple(n.services))
    bn = build_bn(n, a, roots, target, kit, p_avg=p_avg, tables=tables)
    r = infer(bn, method="sample", samples=samples, seed=seed, threads=threads)
    p = r.p[target]
    p_prime = r.p_prime[target]
    if p == 0.0 or p_prime == 0.0:
        return float("nan"), float("nan"), float("nan")
    return math.log10(p_prime), math.log10(p), diversity_metric(r, target)


def conflicting_constraints(
    n: Network, optimum: Assignment, count: int, seed: int
) -> list[Constraint]:
    """Local constraints engineered to contradict the given optimum: forbid
    the optimal product pair of a random host and service pair."""
    if len(n.services) < 2:
        raise ValidationError("conflicting constraints need at least two services")
    gen = rng(seed, "conflict-constraints")
    out: list[Constraint] = []
    seen = set()
    attempts = 0
    while len(out) < count and attempts < 50 * (count + 1):
        attempts += 1
        host = n.hosts[int(gen.integers(len(n.hosts)))]
        i, j = gen.choice(len(n.services), size=2, replace=False)
        s_m, s_n = n.services[int(i)], n.services[int(j)]
        if (host, s_m) not in n.candidates or (host, s_n) not in n.candidates:
            continue
        key = (host, s_m, s_n)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            Constraint(
                host, s_m, optimum.product(host, s_m), s_n, optimum.product(host, s_n),
                UNDESIRABLE,
            )
        )
    return out


# -- experiment driver ------------------------------------------------------------


@dataclass(frozen=True)
class Budgets:
    time_s: float | None = None
    samples: int = 400_000
    solver: SolverConfig = field(default_factory=SolverConfig)
    threads: int = 1
    p_avg: float = 0.08


@dataclass(frozen=True)
class ExperimentRow:
    family: str
    hosts: int
    degree: float
    services: int
    products: int
    constraints: int
    log10_p_prime: float
    log10_p: float
    d_bn: float
    energy: float
    gap: float
    solve_ms: float
    seed: int


@dataclass(frozen=True)
class ExperimentReport:
    family: str
    rows: tuple[ExperimentRow, ...]
    partial: bool = False


def _solve_and_evaluate(net, tables, constraints, budgets, eval_seed, family, params):
    t0 = time.perf_counter()
    problem = build_problem(net, tables, constraints=constraints, config=budgets.solver)
    result = solve_trws(problem, budgets.solver, threads=budgets.threads)
    solve_ms = (time.perf_counter() - t0) * 1e3
    if family == "scale":
        logp_prime = logp = d_bn = float("nan")
    else:
        roots, target = pick_evaluation_slots(net)
        logp_prime, logp, d_bn = evaluate_assignment(
            net, tables, result.labeling, roots, target,
            p_avg=budgets.p_avg, samples=budgets.samples, seed=eval_seed,
            threads=budgets.threads,
        )
    return ExperimentRow(
        family=family,
        hosts=len(net.hosts),
        degree=round(2 * len(net.links) / len(net.hosts), 4),
        services=len(net.services),
        products=params["products"],
        constraints=params["constraints"],
        log10_p_prime=logp_prime,
        log10_p=logp,
        d_bn=d_bn,
        energy=result.energy,
        gap=result.gap,
        solve_ms=round(solve_ms, 3),
        seed=params["seed"],
    )


def run_experiment(
    family: str,
    base: GenSpec,
    sweep: Sequence,
    budgets: Budgets | None = None,
    replicates: int = 1,
) -> ExperimentReport:
    """One experiment family over its sweep values.

    structure: sweep = extra random edge counts over the base network.
    variety: sweep = products per service.
    constraints: sweep = counts of constraints conflicting with the
        unconstrained optimum of each replicate's base instance.
    scale: sweep = (hosts, degree, services) triples; timing only.

    ``replicates`` re-runs every sweep value with derived seeds; rows carry
    their seed so aggregation happens downstream. A wall-clock budget stops
    the sweep early with the report flagged partial.
    """
    if family not in FAMILIES:
        raise ValidationError(f"unknown experiment family {family!r}")
    if not sweep:
        raise ValidationError("sweep must be non-empty")
    budgets = budgets or Budgets()
    started = time.perf_counter()
    rows: list[ExperimentRow] = []
    partial = False

    def out_of_time() -> bool:
        return budgets.time_s is not None and time.perf_counter() - started > budgets.time_s

    for rep in range(replicates):
        rep_seed = derive_seed(base.seed, family, "replicate", rep) % (2**31)
        base_rep = replace(base, seed=rep_seed)
        baseline: Assignment | None = None
        for value in sweep:
            if out_of_time():
                partial = True
                break
            constraints: list[Constraint] = []
            n_constraints = 0
            if family == "structure":
                spec = base_rep
                net, tables = gen_network(spec)
                net = add_random_edges(net, int(value), derive_seed(rep_seed, "extra", value))
            elif family == "variety":
                spec = replace(base_rep, products=int(value))
                net, tables = gen_network(spec)
            elif family == "constraints":
                spec = base_rep
                net, tables = gen_network(spec)
                if baseline is None:
                    problem = build_problem(net, tables, config=budgets.solver)
                    baseline = solve_trws(problem, budgets.solver, threads=budgets.threads).labeling
                n_constraints = int(value)
                constraints = conflicting_constraints(
                    net, baseline, n_constraints, derive_seed(rep_seed, "ncon", value)
                )
            else:  # scale
                hosts, degree, services = value
                spec = replace(base_rep, hosts=int(hosts), degree=float(degree), services=int(services))
                net, tables = gen_network(spec)
            rows.append(
                _solve_and_evaluate(
                    net, tables, constraints, budgets,
                    # one eval stream per replicate: common random numbers
                    # across sweep values, so paired comparisons are low-noise
                    eval_seed=derive_seed(rep_seed, "eval"),
                    family=family,
                    params={
                        "products": spec.products,
                        "constraints": n_constraints,
                        "seed": rep_seed,
                    },
                )
            )
        if partial:
            break
    return ExperimentReport(family=family, rows=tuple(rows), partial=partial)


def add_random_edges(n: Network, count: int, seed: int) -> Network:
    """A copy of the network with ``count`` fresh random links."""
    if count == 0:
        return n
    gen = rng(seed, "add-edges")
    existing = {frozenset(l) for l in n.links}
    hosts = n.hosts
    links = list(n.links)
    need = count
    possible = len(hosts) * (len(hosts) - 1) // 2 - len(existing)
    if count > possible:
        raise ValidationError(f"cannot add {count} links: only {possible} slots free")
    while need:
        a, b = gen.choice(len(hosts), size=2, replace=False)
        key = frozenset((hosts[int(a)], hosts[int(b)]))
        if key in existing:
            continue
        existing.add(key)
        links.append((hosts[int(min(a, b))], hosts[int(max(a, b))]))
        need -= 1
    return Network(hosts, tuple(links), n.services, n.candidates)


def _field(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.17g}"
    return str(value)


def write_report_csv(report: ExperimentReport, sink) -> None:
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for row in report.rows:
            writer.writerow([_field(getattr(row, name)) for name in REPORT_HEADER])
    finally:
        if own:
            fh.close()


def report_as_json(report: ExperimentReport) -> dict:
    return {
        "family": report.family,
        "partial": report.partial,
        "rows": [
            {name: (None if isinstance(v := getattr(row, name), float) and math.isnan(v) else v)
             for name in REPORT_HEADER}
            for row in report.rows
        ],
    }
