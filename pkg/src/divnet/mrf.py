"""Pairwise MRF compilation and energy minimization for diverse assignment.

A network plus similarity tables compiles into a discrete MRF with one node
per (host, service) slot whose labels are that slot's candidate products
(after clamps). Each link contributes, per shared service, a pairwise edge
whose cost matrix is the service's similarity table, so the energy of an
assignment is exactly the summed similarity mass across links; constraints
become intra-host edges that put a large penalty on forbidden combinations.
Minimizing the energy with sequential tree-reweighted message passing
yields a diverse assignment together with a monotone lower bound, whose
distance to the achieved energy is an optimality certificate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _trws
from .errors import BuildError, GuardError, ValidationError
from .netmodel import (
    ALL_HOSTS,
    UNDESIRABLE,
    Assignment,
    Clamp,
    Constraint,
    Network,
    apply_clamps,
    validate_network,
)
from .similarity import ProductId, SimilarityTable

BRUTE_FORCE_GUARD = 10_000_000
_BRUTE_CHUNK = 1 << 17

SEQUENTIAL = "sequential"
PARALLEL_CHAIN = "parallel-chain"


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 2000
    tolerance: float = 1e-6
    big_penalty: float = 1e6
    seed: int = 42
    schedule: str = SEQUENTIAL

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be > 0")
        if not self.big_penalty > 0:
            raise ValidationError("big_penalty must be > 0")
        if self.schedule not in (SEQUENTIAL, PARALLEL_CHAIN):
            raise ValidationError(f"unknown schedule {self.schedule!r}")


@dataclass(frozen=True)
class SolveResult:
    labeling: Assignment
    labels: np.ndarray
    energy: float
    lower_bound: float
    gap: float
    iterations: int
    converged: bool
    trace: tuple[float, ...]
    wall_ms: float


class MrfProblem:
    """A compiled pairwise MRF.

    ``nodes`` are (host, service) slots in deterministic order (host order,
    then service order); ``labels[k]`` is slot k's candidate tuple. Edges are
    stored as (u, v) node-index pairs with u < v plus a reference into a pool
    of shared cost matrices; per-node maps translate label indices into the
    matrix index space, so an edge matrix entry for labels (xu, xv) is
    ``pool[mid][map_u[xu], map_v[xv]]`` (transposed when ``swap``). Problems
    are immutable once built; a solve owns its own message storage.
    """

    def __init__(self, nodes, labels, unaries, edges, pool, maps, swaps=None, big=None):
        self.nodes = tuple(nodes)
        self.labels = tuple(tuple(l) for l in labels)
        if not self.nodes:
            raise ValidationError("problem has no nodes")
        if len(self.labels) != len(self.nodes):
            raise ValidationError("labels and nodes differ in length")
        for k, lab in enumerate(self.labels):
            if len(lab) == 0:
                raise ValidationError(f"node {self.nodes[k]} has an empty label set")
        self.unaries = tuple(np.asarray(u, dtype=float) for u in unaries)
        for k, u in enumerate(self.unaries):
            if u.shape != (len(self.labels[k]),):
                raise ValidationError(f"unary vector of node {self.nodes[k]} misdimensioned")
            if not np.all(np.isfinite(u)) or np.any(u < 0):
                raise ValidationError(f"unary costs of node {self.nodes[k]} must be finite and >= 0")
        self.pool = tuple(np.ascontiguousarray(p, dtype=float) for p in pool)
        for p in self.pool:
            if p.ndim != 2 or not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ValidationError("cost matrices must be 2-d, finite and >= 0")
        self.edge_u = np.asarray([e[0] for e in edges], dtype=np.int32)
        self.edge_v = np.asarray([e[1] for e in edges], dtype=np.int32)
        self.edge_mid = np.asarray([e[2] for e in edges], dtype=np.int32)
        if swaps is None:
            swaps = np.zeros(len(edges), dtype=np.uint8)
        self.edge_swap = np.asarray(swaps, dtype=np.uint8)
        if np.any(self.edge_u >= self.edge_v):
            raise ValidationError("edges must be stored as (u, v) with u < v")
        self.maps = tuple(np.asarray(m, dtype=np.int32) for m in maps)
        n_labels = np.array([len(l) for l in self.labels])
        for k, mp in enumerate(self.maps):
            if mp.shape != (n_labels[k],):
                raise ValidationError(f"index map of node {self.nodes[k]} misdimensioned")
        if len(edges):
            max_map = np.array([int(m.max()) for m in self.maps], dtype=np.int64)
            prows = np.array([m.shape[0] for m in self.pool], dtype=np.int64)
            pcols = np.array([m.shape[1] for m in self.pool], dtype=np.int64)
            rows = np.where(self.edge_swap, pcols[self.edge_mid], prows[self.edge_mid])
            cols = np.where(self.edge_swap, prows[self.edge_mid], pcols[self.edge_mid])
            bad = (max_map[self.edge_u] >= rows) | (max_map[self.edge_v] >= cols)
            if np.any(bad):
                raise ValidationError(f"edge {int(np.argmax(bad))}: label map exceeds matrix bounds")
        self.big = float(big) if big is not None else None
        self._arrays = None

    # -- convenience views --------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def edge_cost(self, m: int) -> np.ndarray:
        """Materialized cost matrix of edge m in (u-label, v-label) space."""
        mat = self.pool[self.edge_mid[m]]
        if self.edge_swap[m]:
            mat = mat.T
        return mat[np.ix_(self.maps[self.edge_u[m]], self.maps[self.edge_v[m]])]

    def edge_nodes(self, m: int) -> tuple[int, int]:
        return int(self.edge_u[m]), int(self.edge_v[m])

    @classmethod
    def from_arrays(cls, unaries, edges, service: str = "label") -> "MrfProblem":
        """Ad-hoc problem from per-node unary vectors and (u, v, matrix) edges."""
        unaries = [np.asarray(u, dtype=float) for u in unaries]
        nodes = [(f"n{k}", service) for k in range(len(unaries))]
        labels = [tuple(ProductId(service, f"l{j}") for j in range(len(u))) for u in unaries]
        maps = [np.arange(len(u), dtype=np.int32) for u in unaries]
        pool = []
        edge_list = []
        for u, v, mat in edges:
            mat = np.asarray(mat, dtype=float)
            if u == v:
                raise ValidationError("self-edges are not allowed")
            if u > v:
                u, v, mat = v, u, mat.T
            if mat.shape != (len(unaries[u]), len(unaries[v])):
                raise ValidationError(f"edge ({u}, {v}): matrix misdimensioned")
            edge_list.append((u, v, len(pool)))
            pool.append(mat)
        return cls(nodes, labels, unaries, edge_list, pool, maps)

    # -- compiled flat arrays -------------------------------------------------

    def compiled(self):
        if self._arrays is None:
            self._arrays = _compile(self)
        return self._arrays

    def label_indices(self, a: Assignment) -> np.ndarray:
        idx = np.empty(self.n_nodes, dtype=np.int32)
        for k, slot in enumerate(self.nodes):
            product = a.get(*slot)
            if product is None:
                raise ValidationError(f"assignment missing slot {slot}")
            try:
                idx[k] = self.labels[k].index(product)
            except ValueError:
                raise ValidationError(f"{product} is not a label of slot {slot}") from None
        return idx

    def assignment(self, labels: np.ndarray) -> Assignment:
        return Assignment(
            {slot: self.labels[k][int(labels[k])] for k, slot in enumerate(self.nodes)}
        )


class _Compiled:
    __slots__ = (
        "nlab", "noff", "unary", "map_flat", "eu", "ev", "emid", "eswap",
        "pool", "poff", "pcols", "moff_f", "moff_b", "msg_size",
        "fof", "flist", "bof", "blist", "gamma", "nstart",
        "order_f", "loff_f", "order_b", "loff_b",
    )


def _csr(owner: np.ndarray, n: int):
    counts = np.bincount(owner, minlength=n)
    off = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=off[1:])
    lst = np.argsort(owner, kind="stable").astype(np.int32)
    return off, lst


def _level_order(n, lev):
    order = np.lexsort((np.arange(n), lev)).astype(np.int32)
    counts = np.bincount(lev)
    off = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=off[1:])
    return order, off


def _compile(p: MrfProblem) -> _Compiled:
    c = _Compiled()
    n = p.n_nodes
    c.nlab = np.array([len(l) for l in p.labels], dtype=np.int32)
    c.noff = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(c.nlab, out=c.noff[1:])
    c.unary = np.concatenate(p.unaries) if p.unaries else np.zeros(0)
    c.map_flat = np.concatenate(p.maps).astype(np.int32) if p.maps else np.zeros(0, np.int32)
    c.eu, c.ev = p.edge_u, p.edge_v
    c.emid, c.eswap = p.edge_mid, p.edge_swap
    c.pcols = np.array([m.shape[1] for m in p.pool], dtype=np.int32)
    sizes = np.array([m.size for m in p.pool], dtype=np.int64)
    c.poff = np.zeros(len(p.pool) + 1, dtype=np.int64)
    np.cumsum(sizes, out=c.poff[1:])
    c.pool = np.concatenate([m.ravel() for m in p.pool]) if p.pool else np.zeros(0)
    len_f = c.nlab[c.ev].astype(np.int64)
    len_b = c.nlab[c.eu].astype(np.int64)
    c.moff_f = np.zeros(p.n_edges, dtype=np.int64)
    c.moff_b = np.zeros(p.n_edges, dtype=np.int64)
    if p.n_edges:
        np.cumsum(len_f[:-1], out=c.moff_f[1:])
        np.cumsum(len_b[:-1], out=c.moff_b[1:])
    total_f = int(len_f.sum())
    c.moff_b = c.moff_b + total_f
    c.msg_size = total_f + int(len_b.sum())
    c.fof, c.flist = _csr(c.eu, n)
    c.bof, c.blist = _csr(c.ev, n)
    nf = np.bincount(c.eu, minlength=n).astype(np.int64)
    nb = np.bincount(c.ev, minlength=n).astype(np.int64)
    rho = np.maximum(np.maximum(nf, nb), 1)
    c.gamma = 1.0 / rho
    c.nstart = np.where(nf + nb == 0, 1.0, np.maximum(nf - nb, 0).astype(float))
    if p.n_edges:
        fwd = np.argsort(c.ev, kind="stable")
        lev_f = _trws.dependency_levels(n, c.eu[fwd], c.ev[fwd], False)
        bwd = np.argsort(-c.eu, kind="stable")
        lev_b = _trws.dependency_levels(n, c.eu[bwd], c.ev[bwd], True)
    else:
        lev_f = np.zeros(n, dtype=np.int64)
        lev_b = np.zeros(n, dtype=np.int64)
    c.order_f, c.loff_f = _level_order(n, lev_f)
    c.order_b, c.loff_b = _level_order(n, lev_b)
    return c


# -- construction from a network ---------------------------------------------


def _service_spaces(net: Network, tables: Sequence[SimilarityTable]):
    """Canonical per-service product order (table order, or the single
    distinct candidate for services flexible nowhere)."""
    by_service = {}
    for t in tables:
        if t.service in by_service:
            raise BuildError(f"duplicate similarity table for service {t.service!r}")
        by_service[t.service] = t
    spaces: dict[str, tuple[ProductId, ...]] = {}
    values: dict[str, np.ndarray] = {}
    for s in net.services:
        distinct = []
        for slot, cands in net.candidates.items():
            if slot[1] != s:
                continue
            for p in cands:
                if p not in distinct:
                    distinct.append(p)
        if not distinct:
            continue
        table = by_service.get(s)
        if table is None:
            if len(distinct) >= 2:
                raise BuildError(f"no similarity table for service {s!r} with {len(distinct)} candidate products")
            spaces[s] = tuple(distinct)
            values[s] = np.ones((1, 1))
        else:
            for p in distinct:
                if p not in table.products:
                    raise BuildError(f"similarity table for {s!r} lacks candidate {p}")
            spaces[s] = table.products
            values[s] = table.values
    return spaces, values


def _constraint_matrix(space_t, space_c, applicable, big):
    """Penalty matrix in (trigger-space x consequent-space) orientation for
    one host's constraints on an ordered service pair."""
    mat = np.zeros((len(space_t), len(space_c)))
    for c in applicable:
        if c.trigger_product not in space_t:
            continue  # trigger can never be assigned here
        ti = space_t.index(c.trigger_product)
        if c.polarity == UNDESIRABLE:
            if c.consequent_product in space_c:
                mat[ti, space_c.index(c.consequent_product)] = big
        else:
            row = np.full(len(space_c), big)
            if c.consequent_product in space_c:
                row[space_c.index(c.consequent_product)] = 0.0
            mat[ti] = np.maximum(mat[ti], row)
    return mat


def build_problem(
    n: Network,
    tables: Sequence[SimilarityTable],
    constraints: Sequence[Constraint] = (),
    clamps: Sequence[Clamp] = (),
    config: SolverConfig | None = None,
    priors: Mapping[tuple[str, str], Mapping[ProductId, float]] | None = None,
) -> MrfProblem:
    """Compile network + tables + constraints + clamps into an MRF.

    Unary costs are zero unless per-label priors are supplied (a shared
    constant cannot change the argmin, so none is added). Each constraint
    applicable at a host contributes penalty entries on an intra-host edge:
    an undesirable combination costs BIG at (trigger, consequent); a
    desirable one costs BIG at (trigger, q) for every q other than the
    required consequent. BIG is raised above the maximum achievable
    similarity-plus-prior mass if the configured value does not clear it.
    """
    config = config or SolverConfig()
    violations = validate_network(n)
    if violations:
        raise ValidationError(
            "invalid network: " + "; ".join(str(v) for v in violations[:5])
        )
    known_services = set(n.services)
    for c in constraints:
        for s in (c.trigger_service, c.consequent_service):
            if s not in known_services:
                raise ValidationError(f"constraint references unknown service {s!r}")
    net = apply_clamps(n, clamps)
    spaces, values = _service_spaces(net, tables)

    nodes = net.slots()
    node_idx = {slot: k for k, slot in enumerate(nodes)}
    labels = [net.candidates[slot] for slot in nodes]
    unaries = []
    for k, slot in enumerate(nodes):
        u = np.zeros(len(labels[k]))
        if priors and slot in priors:
            for j, product in enumerate(labels[k]):
                u[j] = float(priors[slot].get(product, 0.0))
        unaries.append(u)
    maps = []
    for k, slot in enumerate(nodes):
        space = spaces[slot[1]]
        maps.append(np.array([space.index(p) for p in labels[k]], dtype=np.int32))

    pool: list[np.ndarray] = []
    pool_key: dict = {}

    def pool_id(key, builder):
        if key not in pool_key:
            pool_key[key] = len(pool)
            pool.append(builder())
        return pool_key[key]

    edges: list[tuple[int, int, int]] = []
    mass = sum(float(u.max()) for u in unaries)

    # inter-host edges: one per link per shared service
    for a, b in net.links:
        for s in net.services:
            ka = node_idx.get((a, s))
            kb = node_idx.get((b, s))
            if ka is None or kb is None:
                continue
            u, v = (ka, kb) if ka < kb else (kb, ka)
            mid = pool_id(("sim", s), lambda s=s: np.asarray(values[s]))
            edges.append((u, v, mid))
            mass += float(values[s].max())

    # intra-host constraint edges, merged per (host, node pair)
    big = config.big_penalty if config.big_penalty > mass else 10.0 * (mass + 1.0)
    per_pair: dict[tuple[int, int], list[Constraint]] = {}
    for h in net.hosts:
        have = set(net.host_services(h))
        for c in constraints:
            if c.scope != ALL_HOSTS and c.scope != h:
                continue
            if c.trigger_service not in have or c.consequent_service not in have:
                continue
            ku = node_idx[(h, c.trigger_service)]
            kv = node_idx[(h, c.consequent_service)]
            pair = (ku, kv) if ku < kv else (kv, ku)
            per_pair.setdefault(pair, []).append(c)
    for (u, v), applicable in sorted(per_pair.items()):
        su = nodes[u][1]
        sv = nodes[v][1]
        fwd = [c for c in applicable if c.trigger_service == su]
        rev = [c for c in applicable if c.trigger_service == sv]
        sig = tuple(
            sorted(
                (c.trigger_service, str(c.trigger_product), str(c.consequent_product), c.polarity)
                for c in applicable
            )
        )
        def build(su=su, sv=sv, fwd=tuple(fwd), rev=tuple(rev)):
            mat = _constraint_matrix(spaces[su], spaces[sv], fwd, big)
            if rev:
                mat = np.maximum(mat, _constraint_matrix(spaces[sv], spaces[su], rev, big).T)
            return mat
        mid = pool_id(("con", su, sv, sig), build)
        edges.append((u, v, mid))

    problem = MrfProblem(nodes, labels, unaries, edges, pool, maps, big=big)
    return problem


# -- energy and oracles --------------------------------------------------------


def energy_of_labels(p: MrfProblem, labels: np.ndarray) -> float:
    labels = np.asarray(labels, dtype=np.int32)
    if labels.shape != (p.n_nodes,):
        raise ValidationError("labeling has wrong length")
    nlab = np.array([len(l) for l in p.labels])
    if np.any(labels < 0) or np.any(labels >= nlab):
        raise ValidationError("label index outside its node's label set")
    c = p.compiled()
    return float(
        _trws.labeling_energy(
            labels, c.nlab, c.noff, c.unary, c.eu, c.ev,
            c.pool, c.poff, c.pcols, c.emid, c.eswap, c.map_flat,
        )
    )


def energy(p: MrfProblem, a: Assignment) -> float:
    """Total energy (unary plus pairwise cost) of an assignment."""
    return energy_of_labels(p, p.label_indices(a))


def brute_force(p: MrfProblem) -> tuple[Assignment, float]:
    """Exact global minimum by chunked exhaustive enumeration.

    Ties break toward the lexicographically smallest label vector. Refuses
    state spaces beyond the guard.
    """
    counts = np.array([len(l) for l in p.labels], dtype=np.int64)
    total = int(np.prod(counts.astype(object)))
    if total > BRUTE_FORCE_GUARD:
        raise GuardError(
            f"brute force refused: {total} labelings exceed the {BRUTE_FORCE_GUARD} guard"
        )
    strides = np.ones(p.n_nodes, dtype=np.int64)
    for k in range(p.n_nodes - 2, -1, -1):
        strides[k] = strides[k + 1] * counts[k + 1]
    unaries = p.unaries
    edge_costs = [p.edge_cost(m) for m in range(p.n_edges)]
    best_e = np.inf
    best_idx = -1
    for start in range(0, total, _BRUTE_CHUNK):
        idx = np.arange(start, min(start + _BRUTE_CHUNK, total), dtype=np.int64)
        per_node = [(idx // strides[k]) % counts[k] for k in range(p.n_nodes)]
        e = np.zeros(len(idx))
        for k in range(p.n_nodes):
            e += unaries[k][per_node[k]]
        for m in range(p.n_edges):
            e += edge_costs[m][per_node[p.edge_u[m]], per_node[p.edge_v[m]]]
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_idx = int(idx[k])
    labels = ((best_idx // strides) % counts).astype(np.int32)
    return p.assignment(labels), best_e


# -- TRW-S driver ----------------------------------------------------------------


def solve_trws(p: MrfProblem, config: SolverConfig | None = None, threads: int = 1) -> SolveResult:
    """Minimize the problem energy with sequential tree-reweighted message
    passing.

    Each iteration runs a forward sweep (which also extracts a candidate
    labeling from the reparameterized min-marginals, ties broken toward the
    lowest label index) and a backward sweep that updates the lower bound.
    The best labeling seen across iterations is returned. ``converged``
    means the lower bound improved by less than the configured tolerance
    over one full iteration; non-convergence is reported, never raised.
    The parallel-chain schedule yields bit-identical results to the
    sequential one.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    c = p.compiled()
    msg = np.zeros(c.msg_size)
    labels = np.zeros(p.n_nodes, dtype=np.int32)
    lb_contrib = np.zeros(p.n_nodes)
    parallel = config.schedule == PARALLEL_CHAIN
    if parallel:
        _trws.set_threads(threads)
    common = (
        c.nlab, c.noff, c.unary, c.eu, c.ev, c.moff_f, c.moff_b, msg,
        c.pool, c.poff, c.pcols, c.emid, c.eswap, c.map_flat,
        c.fof, c.flist, c.bof, c.blist, c.gamma,
    )
    trace: list[float] = []
    best_energy = np.inf
    best_labels = labels.copy()
    converged = False
    iterations = 0
    for it in range(config.max_iterations):
        if parallel:
            _trws.sweep_parallel(
                *common, c.nstart, labels, lb_contrib,
                c.order_f, c.loff_f, c.order_b, c.loff_b,
            )
        else:
            _trws.sweep_sequential(*common, c.nstart, labels, lb_contrib)
        iterations = it + 1
        lb = float(np.sum(lb_contrib))
        e = float(
            _trws.labeling_energy(
                labels, c.nlab, c.noff, c.unary, c.eu, c.ev,
                c.pool, c.poff, c.pcols, c.emid, c.eswap, c.map_flat,
            )
        )
        if e < best_energy:
            best_energy = e
            best_labels = labels.copy()
        trace.append(lb)
        if it >= 1 and trace[-1] - trace[-2] < config.tolerance:
            converged = True
            break
    lower_bound = trace[-1]
    wall_ms = (time.perf_counter() - t0) * 1e3
    return SolveResult(
        labeling=p.assignment(best_labels),
        labels=best_labels,
        energy=best_energy,
        lower_bound=lower_bound,
        gap=best_energy - lower_bound,
        iterations=iterations,
        converged=converged,
        trace=tuple(trace),
        wall_ms=wall_ms,
    )
