"""Bayesian evaluation of a diversified network.

Given an assignment, the network is layered by breadth-first distance from
the entry (root) hosts; every retained link becomes an attack node whose
states are the exploitable products at the destination plus a silent
``none``. A compromised source attacks through each outgoing edge, choosing
uniformly among exploitable products; the chance the exploit then works is
the vulnerability similarity between the product exploited one hop earlier
and the newly chosen one when both belong to the same service, and an
average zero-day rate otherwise (also used for the attacker's first hop,
which cannot be a reuse). Multiple causes combine with the noisy-OR rule.

Two marginals are computed for every host: the similarity-aware probability
of compromise and a similarity-blind variant where every infection uses the
average rate; their ratio at the target host is the diversity metric (1 is
best). Inference is either exact (layer-by-layer elimination carrying joint
attack/host factors, guarded by state count) or by forward ancestral
sampling with deterministic chunked seeding.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BuildError, GuardError, MissingEntryError, ValidationError
from .netmodel import Assignment, Network
from .seeding import rng
from .similarity import ProductId, SimilarityTable

EXACT_GUARD = 10_000_000
_SAMPLE_CHUNK = 1 << 15

DEFAULT_P_AVG = 0.08


@dataclass(frozen=True)
class ExploitKit:
    """Services for which the attacker holds one zero-day exploit each."""

    services: tuple[str, ...]

    def __post_init__(self):
        services = tuple(dict.fromkeys(self.services))
        if not services:
            raise ValidationError("exploit kit must name at least one service")
        object.__setattr__(self, "services", services)


@dataclass(frozen=True)
class AttackNode:
    """One directed attack step; states are ``products`` plus silent none."""

    index: int
    src: str
    dst: str
    products: tuple[ProductId, ...]

    @property
    def n_states(self) -> int:
        return len(self.products) + 1

    @property
    def none_state(self) -> int:
        return len(self.products)


@dataclass(frozen=True)
class InferenceResult:
    method: str  # "exact" or "sampled"
    p: Mapping[str, float]
    p_prime: Mapping[str, float]
    samples: int | None = None
    se: Mapping[str, float] | None = None
    se_prime: Mapping[str, float] | None = None


def noisy_or(probs: Sequence[float]) -> float:
    """Combine independent compromise causes: 1 - prod(1 - p)."""
    acc = 1.0
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"probability {p} outside [0, 1]")
        acc *= 1.0 - p
    return 1.0 - acc


def infection_prob(
    prev: ProductId | None,
    cur: ProductId,
    tables: Mapping[str, SimilarityTable],
    p_avg: float = DEFAULT_P_AVG,
) -> float:
    """Chance an exploit that just worked against ``prev`` works against ``cur``.

    Same service: the vulnerability similarity of the two products. Different
    services, or no previous product (the attacker's first hop): the average
    zero-day rate.
    """
    if prev is None or prev.service != cur.service:
        return p_avg
    table = tables.get(cur.service)
    if table is None:
        raise MissingEntryError(f"no similarity table for service {cur.service!r}")
    return table.sim(prev, cur)


class BayesNet:
    """Layered attack DAG with per-pair infection probabilities baked in."""

    def __init__(self, network, assignment, roots, target, kit, p_avg, tables):
        self.network = network
        self.assignment = assignment
        self.roots = tuple(roots)
        self.target = target
        self.kit = kit
        self.p_avg = float(p_avg)
        self.tables = dict(tables)
        self.hosts: tuple[str, ...] = ()
        self.layer: dict[str, int] = {}
        self.attack_nodes: tuple[AttackNode, ...] = ()
        self.incoming: dict[str, tuple[int, ...]] = {}
        self.preds: tuple[tuple[int, ...], ...] = ()
        self.entry_q: dict[int, np.ndarray] = {}
        self.pair_q: dict[tuple[int, int], np.ndarray] = {}
        self.dropped_edges: tuple[tuple[str, str], ...] = ()

    def layers(self) -> list[list[str]]:
        depth = max(self.layer.values()) + 1 if self.layer else 0
        out: list[list[str]] = [[] for _ in range(depth)]
        for h in self.hosts:
            out[self.layer[h]].append(h)
        return out

    def prior(self, host: str) -> float:
        for h, p in self.roots:
            if h == host:
                return p
        return 0.0


def build_bn(
    n: Network,
    a: Assignment,
    roots: Sequence[tuple[str, float]],
    target: str,
    kit: ExploitKit,
    p_avg: float = DEFAULT_P_AVG,
    tables: Mapping[str, SimilarityTable] | Sequence[SimilarityTable] = (),
) -> BayesNet:
    """Construct the evaluation network for one assignment.

    Hosts are layered by BFS distance from the root set; links are directed
    from lower to strictly higher layers, and same-layer links (which would
    create cycles) are dropped and reported. Each attack node's predecessor
    attack nodes (those into its source host) feed the destination host's
    compromise probability through the exploit-reuse similarities.
    """
    if not isinstance(tables, Mapping):
        tables = {t.service: t for t in tables}
    host_set = set(n.hosts)
    seen_roots = set()
    for host, prior in roots:
        if host not in host_set:
            raise ValidationError(f"root host {host!r} not in network")
        if host in seen_roots:
            raise ValidationError(f"root host {host!r} listed twice")
        if not 0.0 < prior <= 1.0:
            raise ValidationError(f"root prior {prior} outside (0, 1]")
        seen_roots.add(host)
    if target not in host_set:
        raise ValidationError(f"target host {target!r} not in network")
    if not roots:
        raise ValidationError("at least one root host is required")
    for s in kit.services:
        if s not in n.services:
            raise ValidationError(f"kit service {s!r} not in network")

    adjacency: dict[str, list[str]] = {h: [] for h in n.hosts}
    for x, y in n.links:
        adjacency[x].append(y)
        adjacency[y].append(x)

    layer = {host: 0 for host, _ in roots}
    frontier = [host for host, _ in roots]
    while frontier:
        nxt = []
        for h in frontier:
            for nb in adjacency[h]:
                if nb not in layer:
                    layer[nb] = layer[h] + 1
                    nxt.append(nb)
        frontier = nxt
    if target not in layer:
        raise BuildError(f"target {target!r} unreachable from every root")

    bn = BayesNet(n, a, roots, target, kit, p_avg, tables)
    bn.layer = layer
    bn.hosts = tuple(sorted(layer, key=lambda h: (layer[h], n.hosts.index(h))))

    kit_services = tuple(s for s in n.services if s in kit.services)

    def exploitable(dst: str) -> tuple[ProductId, ...]:
        out = []
        for s in kit_services:
            product = a.get(dst, s)
            if product is not None:
                out.append(product)
        return tuple(out)

    nodes: list[AttackNode] = []
    dropped: list[tuple[str, str]] = []
    incoming: dict[str, list[int]] = {h: [] for h in bn.hosts}
    for x, y in n.links:
        if x not in layer or y not in layer:
            dropped.append((x, y))
            continue
        if layer[x] == layer[y]:
            dropped.append((x, y))
            continue
        src, dst = (x, y) if layer[x] < layer[y] else (y, x)
        node = AttackNode(len(nodes), src, dst, exploitable(dst))
        nodes.append(node)
        incoming[dst].append(node.index)
    bn.attack_nodes = tuple(nodes)
    bn.dropped_edges = tuple(dropped)
    bn.incoming = {h: tuple(v) for h, v in incoming.items()}
    bn.preds = tuple(bn.incoming[e.src] for e in nodes)

    # infection-probability lookups, indexed by (state of previous attack
    # node, state of this one); the silent column/row contributes nothing.
    for e in nodes:
        if not bn.preds[e.index]:
            q = np.zeros(e.n_states)
            q[: len(e.products)] = p_avg
            bn.entry_q[e.index] = q
        else:
            for pe_idx in bn.preds[e.index]:
                pe = nodes[pe_idx]
                q = np.zeros((pe.n_states, e.n_states))
                for i, prev in enumerate(pe.products):
                    for j, cur in enumerate(e.products):
                        q[i, j] = infection_prob(prev, cur, tables, p_avg)
                bn.pair_q[(pe_idx, e.index)] = q
    return bn


def attack_cpt(bn: BayesNet, e: AttackNode) -> np.ndarray:
    """Rows: source host state (clean, compromised); columns: states of e.

    A clean source stays silent; a compromised one picks uniformly among the
    exploitable products, or stays silent when there are none.
    """
    cpt = np.zeros((2, e.n_states))
    cpt[0, e.none_state] = 1.0
    k = len(e.products)
    if k:
        cpt[1, :k] = 1.0 / k
    else:
        cpt[1, e.none_state] = 1.0
    return cpt


def diversity_metric(result: InferenceResult, target: str) -> float:
    """Similarity-blind over similarity-aware compromise probability at the
    target; 1 means the assignment realizes the network's full diversity
    potential."""
    p = result.p.get(target)
    p_prime = result.p_prime.get(target)
    if p is None or p_prime is None:
        raise ValidationError(f"no marginal for target {target!r}")
    if p == 0.0:
        raise ValidationError("diversity metric undefined: target compromise probability is 0")
    return p_prime / p


# -- exact inference -----------------------------------------------------------


def _layer_attack_groups(bn: BayesNet) -> list[list[int]]:
    layers = bn.layers()
    groups: list[list[int]] = [[] for _ in layers]
    for e in bn.attack_nodes:
        groups[bn.layer[e.dst]].append(e.index)
    return groups


def exact_state_count(bn: BayesNet) -> int:
    """Largest joint (attack, host, attack) factor the elimination carries."""
    layers = bn.layers()
    groups = _layer_attack_groups(bn)
    worst = 1
    for lev in range(1, len(layers)):
        sa_prev = 1
        for e in groups[lev - 1]:
            sa_prev *= bn.attack_nodes[e].n_states
        sa = 1
        for e in groups[lev]:
            sa *= bn.attack_nodes[e].n_states
        width = sa_prev * sa * (1 << len(layers[lev - 1]))
        worst = max(worst, width)
    return worst


def _exact_marginals(bn: BayesNet, aware: bool) -> dict[str, float]:
    layers = bn.layers()
    groups = _layer_attack_groups(bn)
    marginals: dict[str, float] = {}

    prev_hosts = layers[0]
    for h in prev_hosts:
        marginals[h] = bn.prior(h)
    n_prev = len(prev_hosts)
    masks = np.arange(1 << n_prev)
    bits = [(masks >> i) & 1 for i in range(n_prev)]
    j = np.ones(1 << n_prev)
    for i, h in enumerate(prev_hosts):
        pr = bn.prior(h)
        j *= np.where(bits[i], pr, 1.0 - pr)
    j = j[None, :]  # (prev attack states = 1, prev host masks)
    prev_group: list[int] = []

    for lev in range(1, len(layers)):
        hosts = layers[lev]
        group = groups[lev]
        sa_prev = j.shape[0]
        # states of this layer's attack nodes, decoded per node
        sa = 1
        for e in group:
            sa *= bn.attack_nodes[e].n_states
        st = {}
        stride = sa
        for e in group:
            k = bn.attack_nodes[e].n_states
            stride //= k
            st[e] = (np.arange(sa) // stride) % k
        # transition: joint over (prev attack states, this layer's attack states)
        w = np.ones((j.shape[1], sa))
        src_pos = {h: i for i, h in enumerate(prev_hosts)}
        for e in group:
            node = bn.attack_nodes[e]
            cpt = attack_cpt(bn, node)
            w *= cpt[bits[src_pos[node.src]][:, None], st[e][None, :]]
        u = j @ w  # (sa_prev, sa)

        st_prev = {}
        if prev_group:
            stride = sa_prev
            for e in prev_group:
                k = bn.attack_nodes[e].n_states
                stride //= k
                st_prev[e] = (np.arange(sa_prev) // stride) % k

        # per-host compromise probability as a (sa_prev, sa) array
        p_host = []
        for h in hosts:
            keep = np.ones((sa_prev, sa))
            for e in bn.incoming[h]:
                node = bn.attack_nodes[e]
                if not aware:
                    active = st[e] != node.none_state
                    keep = keep * np.where(active, 1.0 - bn.p_avg, 1.0)[None, :]
                elif not bn.preds[e]:
                    keep = keep * (1.0 - bn.entry_q[e][st[e]])[None, :]
                else:
                    for pe in bn.preds[e]:
                        q = bn.pair_q[(pe, e)]
                        keep = keep * (1.0 - q[st_prev[pe][:, None], st[e][None, :]])
            p_host.append(1.0 - keep)
        total = u.sum()
        for h, ph in zip(hosts, p_host):
            marginals[h] = float((u * ph).sum() / total)

        # fold in this layer's host states for the next transition
        n_h = len(hosts)
        nxt = np.zeros((sa, 1 << n_h))
        for mask in range(1 << n_h):
            prob = np.ones((sa_prev, sa))
            for i in range(n_h):
                prob = prob * (p_host[i] if (mask >> i) & 1 else 1.0 - p_host[i])
            nxt[:, mask] = (u * prob).sum(axis=0)
        j = nxt
        prev_hosts = hosts
        prev_group = group
        masks = np.arange(1 << n_h)
        bits = [(masks >> i) & 1 for i in range(n_h)]
    return marginals


# -- sampling ---------------------------------------------------------------------


def _sample_world(bn, uniforms, cursor, aware, chunk):
    """One ancestral world per sample; returns per-host compromised booleans."""
    none_of = {e.index: e.none_state for e in bn.attack_nodes}
    host_state: dict[str, np.ndarray] = {}
    attack_state: dict[int, np.ndarray] = {}
    for h in bn.layers()[0]:
        host_state[h] = uniforms[cursor] < bn.prior(h)
        cursor += 1
    groups = _layer_attack_groups(bn)
    layers = bn.layers()
    for lev in range(1, len(layers)):
        for e in groups[lev]:
            node = bn.attack_nodes[e]
            k = len(node.products)
            if k:
                pick = np.minimum((uniforms[cursor] * k).astype(np.int64), k - 1)
            else:
                pick = np.full(chunk, node.none_state, dtype=np.int64)
            attack_state[e] = np.where(host_state[node.src], pick, none_of[e])
            cursor += 1
        for h in layers[lev]:
            keep = np.ones(chunk)
            for e in bn.incoming[h]:
                node = bn.attack_nodes[e]
                st = attack_state[e]
                if not aware:
                    keep *= np.where(st != node.none_state, 1.0 - bn.p_avg, 1.0)
                elif not bn.preds[e]:
                    keep *= 1.0 - bn.entry_q[e][st]
                else:
                    for pe in bn.preds[e]:
                        keep *= 1.0 - bn.pair_q[(pe, e)][attack_state[pe], st]
            host_state[h] = uniforms[cursor] < (1.0 - keep)
            cursor += 1
    return host_state, cursor


def _sample_chunk(bn, seed, chunk_index, chunk):
    gen = rng(seed, "bn-sample", chunk_index)
    n_slots = 2 * (len(bn.hosts) + len(bn.attack_nodes))
    uniforms = gen.random((n_slots, chunk))
    aware_states, cursor = _sample_world(bn, uniforms, 0, True, chunk)
    blind_states, _ = _sample_world(bn, uniforms, cursor, False, chunk)
    counts = np.array([aware_states[h].sum() for h in bn.hosts], dtype=np.int64)
    counts_prime = np.array([blind_states[h].sum() for h in bn.hosts], dtype=np.int64)
    return counts, counts_prime


def _sampled_marginals(bn: BayesNet, samples: int, seed: int, threads: int):
    n_chunks = (samples + _SAMPLE_CHUNK - 1) // _SAMPLE_CHUNK
    sizes = [
        _SAMPLE_CHUNK if i < n_chunks - 1 else samples - _SAMPLE_CHUNK * (n_chunks - 1)
        for i in range(n_chunks)
    ]
    totals = np.zeros(len(bn.hosts), dtype=np.int64)
    totals_prime = np.zeros(len(bn.hosts), dtype=np.int64)
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: _sample_chunk(bn, seed, i, sizes[i]), range(n_chunks)))
    else:
        results = [_sample_chunk(bn, seed, i, sizes[i]) for i in range(n_chunks)]
    for counts, counts_prime in results:
        totals += counts
        totals_prime += counts_prime
    p = totals / samples
    p_prime = totals_prime / samples
    se = np.sqrt(p * (1.0 - p) / samples)
    se_prime = np.sqrt(p_prime * (1.0 - p_prime) / samples)
    return (
        dict(zip(bn.hosts, p.tolist())),
        dict(zip(bn.hosts, p_prime.tolist())),
        dict(zip(bn.hosts, se.tolist())),
        dict(zip(bn.hosts, se_prime.tolist())),
    )


def infer(
    bn: BayesNet,
    method: str = "exact",
    samples: int = 1_000_000,
    seed: int = 0,
    threads: int = 1,
) -> InferenceResult:
    """Compromise marginals for every retained host, in both worlds.

    ``exact`` eliminates layer by layer, carrying the joint over consecutive
    attack layers and the host states between them; it refuses when the
    largest such factor exceeds the guard. ``sample`` draws ancestral
    samples in deterministic chunks (safe to parallelize; the merge is
    order-independent).
    """
    if method == "exact":
        width = exact_state_count(bn)
        if width > EXACT_GUARD:
            raise GuardError(
                f"exact inference refused: factor width {width} exceeds "
                f"{EXACT_GUARD}; use method='sample'"
            )
        p = _exact_marginals(bn, aware=True)
        p_prime = _exact_marginals(bn, aware=False)
        return InferenceResult(method="exact", p=p, p_prime=p_prime)
    if method == "sample":
        if samples < 1:
            raise ValidationError("samples must be >= 1")
        p, p_prime, se, se_prime = _sampled_marginals(bn, samples, seed, threads)
        for host, _ in bn.roots:
            p[host] = bn.prior(host)
            p_prime[host] = bn.prior(host)
            se[host] = 0.0
            se_prime[host] = 0.0
        return InferenceResult(
            method="sampled", p=p, p_prime=p_prime, samples=samples, se=se, se_prime=se_prime
        )
    raise ValidationError(f"unknown inference method {method!r}")
