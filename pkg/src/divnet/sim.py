"""Monte-Carlo malware-propagation simulator (mean time to compromise).

Discrete synchronous rounds: tick 0 infects the entry host; on every tick,
each infected host attacks each uninfected neighbor once. The success
probability of an attempt in direction src -> dst is, per exploit-kit
service, the similarity of the two assigned products when both hosts run
the service, or the average zero-day rate when only the destination does;
the greedy policy always uses the best applicable rate, the uniform policy
picks an applicable exploit uniformly first. A run ends when the target is
infected or at the tick cap (censored). Success probabilities depend only
on the endpoint products, not on exploitation history, and there is no
disinfection.

Trials are embarrassingly parallel: per-run seeds derive from the master
seed and run index, so reports do not depend on execution schedule.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .bayes import ExploitKit
from .errors import ValidationError
from .netmodel import Assignment, Network
from .seeding import rng
from .similarity import SimilarityTable

GREEDY = "greedy-max"
UNIFORM = "uniform"


@dataclass(frozen=True)
class SimScenario:
    network: Network
    assignment: Assignment
    tables: Mapping[str, SimilarityTable]
    entry: str
    target: str
    kit: ExploitKit
    p_avg: float = 0.08
    policy: str = GREEDY
    max_ticks: int = 10_000
    runs: int = 1000

    def __post_init__(self):
        if self.entry == self.target:
            raise ValidationError("entry and target must differ")
        for h in (self.entry, self.target):
            if h not in self.network.hosts:
                raise ValidationError(f"host {h!r} not in network")
        if self.policy not in (GREEDY, UNIFORM):
            raise ValidationError(f"unknown policy {self.policy!r}")
        if self.max_ticks < 1:
            raise ValidationError("max_ticks must be >= 1")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if not isinstance(self.tables, Mapping):
            object.__setattr__(self, "tables", {t.service: t for t in self.tables})


@dataclass(frozen=True)
class EdgeRates:
    """Per-direction success rates; ``best`` is the maximum over applicable
    exploits, ``per_service`` the breakdown."""

    best: Mapping[tuple[str, str], float]
    per_service: Mapping[tuple[str, str], Mapping[str, float]]

    def rate(self, src: str, dst: str) -> float:
        return self.best.get((src, dst), 0.0)


@dataclass(frozen=True)
class SimReport:
    mttc_mean: float | None
    mttc_std: float | None
    success_count: int
    censored_count: int
    ticks: tuple[int | None, ...]
    seed: int

    @property
    def runs(self) -> int:
        return len(self.ticks)


def edge_rates(
    n: Network,
    a: Assignment,
    tables: Mapping[str, SimilarityTable] | Sequence[SimilarityTable],
    kit: ExploitKit,
    p_avg: float = 0.08,
) -> EdgeRates:
    """Infection rate of the best applicable exploit per link direction.

    For each kit service: the product similarity when both endpoints run the
    service, the average rate when only the destination does, nothing when
    the destination lacks it.
    """
    if not isinstance(tables, Mapping):
        tables = {t.service: t for t in tables}
    best: dict[tuple[str, str], float] = {}
    breakdown: dict[tuple[str, str], dict[str, float]] = {}
    for x, y in n.links:
        for src, dst in ((x, y), (y, x)):
            rates: dict[str, float] = {}
            for s in n.services:
                if s not in kit.services:
                    continue
                cur = a.get(dst, s)
                if cur is None:
                    continue
                prev = a.get(src, s)
                if prev is None:
                    rates[s] = p_avg
                else:
                    table = tables.get(s)
                    if table is None:
                        raise ValidationError(f"no similarity table for service {s!r}")
                    rates[s] = table.sim(prev, cur)
            best[(src, dst)] = max(rates.values()) if rates else 0.0
            breakdown[(src, dst)] = rates
    return EdgeRates(best, breakdown)


def run_once(s: SimScenario, seed: int, rates: EdgeRates | None = None):
    """One simulated propagation; returns (ticks-to-target or None, trace).

    The trace lists (tick, host) infection events, entry included.
    """
    if rates is None:
        rates = edge_rates(s.network, s.assignment, s.tables, s.kit, s.p_avg)
    gen = rng(seed, "sim-run")
    infected = {s.entry}
    trace = [(0, s.entry)]
    if s.entry == s.target:  # unreachable per invariant, kept for safety
        return 0, trace
    neighbors = {h: s.network.neighbors(h) for h in s.network.hosts}
    uniform = s.policy == UNIFORM
    for tick in range(1, s.max_ticks + 1):
        newly = []
        for src in sorted(infected):
            for dst in neighbors[src]:
                if dst in infected or dst in newly:
                    continue
                if uniform:
                    options = sorted(rates.per_service[(src, dst)].items())
                    if not options:
                        continue
                    rate = options[int(gen.integers(len(options)))][1]
                else:
                    rate = rates.rate(src, dst)
                if rate > 0.0 and gen.random() < rate:
                    newly.append(dst)
        for dst in newly:
            infected.add(dst)
            trace.append((tick, dst))
        if s.target in infected:
            return tick, trace
        if not newly and all(
            rates.rate(src, dst) == 0.0
            for src in infected
            for dst in neighbors[src]
            if dst not in infected
        ):
            break  # no attempt can ever succeed; skip to censoring
    return None, trace


def mttc(s: SimScenario, master_seed: int, threads: int = 1) -> SimReport:
    """Aggregate ticks-to-target over independent runs.

    The mean and standard deviation cover successful runs only; runs that
    hit the tick cap are reported as censored. Fully reproducible for a
    fixed master seed, regardless of thread count.
    """
    rates = edge_rates(s.network, s.assignment, s.tables, s.kit, s.p_avg)
    from .seeding import derive_seed

    def one(i: int):
        return run_once(s, derive_seed(master_seed, "run", i), rates)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ticks = list(pool.map(one, range(s.runs)))
    else:
        ticks = [one(i) for i in range(s.runs)]
    successes = [t for t in ticks if t is not None]
    if successes:
        arr = np.array(successes, dtype=float)
        mean = float(arr.mean())
        std = float(arr.std())
    else:
        mean = None
        std = None
    return SimReport(
        mttc_mean=mean,
        mttc_std=std,
        success_count=len(successes),
        censored_count=len(ticks) - len(successes),
        ticks=tuple(ticks),
        seed=master_seed,
    )
