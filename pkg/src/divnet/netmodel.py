"""Network, assignment and configuration-constraint models.

A network is a set of hosts joined by undirected links; each host runs a
per-host set of services, and each (host, service) slot has an ordered list
of candidate products. An assignment picks one candidate per slot.
Constraints express conditional (un)desirable product combinations across
two services of a host; clamps pin a slot to a single product. All types
are immutable after construction and validation is pure, so everything here
is safe for shared concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import BuildError, ValidationError
from .seeding import rng
from .similarity import ProductId

ALL_HOSTS = "ALL"

UNDESIRABLE = "undesirable"
DESIRABLE = "desirable"


@dataclass(frozen=True)
class Violation:
    """One invariant violation, located by host / service / link."""

    kind: str
    locus: str
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.locus}: {self.detail}"


@dataclass(frozen=True)
class Network:
    hosts: tuple[str, ...]
    links: tuple[tuple[str, str], ...]
    services: tuple[str, ...]
    candidates: Mapping[tuple[str, str], tuple[ProductId, ...]]

    def __post_init__(self):
        object.__setattr__(self, "hosts", tuple(self.hosts))
        object.__setattr__(self, "links", tuple(tuple(l) for l in self.links))
        object.__setattr__(self, "services", tuple(self.services))
        object.__setattr__(
            self, "candidates", {k: tuple(v) for k, v in self.candidates.items()}
        )

    def host_services(self, host: str) -> tuple[str, ...]:
        """Services of one host, in global service order."""
        return tuple(s for s in self.services if (host, s) in self.candidates)

    def neighbors(self, host: str) -> tuple[str, ...]:
        out = []
        for a, b in self.links:
            if a == host:
                out.append(b)
            elif b == host:
                out.append(a)
        return tuple(out)

    def degree(self, host: str) -> int:
        return len(self.neighbors(host))

    def slots(self) -> tuple[tuple[str, str], ...]:
        """All (host, service) slots in deterministic order."""
        return tuple(
            (h, s) for h in self.hosts for s in self.services if (h, s) in self.candidates
        )


@dataclass(frozen=True)
class Assignment:
    choices: Mapping[tuple[str, str], ProductId]

    def __post_init__(self):
        object.__setattr__(self, "choices", dict(self.choices))

    def product(self, host: str, service: str) -> ProductId:
        return self.choices[(host, service)]

    def get(self, host: str, service: str) -> ProductId | None:
        return self.choices.get((host, service))


@dataclass(frozen=True)
class Constraint:
    """If ``trigger_service`` is assigned ``trigger_product`` at a host in
    scope, then ``consequent_service`` must (desirable) or must not
    (undesirable) be assigned ``consequent_product``."""

    scope: str  # host id, or ALL_HOSTS
    trigger_service: str
    trigger_product: ProductId
    consequent_service: str
    consequent_product: ProductId
    polarity: str  # DESIRABLE or UNDESIRABLE

    def __post_init__(self):
        if self.polarity not in (DESIRABLE, UNDESIRABLE):
            raise ValidationError(f"bad polarity {self.polarity!r}")
        if self.trigger_service == self.consequent_service:
            raise ValidationError("constraint must couple two different services")
        if self.trigger_product.service != self.trigger_service:
            raise ValidationError(f"trigger product {self.trigger_product} not in service {self.trigger_service!r}")
        if self.consequent_product.service != self.consequent_service:
            raise ValidationError(
                f"consequent product {self.consequent_product} not in service {self.consequent_service!r}"
            )


@dataclass(frozen=True)
class Clamp:
    host: str
    service: str
    product: ProductId


def validate_network(n: Network) -> list[Violation]:
    """Every invariant violation in the network; an empty list means valid."""
    out = []
    hosts = set(n.hosts)
    if len(hosts) != len(n.hosts):
        out.append(Violation("duplicate-host", "hosts", "host ids repeat"))
    seen = set()
    for a, b in n.links:
        locus = f"link ({a}, {b})"
        if a == b:
            out.append(Violation("self-loop", locus, "link joins a host to itself"))
        for h in (a, b):
            if h not in hosts:
                out.append(Violation("unknown-host", locus, f"host {h!r} not declared"))
        key = frozenset((a, b))
        if key in seen:
            out.append(Violation("duplicate-link", locus, "link appears more than once"))
        seen.add(key)
    services = set(n.services)
    for (h, s), cands in n.candidates.items():
        locus = f"({h}, {s})"
        if h not in hosts:
            out.append(Violation("unknown-host", locus, "candidate slot for undeclared host"))
        if s not in services:
            out.append(Violation("unknown-service", locus, "candidate slot for undeclared service"))
        if len(cands) == 0:
            out.append(Violation("empty-candidates", locus, "no candidate products"))
        for p in cands:
            if p.service != s:
                out.append(
                    Violation("service-mismatch", locus, f"candidate {p} belongs to {p.service!r}")
                )
        if len(set(cands)) != len(cands):
            out.append(Violation("duplicate-candidate", locus, "candidate list repeats a product"))
    return out


def validate_assignment(n: Network, a: Assignment) -> list[Violation]:
    """Totality over the network's slots plus candidate membership."""
    out = []
    slots = set(n.slots())
    for slot in slots:
        if slot not in a.choices:
            out.append(Violation("missing-choice", str(slot), "no product assigned"))
    for slot, product in a.choices.items():
        if slot not in slots:
            out.append(Violation("unknown-slot", str(slot), "assignment outside the network"))
        elif product not in n.candidates[slot]:
            out.append(Violation("not-a-candidate", str(slot), f"{product} not offered here"))
    return out


def check_constraints(
    a: Assignment, constraints: Sequence[Constraint]
) -> list[tuple[Constraint, str]]:
    """All (constraint, host) pairs violated by the assignment.

    An undesirable constraint is violated at a host when the trigger product
    is assigned and the consequent product is too; a desirable one when the
    trigger is assigned and the consequent product is not. ALL-scoped
    constraints are checked at every host carrying both services.
    """
    hosts = sorted({h for h, _ in a.choices})
    host_services = {h: {s for hh, s in a.choices if hh == h} for h in hosts}
    known_services = {s for _, s in a.choices}
    out = []
    for c in constraints:
        for s in (c.trigger_service, c.consequent_service):
            if s not in known_services:
                raise ValidationError(f"constraint references unknown service {s!r}")
        where = hosts if c.scope == ALL_HOSTS else [c.scope]
        for h in where:
            have = host_services.get(h, set())
            if c.trigger_service not in have or c.consequent_service not in have:
                continue
            if a.product(h, c.trigger_service) != c.trigger_product:
                continue
            actual = a.product(h, c.consequent_service)
            if c.polarity == UNDESIRABLE and actual == c.consequent_product:
                out.append((c, h))
            elif c.polarity == DESIRABLE and actual != c.consequent_product:
                out.append((c, h))
    return out


def mono_assignment(n: Network, preference: Mapping[str, Sequence[ProductId]]) -> Assignment:
    """Homogeneous assignment: per service, each host takes the first product
    of the preference order present in its candidate list (hosts offering
    none of the preferred products keep their own first candidate)."""
    choices = {}
    for h, s in n.slots():
        if s not in preference:
            raise ValidationError(f"preference order missing service {s!r}")
        cands = n.candidates[(h, s)]
        pick = next((p for p in preference[s] if p in cands), cands[0])
        choices[(h, s)] = pick
    return Assignment(choices)


def random_assignment(n: Network, seed: int) -> Assignment:
    """Uniform independent choice per slot; deterministic for a fixed seed."""
    gen = rng(seed, "random-assignment")
    choices = {}
    for slot in n.slots():
        cands = n.candidates[slot]
        choices[slot] = cands[int(gen.integers(len(cands)))]
    return Assignment(choices)


def apply_clamps(n: Network, clamps: Iterable[Clamp]) -> Network:
    """Restrict clamped slots to their required product.

    Conflicting clamps (same slot, different products) are a build error;
    a clamp whose product is not a candidate is a validation error.
    """
    required: dict[tuple[str, str], ProductId] = {}
    for c in clamps:
        slot = (c.host, c.service)
        if slot not in n.candidates:
            raise ValidationError(f"clamp on unknown slot {slot}")
        if c.product not in n.candidates[slot]:
            raise ValidationError(f"clamp product {c.product} not a candidate at {slot}")
        if slot in required and required[slot] != c.product:
            raise BuildError(f"conflicting clamps at {slot}: {required[slot]} vs {c.product}")
        required[slot] = c.product
    if not required:
        return n
    candidates = {
        slot: ((required[slot],) if slot in required else cands)
        for slot, cands in n.candidates.items()
    }
    return Network(n.hosts, n.links, n.services, candidates)
