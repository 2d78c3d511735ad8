"""Scenario files: network + constraints + clamps + similarity tables.

A scenario is a single JSON document with top-level keys ``hosts`` (array of
{id, services: {service: [product ids]}}), ``links`` (array of host-id
pairs), ``constraints``, ``clamps`` and ``tables`` (inline tables or paths
to table CSV files, resolved relative to the scenario file). Unknown keys
are rejected in strict mode and warned about otherwise. Loading validates
the network and raises with the violation list.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .netmodel import (
    ALL_HOSTS,
    DESIRABLE,
    UNDESIRABLE,
    Clamp,
    Constraint,
    Network,
    validate_network,
)
from .similarity import ProductId, SimilarityTable, load_table

_TOP_KEYS = {"hosts", "links", "constraints", "clamps", "tables"}


@dataclass
class Scenario:
    network: Network
    tables: list[SimilarityTable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    clamps: list[Clamp] = field(default_factory=list)

    def tables_by_service(self) -> dict[str, SimilarityTable]:
        return {t.service: t for t in self.tables}


def _check_keys(obj, allowed, where, strict):
    unknown = set(obj) - set(allowed)
    if unknown:
        msg = f"unknown keys in {where}: {sorted(unknown)}"
        if strict:
            raise FormatError(msg)
        warnings.warn(msg)


def _parse_product(obj, where) -> ProductId:
    _check = ("service", "product")
    for k in _check:
        if k not in obj:
            raise FormatError(f"{where}: missing {k!r}")
    return ProductId(obj["service"], obj["product"])


def _parse_table(obj, strict) -> SimilarityTable:
    _check_keys(obj, {"service", "products", "values", "shared", "totals"}, "table", strict)
    for k in ("service", "products", "values"):
        if k not in obj:
            raise FormatError(f"inline table missing {k!r}")
    products = tuple(ProductId(obj["service"], p) for p in obj["products"])
    try:
        return SimilarityTable(
            obj["service"], products, np.asarray(obj["values"], dtype=float),
            shared=obj.get("shared"), totals=obj.get("totals"),
        )
    except ValidationError as exc:
        raise FormatError(f"inline table: {exc}") from None


def load_scenario(source, strict: bool = False) -> Scenario:
    if hasattr(source, "read"):
        raw = source.read()
        base_dir = Path(".")
    else:
        path = Path(source)
        raw = path.read_text(encoding="utf-8")
        base_dir = path.parent
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("scenario must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "scenario", strict)
    if "hosts" not in doc:
        raise FormatError("scenario missing 'hosts'")

    hosts = []
    candidates = {}
    services: list[str] = []
    for rec in doc["hosts"]:
        _check_keys(rec, {"id", "services"}, f"host record {rec.get('id')!r}", strict)
        if "id" not in rec:
            raise FormatError("host record missing 'id'")
        host = rec["id"]
        hosts.append(host)
        for service, products in (rec.get("services") or {}).items():
            if service not in services:
                services.append(service)
            candidates[(host, service)] = tuple(ProductId(service, p) for p in products)

    links = tuple((a, b) for a, b in doc.get("links", []))

    constraints = []
    for rec in doc.get("constraints", []):
        _check_keys(rec, {"scope", "trigger", "consequent", "polarity"}, "constraint", strict)
        polarity = rec.get("polarity")
        if polarity not in (DESIRABLE, UNDESIRABLE):
            raise FormatError(f"constraint polarity must be '{DESIRABLE}' or '{UNDESIRABLE}'")
        trigger = _parse_product(rec.get("trigger", {}), "constraint trigger")
        consequent = _parse_product(rec.get("consequent", {}), "constraint consequent")
        constraints.append(
            Constraint(
                rec.get("scope", ALL_HOSTS),
                trigger.service, trigger, consequent.service, consequent, polarity,
            )
        )

    clamps = []
    for rec in doc.get("clamps", []):
        _check_keys(rec, {"host", "service", "product"}, "clamp", strict)
        for k in ("host", "service", "product"):
            if k not in rec:
                raise FormatError(f"clamp missing {k!r}")
        clamps.append(Clamp(rec["host"], rec["service"], ProductId(rec["service"], rec["product"])))

    tables = []
    for rec in doc.get("tables", []):
        if isinstance(rec, str):
            tables.append(load_table(base_dir / rec))
        else:
            tables.append(_parse_table(rec, strict))

    network = Network(tuple(hosts), links, tuple(services), candidates)
    violations = validate_network(network)
    if violations:
        raise ValidationError(
        "invalid scenario network: " + "; ".join(str(v) for v in violations)
        )
    return Scenario(network, tables, constraints, clamps)


def scenario_to_dict(s: Scenario) -> dict:
    hosts = []
    for host in s.network.hosts:
        svc = {}
        for service in s.network.host_services(host):
            svc[service] = [p.cpe for p in s.network.candidates[(host, service)]]
        hosts.append({"id": host, "services": svc})
    tables = []
    for t in s.tables:
        rec = {
            "service": t.service,
            "products": [p.cpe for p in t.products],
            "values": [[float(v) for v in row] for row in t.values],
        }
        if t.shared is not None:
            rec["shared"] = [[int(v) for v in row] for row in t.shared]
            rec["totals"] = [int(v) for v in t.totals]
        tables.append(rec)
    return {
        "hosts": hosts,
        "links": [[a, b] for a, b in s.network.links],
        "constraints": [
            {
                "scope": c.scope,
                "trigger": {"service": c.trigger_service, "product": c.trigger_product.cpe},
                "consequent": {"service": c.consequent_service, "product": c.consequent_product.cpe},
                "polarity": c.polarity,
            }
            for c in s.constraints
        ],
        "clamps": [
            {"host": c.host, "service": c.service, "product": c.product.cpe} for c in s.clamps
        ],
        "tables": tables,
    }


def save_scenario(s: Scenario, sink) -> None:
    text = json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def assignment_to_dict(a) -> dict:
    out: dict[str, dict[str, str]] = {}
    for (host, service), product in a.choices.items():
        out.setdefault(host, {})[service] = product.cpe
    return {h: dict(sorted(v.items())) for h, v in sorted(out.items())}


def save_assignment(a, sink) -> None:
    text = json.dumps(assignment_to_dict(a), indent=2, sort_keys=True) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def load_assignment(source, network: Network):
    """Parse a host -> {service: product} map, resolving products against the
    network's candidate lists."""
    from .netmodel import Assignment

    if hasattr(source, "read"):
        raw = source.read()
    else:
        raw = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"assignment is not valid JSON: {exc}") from None
    choices = {}
    for host, per_service in doc.items():
        for service, cpe in per_service.items():
            slot = (host, service)
            if slot not in network.candidates:
                raise ValidationError(f"assignment names unknown slot {slot}")
            product = ProductId(service, cpe)
            if product not in network.candidates[slot]:
                raise ValidationError(f"{product} is not a candidate at {slot}")
            choices[slot] = product
    missing = [slot for slot in network.slots() if slot not in choices]
    if missing:
        raise ValidationError(f"assignment missing slots: {missing[:5]}")
    return Assignment(choices)
