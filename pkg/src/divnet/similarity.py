"""Vulnerability-similarity analysis of off-the-shelf products.

Products are identified by CPE-style strings and grouped into service
categories (operating system, web browser, database, ...). Ingesting a
vulnerability feed yields, per product, the set of CVE ids affecting it;
the similarity of two products is the Jaccard coefficient of their
vulnerability sets, an estimate of the chance that one working exploit
compromises both. Pairwise similarities are materialized as per-service
``SimilarityTable`` objects which the optimizer and the evaluation models
consume.

Feeds are always ingested from files or byte streams, never from a live
service, so results are reproducible from a snapshot.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import FeedParseError, FormatError, MissingEntryError, ValidationError

CVE_PATTERN = re.compile(r"^CVE-\d{4}-\d{1,10}$", re.IGNORECASE)

CSV_HEADER = ["service", "product_a", "product_b", "similarity", "shared", "total_a", "total_b"]


@dataclass(frozen=True, order=True)
class ProductId:
    """A single product release, identified by service category and CPE string.

    Each distinct CPE string is a distinct product; identifiers compare
    case-insensitively (they are case-folded at construction).
    """

    service: str
    cpe: str

    def __post_init__(self):
        if not self.service or not self.cpe:
            raise ValidationError("ProductId requires a non-empty service and identifier")
        object.__setattr__(self, "service", self.service.strip().casefold())
        object.__setattr__(self, "cpe", self.cpe.strip().casefold())

    def __str__(self):
        return f"{self.service}:{self.cpe}"


def _cpe_components(cpe: str) -> tuple[str, ...]:
    """Normalize a CPE string (2.3 or legacy URI) to a component tuple.

    Trailing wildcard components (``*``, ``-``, empty) are dropped so that
    ``cpe:2.3:o:microsoft:windows_7:*:*...`` and ``cpe:/o:microsoft:windows_7``
    normalize identically.
    """
    s = cpe.strip().casefold()
    if s.startswith("cpe:2.3:"):
        parts = s.split(":")[2:]
    elif s.startswith("cpe:/"):
        parts = s[len("cpe:/"):].split(":")
    else:
        parts = s.split(":")
    while parts and parts[-1] in ("", "*", "-"):
        parts.pop()
    return tuple(parts)


def cpe_matches(filter_cpe: str, candidate_cpe: str, exact: bool = False) -> bool:
    """Whether ``candidate_cpe`` falls under ``filter_cpe``.

    Prefix mode (default) matches versioned sub-entries component-wise, so
    a product filter matches all of its release/update records; exact mode
    requires identical normalized components.
    """
    want = _cpe_components(filter_cpe)
    have = _cpe_components(candidate_cpe)
    if exact:
        return want == have
    return have[: len(want)] == want


@dataclass(frozen=True)
class VulnCatalog:
    """Per-product vulnerability sets extracted from a feed snapshot."""

    entries: Mapping[ProductId, frozenset[str]]
    source_meta: str = ""

    def __post_init__(self):
        clean = {}
        for product, vulns in self.entries.items():
            ids = frozenset(v.strip().upper() for v in vulns)
            for v in ids:
                if not CVE_PATTERN.match(v):
                    raise ValidationError(f"bad vulnerability id {v!r} for {product}")
            clean[product] = ids
        object.__setattr__(self, "entries", clean)

    def products(self) -> tuple[ProductId, ...]:
        return tuple(self.entries)

    def vulns(self, product: ProductId) -> frozenset[str]:
        try:
            return self.entries[product]
        except KeyError:
            raise MissingEntryError(f"product {product} not in catalog") from None


def _iter_feed_records(data, fmt: str):
    """Yield (cve_id, [cpe strings], record locator) from a parsed feed."""
    if fmt == "plain":
        if not isinstance(data, dict):
            raise FeedParseError("plain feed must be a JSON object mapping CVE id to CPE list")
        for idx, (cve, cpes) in enumerate(data.items()):
            if not isinstance(cve, str) or not CVE_PATTERN.match(cve.strip()):
                raise FeedParseError(f"key {cve!r} is not a CVE id", record=idx)
            if not isinstance(cpes, list) or not all(isinstance(c, str) for c in cpes):
                raise FeedParseError(f"value for {cve} must be a list of CPE strings", record=cve)
            yield cve.strip().upper(), cpes, cve
    elif fmt == "nvd":
        items = data.get("CVE_Items")
        if not isinstance(items, list):
            raise FeedParseError("NVD feed missing CVE_Items array")
        for idx, item in enumerate(items):
            try:
                cve = item["cve"]["CVE_data_meta"]["ID"]
            except (TypeError, KeyError):
                raise FeedParseError("record missing cve.CVE_data_meta.ID", record=idx) from None
            if not isinstance(cve, str) or not CVE_PATTERN.match(cve.strip()):
                raise FeedParseError(f"{cve!r} is not a CVE id", record=idx)
            cpes = []
            nodes = list((item.get("configurations") or {}).get("nodes") or [])
            while nodes:
                node = nodes.pop()
                if not isinstance(node, dict):
                    raise FeedParseError("configurations node is not an object", record=cve)
                nodes.extend(node.get("children") or [])
                for match in node.get("cpe_match") or []:
                    uri = match.get("cpe23Uri") or match.get("cpeUri")
                    if uri:
                        cpes.append(uri)
            yield cve.strip().upper(), cpes, cve
    else:
        raise FormatError(f"unknown feed format {fmt!r}")


def _detect_format(data) -> str:
    if isinstance(data, dict) and "CVE_Items" in data:
        return "nvd"
    if isinstance(data, dict) and all(
        isinstance(k, str) and CVE_PATTERN.match(k.strip()) for k in data
    ) and data:
        return "plain"
    raise FormatError("feed matches no supported format (plain CVE map or NVD JSON)")


def ingest_feed(
    feed,
    products: Sequence[ProductId],
    fmt: str | None = None,
    exact: bool = False,
    source_meta: str = "",
) -> VulnCatalog:
    """Parse a vulnerability feed and filter it down to ``products``.

    ``feed`` may be bytes, a JSON string, a readable file object or a path.
    Supported formats: ``plain`` (JSON object mapping CVE id to an array of
    CPE strings) and ``nvd`` (the NVD JSON feed subset); ``fmt=None``
    auto-detects. Every filtered product appears in the catalog, with an
    empty set when nothing matched.
    """
    products = list(products)
    if not products:
        raise ValidationError("product filter must be non-empty")
    if hasattr(feed, "read"):
        raw = feed.read()
    elif isinstance(feed, (bytes, str)):
        raw = feed
    else:
        with open(feed, "rb") as fh:
            raw = fh.read()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FeedParseError(f"feed is not valid JSON: {exc}", record=f"line {exc.lineno}") from None

    fmt = fmt or _detect_format(data)
    sets: dict[ProductId, set[str]] = {p: set() for p in products}
    for cve, cpes, _rec in _iter_feed_records(data, fmt):
        for product in products:
            if any(cpe_matches(product.cpe, c, exact=exact) for c in cpes):
                sets[product].add(cve)
    return VulnCatalog({p: frozenset(v) for p, v in sets.items()}, source_meta=source_meta)


def jaccard(catalog: VulnCatalog, a: ProductId, b: ProductId) -> float:
    """Jaccard similarity of the two products' vulnerability sets.

    ``sim(p, p)`` is 1 by definition (an exploit for a product trivially
    works against the same product elsewhere) even when the recorded set is
    empty; two distinct products with empty sets score 0.
    """
    va = catalog.vulns(a)
    vb = catalog.vulns(b)
    if a == b:
        return 1.0
    union = len(va | vb)
    if union == 0:
        return 0.0
    return len(va & vb) / union


@dataclass(frozen=True)
class SimilarityTable:
    """Symmetric pairwise-similarity matrix for the products of one service.

    ``shared``/``totals`` carry the underlying vulnerability counts when the
    table was built from a catalog; synthetic tables omit them.
    """

    service: str
    products: tuple[ProductId, ...]
    values: np.ndarray
    shared: np.ndarray | None = None
    totals: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        object.__setattr__(self, "products", tuple(self.products))
        object.__setattr__(self, "values", values)
        if self.shared is not None:
            object.__setattr__(self, "shared", np.array(self.shared, dtype=np.int64))
        if self.totals is not None:
            object.__setattr__(self, "totals", np.array(self.totals, dtype=np.int64))
        _check_table(self, ValidationError)
        self.values.setflags(write=False)

    def index(self, product: ProductId) -> int:
        try:
            return self.products.index(product)
        except ValueError:
            raise MissingEntryError(f"{product} not in table for {self.service!r}") from None

    def sim(self, a: ProductId, b: ProductId) -> float:
        return float(self.values[self.index(a), self.index(b)])


def _check_table(table: SimilarityTable, err) -> None:
    n = len(table.products)
    if n == 0:
        raise err("table has no products")
    if len(set(table.products)) != n:
        raise err("duplicate products in table")
    for p in table.products:
        if p.service != table.service:
            raise err(f"product {p} does not belong to service {table.service!r}")
    v = table.values
    if v.shape != (n, n):
        raise err(f"values: expected {n}x{n} matrix, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise err("values: non-finite entry")
    if np.any(v < 0.0) or np.any(v > 1.0):
        bad = np.argwhere((v < 0.0) | (v > 1.0))[0]
        raise err(f"values[{bad[0]}][{bad[1]}]: similarity outside [0, 1]")
    if not np.array_equal(v, v.T):
        bad = np.argwhere(v != v.T)[0]
        raise err(f"values[{bad[0]}][{bad[1]}]: matrix not symmetric")
    if np.any(np.diag(v) != 1.0):
        bad = int(np.argwhere(np.diag(v) != 1.0)[0][0])
        raise err(f"values[{bad}][{bad}]: diagonal must be exactly 1")
    if (table.shared is None) != (table.totals is None):
        raise err("shared and totals must be present together")
    if table.shared is not None:
        s, t = table.shared, table.totals
        if s.shape != (n, n) or t.shape != (n,):
            raise err("counts: wrong shape")
        if np.any(s < 0) or np.any(t < 0):
            raise err("counts: negative entry")
        if not np.array_equal(s, s.T):
            raise err("counts: shared matrix not symmetric")
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                if s[i, j] > min(t[i], t[j]):
                    raise err(f"counts[{i}][{j}]: shared exceeds a product total")
                union = t[i] + t[j] - s[i, j]
                expect = s[i, j] / union if union else 0.0
                if abs(v[i, j] - expect) > 1e-9:
                    raise err(f"values[{i}][{j}]: inconsistent with counts")


def build_table(
    catalog: VulnCatalog, service: str, products: Sequence[ProductId]
) -> SimilarityTable:
    """Build the full similarity table for one service from a catalog."""
    products = tuple(products)
    service = service.strip().casefold()
    for p in products:
        if p.service != service:
            raise ValidationError(f"product {p} does not belong to service {service!r}")
    sets = [catalog.vulns(p) for p in products]
    n = len(products)
    values = np.eye(n)
    shared = np.zeros((n, n), dtype=np.int64)
    totals = np.array([len(s) for s in sets], dtype=np.int64)
    np.fill_diagonal(shared, totals)
    for i in range(n):
        for j in range(i + 1, n):
            inter = len(sets[i] & sets[j])
            union = totals[i] + totals[j] - inter
            shared[i, j] = shared[j, i] = inter
            values[i, j] = values[j, i] = inter / union if union else 0.0
    return SimilarityTable(service, products, values, shared, totals)


def save_table(table: SimilarityTable, sink) -> None:
    """Write a table as CSV, one row per unordered pair plus diagonal rows.

    Similarities are printed with 17 significant digits so that a load
    reproduces the matrix bit-exactly.
    """
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        n = len(table.products)
        for i in range(n):
            for j in range(i, n):
                if table.shared is not None:
                    counts = [int(table.shared[i, j]), int(table.totals[i]), int(table.totals[j])]
                else:
                    counts = ["", "", ""]
                writer.writerow(
                    [
                        table.service,
                        table.products[i].cpe,
                        table.products[j].cpe,
                        f"{table.values[i, j]:.17g}",
                        *counts,
                    ]
                )
    finally:
        if own:
            fh.close()


def load_table(source) -> SimilarityTable:
    """Read a table written by :func:`save_table`, re-validating invariants."""
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", encoding="utf-8", newline="") if own else source
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise FormatError(f"header: expected {CSV_HEADER}, got {header}")
        service = None
        order: list[str] = []
        cells: dict[tuple[str, str], tuple[float, int | None, int | None, int | None]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise FormatError(f"row {lineno}: expected {len(CSV_HEADER)} fields")
            svc, pa, pb, sim_s, sh_s, ta_s, tb_s = row
            if service is None:
                service = svc
            elif svc != service:
                raise FormatError(f"row {lineno}: service changed mid-table")
            try:
                sim = float(sim_s)
            except ValueError:
                raise FormatError(f"row {lineno}: similarity not a number") from None
            counts = (sh_s, ta_s, tb_s)
            if any(c != "" for c in counts) and not all(c != "" for c in counts):
                raise FormatError(f"row {lineno}: partial counts")
            try:
                sh, ta, tb = (
                    (int(sh_s), int(ta_s), int(tb_s)) if sh_s != "" else (None, None, None)
                )
            except ValueError:
                raise FormatError(f"row {lineno}: counts not integers") from None
            for p in (pa, pb):
                if p not in order:
                    order.append(p)
            cells[(pa, pb)] = (sim, sh, ta, tb)
        if service is None:
            raise FormatError("table is empty")
        products = tuple(ProductId(service, p) for p in order)
        n = len(products)
        values = np.full((n, n), np.nan)
        has_counts = any(c[1] is not None for c in cells.values())
        shared = np.zeros((n, n), dtype=np.int64) if has_counts else None
        totals = np.zeros(n, dtype=np.int64) if has_counts else None
        idx = {p: i for i, p in enumerate(order)}
        for (pa, pb), (sim, sh, ta, tb) in cells.items():
            i, j = idx[pa], idx[pb]
            if not np.isnan(values[i, j]) and values[i, j] != sim:
                raise FormatError(f"values[{i}][{j}]: conflicting duplicate rows")
            values[i, j] = values[j, i] = sim
            if has_counts:
                if sh is None:
                    raise FormatError(f"counts: missing for pair ({pa}, {pb})")
                shared[i, j] = shared[j, i] = sh
                totals[i] = ta
                totals[j] = tb
        if np.any(np.isnan(values)):
            i, j = np.argwhere(np.isnan(values))[0]
            raise FormatError(f"values[{i}][{j}]: missing pair row")
        table = SimilarityTable(service, products, values, shared, totals)
    except ValidationError as exc:
        raise FormatError(str(exc)) from None
    finally:
        if own:
            fh.close()
    return table
