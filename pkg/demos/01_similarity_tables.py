"""Vulnerability similarity from a CVE feed, step by step.

Ingest a small feed, inspect per-product vulnerability sets, compute
pairwise Jaccard similarities and persist them as a table CSV.
"""

import json
import tempfile
from pathlib import Path

from divnet import ProductId, build_table, ingest_feed, jaccard, load_table, save_table

# A miniature feed in the plain format: CVE id -> affected products (CPE).
# One record hits several browsers at once, the usual pattern for
# protocol-level flaws.
FEED = {
    "CVE-2016-7153": [
        "cpe:/a:microsoft:edge",
        "cpe:/a:microsoft:internet_explorer",
        "cpe:/a:google:chrome",
        "cpe:/a:mozilla:firefox",
    ],
    "CVE-2016-0001": ["cpe:/a:microsoft:internet_explorer:8"],
    "CVE-2016-0002": ["cpe:/a:microsoft:internet_explorer:10", "cpe:/a:microsoft:edge"],
    "CVE-2016-0003": ["cpe:/a:google:chrome:50.0"],
    "CVE-2016-0004": ["cpe:/a:google:chrome", "cpe:/a:mozilla:firefox"],
    "CVE-2016-0005": ["cpe:/a:microsoft:edge"],
    "CVE-2016-0006": ["cpe:/a:mozilla:firefox:45"],
}

WB = "wb"
products = [
    ProductId(WB, "cpe:/a:microsoft:internet_explorer"),
    ProductId(WB, "cpe:/a:microsoft:edge"),
    ProductId(WB, "cpe:/a:google:chrome"),
    ProductId(WB, "cpe:/a:mozilla:firefox"),
]

catalog = ingest_feed(json.dumps(FEED), products, source_meta="demo feed")
print("per-product vulnerability sets (CPE prefix matching folds versions in):")
for p in products:
    print(f"  {p.cpe:44s} {sorted(catalog.vulns(p))}")

ie, edge, chrome, firefox = products
print("\npairwise Jaccard similarities:")
for a, b in [(ie, edge), (ie, chrome), (chrome, firefox)]:
    print(f"  sim({a.cpe.split(':')[-1]}, {b.cpe.split(':')[-1]}) = {jaccard(catalog, a, b):.3f}")

table = build_table(catalog, WB, products)
print("\nfull similarity matrix:")
print(table.values.round(3))

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "wb.csv"
    save_table(table, path)
    print(f"\ntable CSV ({path.name}):")
    print(path.read_text())
    reloaded = load_table(path)
    assert (reloaded.values == table.values).all()
    print("reload reproduces the matrix bit-exactly.")
