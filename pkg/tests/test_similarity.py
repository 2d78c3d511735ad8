import io
import json

import numpy as np
import pytest

from divnet.errors import FeedParseError, FormatError, MissingEntryError, ValidationError
from divnet.similarity import (
    ProductId,
    VulnCatalog,
    build_table,
    cpe_matches,
    ingest_feed,
    jaccard,
    load_table,
    save_table,
)

import tabledata


def P(service, cpe):
    return ProductId(service, cpe)


# --- ingestion ---------------------------------------------------------------


def test_ingest_minimal_plain_feed():
    feed = json.dumps({"CVE-0001-0001": ["cpe:/a:acme:alpha"]})
    a = P("svc", "cpe:/a:acme:alpha")
    b = P("svc", "cpe:/a:acme:beta")
    catalog = ingest_feed(feed, [a, b])
    assert catalog.vulns(a) == {"CVE-0001-0001"}
    assert catalog.vulns(b) == frozenset()


def test_ingest_browser_record_both_products():
    # One record affecting several browsers; two filtered products both gain it.
    feed = json.dumps(
        {
            "CVE-2016-7153": [
                "cpe:/a:microsoft:edge:-",
                "cpe:/a:microsoft:internet_explorer:-",
                "cpe:/a:google:chrome:-",
                "cpe:/a:apple:safari",
                "cpe:/a:mozilla:firefox",
                "cpe:/a:opera:opera_browser:-",
            ]
        }
    )
    edge = P("wb", "cpe:/a:microsoft:edge")
    chrome = P("wb", "cpe:/a:google:chrome")
    catalog = ingest_feed(feed, [edge, chrome])
    assert catalog.vulns(edge) == {"CVE-2016-7153"}
    assert catalog.vulns(chrome) == {"CVE-2016-7153"}


# Hand-built expectation for a 10-CVE feed over 3 products, written before
# the parser: alpha gets 1/2/3/4, beta gets 3/4/5/6, gamma only 7; 8/9/10
# touch products outside the filter.
SYNTH_FEED = {
    "CVE-2001-0001": ["cpe:/o:v:alpha:1"],
    "CVE-2001-0002": ["cpe:/o:v:alpha:2"],
    "CVE-2001-0003": ["cpe:/o:v:alpha", "cpe:/o:v:beta"],
    "CVE-2001-0004": ["cpe:/o:v:alpha:1", "cpe:/o:v:beta:8"],
    "CVE-2001-0005": ["cpe:/o:v:beta"],
    "CVE-2001-0006": ["cpe:/o:v:beta:9"],
    "CVE-2001-0007": ["cpe:/o:v:gamma"],
    "CVE-2001-0008": ["cpe:/o:v:delta"],
    "CVE-2001-0009": ["cpe:/o:v:delta:1"],
    "CVE-2001-0010": ["cpe:/o:other:epsilon"],
}


def test_ingest_synthetic_fixture_matches_hand_built_sets():
    alpha, beta, gamma = (P("os", f"cpe:/o:v:{n}") for n in ("alpha", "beta", "gamma"))
    catalog = ingest_feed(json.dumps(SYNTH_FEED), [alpha, beta, gamma])
    assert catalog.vulns(alpha) == {
        "CVE-2001-0001", "CVE-2001-0002", "CVE-2001-0003", "CVE-2001-0004",
    }
    assert catalog.vulns(beta) == {
        "CVE-2001-0003", "CVE-2001-0004", "CVE-2001-0005", "CVE-2001-0006",
    }
    assert catalog.vulns(gamma) == {"CVE-2001-0007"}


def test_ingest_nvd_format():
    feed = {
        "CVE_Items": [
            {
                "cve": {"CVE_data_meta": {"ID": "CVE-2016-0001"}},
                "configurations": {
                    "nodes": [
                        {
                            "cpe_match": [{"cpe23Uri": "cpe:2.3:o:v:alpha:1:*:*:*:*:*:*:*"}],
                            "children": [
                                {"cpe_match": [{"cpeUri": "cpe:/o:v:beta:2"}]},
                            ],
                        }
                    ]
                },
            }
        ]
    }
    alpha, beta = P("os", "cpe:/o:v:alpha"), P("os", "cpe:/o:v:beta")
    catalog = ingest_feed(json.dumps(feed), [alpha, beta])
    assert catalog.vulns(alpha) == {"CVE-2016-0001"}
    assert catalog.vulns(beta) == {"CVE-2016-0001"}


def test_ingest_file_object_and_bytes():
    feed = json.dumps({"CVE-0001-0001": ["cpe:/a:acme:alpha"]})
    a = P("svc", "cpe:/a:acme:alpha")
    assert ingest_feed(io.BytesIO(feed.encode()), [a]).vulns(a) == {"CVE-0001-0001"}
    assert ingest_feed(feed.encode(), [a]).vulns(a) == {"CVE-0001-0001"}


def test_ingest_rejects_malformed_feed():
    a = P("svc", "cpe:/a:acme:alpha")
    with pytest.raises(FeedParseError):
        ingest_feed(b"{not json", [a])
    with pytest.raises(FeedParseError):
        ingest_feed(json.dumps({"CVE-0001-0001": "not-a-list"}), [a], fmt="plain")
    with pytest.raises(FormatError):
        ingest_feed(json.dumps({"something": []}), [a])
    with pytest.raises(ValidationError):
        ingest_feed(json.dumps({"CVE-0001-0001": []}), [])


def test_cpe_prefix_and_exact_matching():
    assert cpe_matches("cpe:/o:microsoft:windows_7", "cpe:/o:microsoft:windows_7:sp1")
    assert cpe_matches("cpe:/o:microsoft:windows_7", "cpe:2.3:o:microsoft:windows_7:*:*:*:*:*:*:*:*")
    assert cpe_matches("cpe:/o:Microsoft:Windows_7", "cpe:/o:microsoft:windows_7")
    assert not cpe_matches("cpe:/o:microsoft:windows_7", "cpe:/o:microsoft:windows_78")
    assert not cpe_matches("cpe:/o:microsoft:windows_7:sp1", "cpe:/o:microsoft:windows_7", exact=True)
    assert cpe_matches("cpe:/o:microsoft:windows_7", "cpe:2.3:o:microsoft:windows_7:-", exact=True)


# --- jaccard ------------------------------------------------------------------


def make_catalog(**sets):
    entries = {P("os", name): frozenset(sets[name]) for name in sets}
    return VulnCatalog(entries), {name: P("os", name) for name in sets}


def test_jaccard_hand_cases():
    catalog, p = make_catalog(a={"CVE-2000-0001", "CVE-2000-0002"}, b={"CVE-2000-0002", "CVE-2000-0003"})
    assert jaccard(catalog, p["a"], p["b"]) == pytest.approx(1 / 3)
    assert jaccard(catalog, p["a"], p["a"]) == 1.0


def test_jaccard_disjoint_and_empty_conventions():
    catalog, p = make_catalog(a={"CVE-2000-0001"}, b={"CVE-2000-0002"}, c=set(), d=set())
    assert jaccard(catalog, p["a"], p["b"]) == 0.0
    assert jaccard(catalog, p["c"], p["d"]) == 0.0
    assert jaccard(catalog, p["c"], p["c"]) == 1.0


def test_jaccard_unknown_product():
    catalog, p = make_catalog(a={"CVE-2000-0001"})
    with pytest.raises(MissingEntryError):
        jaccard(catalog, p["a"], P("os", "nope"))


def test_jaccard_published_os_counts():
    catalog = tabledata.os_catalog()
    prods = {name: P(tabledata.OS, name) for name in tabledata.OS_PRODUCTS}
    # 328 shared of 479/1028 and 195 shared of 612/519.
    assert jaccard(catalog, prods["winxp2"], prods["win7"]) == pytest.approx(0.278, abs=1e-3)
    assert jaccard(catalog, prods["ubt1404"], prods["deb80"]) == pytest.approx(0.208, abs=1e-3)
    assert jaccard(catalog, prods["winxp2"], prods["win10"]) == 0.0


def brute_jaccard(catalog, a, b):
    va, vb = set(catalog.vulns(a)), set(catalog.vulns(b))
    if a == b:
        return 1.0
    both = sum(1 for v in va if v in vb)
    total = len(va) + len(vb) - both
    return both / total if total else 0.0


def test_jaccard_agrees_with_brute_force_oracle():
    rng = np.random.default_rng(7)
    universe = [f"CVE-2010-{i:04d}" for i in range(60)]
    for _ in range(25):
        names = [f"p{k}" for k in range(rng.integers(2, 6))]
        sets = {
            name: set(rng.choice(universe, size=rng.integers(0, 30), replace=False))
            for name in names
        }
        catalog, p = make_catalog(**sets)
        for a in names:
            for b in names:
                assert jaccard(catalog, p[a], p[b]) == pytest.approx(
                    brute_jaccard(catalog, p[a], p[b])
                )


def test_jaccard_monotonicity():
    rng = np.random.default_rng(11)
    for k in range(40):
        na, nb, nshared = rng.integers(0, 15, size=3)
        base = {f"CVE-2011-{i:04d}" for i in range(nshared)}
        sa = base | {f"CVE-2012-{i:04d}" for i in range(na)}
        sb = base | {f"CVE-2013-{i:04d}" for i in range(nb)}
        catalog, p = make_catalog(a=sa, b=sb)
        before = jaccard(catalog, p["a"], p["b"])
        # adding a vulnerability shared by both never decreases similarity
        catalog2, p2 = make_catalog(a=sa | {"CVE-2014-0001"}, b=sb | {"CVE-2014-0001"})
        assert jaccard(catalog2, p2["a"], p2["b"]) >= before - 1e-12
        # adding one unique to a never increases it
        catalog3, p3 = make_catalog(a=sa | {"CVE-2015-0001"}, b=sb)
        assert jaccard(catalog3, p3["a"], p3["b"]) <= before + 1e-12


# --- tables -------------------------------------------------------------------


def test_build_table_two_products():
    catalog, p = make_catalog(a={"CVE-2000-0001", "CVE-2000-0002"}, b={"CVE-2000-0002", "CVE-2000-0003"})
    table = build_table(catalog, "os", [p["a"], p["b"]])
    assert np.allclose(table.values, [[1.0, 1 / 3], [1 / 3, 1.0]])
    assert table.shared[0, 1] == 1
    assert list(table.totals) == [2, 2]


def test_build_table_single_product():
    catalog, p = make_catalog(a={"CVE-2000-0001"})
    table = build_table(catalog, "os", [p["a"]])
    assert table.values.shape == (1, 1)
    assert table.values[0, 0] == 1.0


def test_build_table_service_mismatch():
    catalog, p = make_catalog(a={"CVE-2000-0001"})
    with pytest.raises(ValidationError):
        build_table(catalog, "other", [p["a"]])


def check_against_printed(table, printed, excluded=()):
    index = {p.cpe: i for i, p in enumerate(table.products)}
    names = list(index)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if (a, b) in excluded or (b, a) in excluded:
                continue
            want = printed.get((a, b), printed.get((b, a), 0.0))
            got = table.values[index[a], index[b]]
            assert got == pytest.approx(want, abs=1e-3), (a, b, got, want)


def test_os_table_matches_published_matrix():
    catalog = tabledata.os_catalog()
    products = [P(tabledata.OS, n) for n in tabledata.OS_PRODUCTS]
    table = build_table(catalog, tabledata.OS, products)
    for i, name in enumerate(tabledata.OS_PRODUCTS):
        assert table.totals[i] == tabledata.OS_TOTALS[name]
    check_against_printed(table, tabledata.OS_PRINTED)


def test_wb_table_matches_published_matrix():
    catalog = tabledata.wb_catalog()
    products = [P(tabledata.WB, n) for n in tabledata.WB_PRODUCTS]
    table = build_table(catalog, tabledata.WB, products)
    check_against_printed(table, tabledata.WB_PRINTED, excluded=tabledata.WB_EXCLUDED)


def test_table_invariants_on_random_catalogs():
    rng = np.random.default_rng(23)
    universe = [f"CVE-2016-{i:04d}" for i in range(50)]
    for _ in range(20):
        names = [f"p{k}" for k in range(rng.integers(1, 7))]
        sets = {
            n: set(rng.choice(universe, size=rng.integers(0, 25), replace=False)) for n in names
        }
        catalog, p = make_catalog(**sets)
        table = build_table(catalog, "os", [p[n] for n in names])
        v = table.values
        assert np.array_equal(v, v.T)
        assert np.all((v >= 0.0) & (v <= 1.0))
        assert np.all(np.diag(v) == 1.0)
        assert np.all(table.shared <= np.minimum.outer(table.totals, table.totals) + np.diag(table.totals))


# --- persistence ---------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    catalog = tabledata.os_catalog()
    products = [P(tabledata.OS, n) for n in tabledata.OS_PRODUCTS]
    table = build_table(catalog, tabledata.OS, products)
    path = tmp_path / "os.csv"
    save_table(table, path)
    loaded = load_table(path)
    assert loaded.service == table.service
    assert loaded.products == table.products
    assert np.array_equal(loaded.values, table.values)
    assert np.array_equal(loaded.shared, table.shared)
    assert np.array_equal(loaded.totals, table.totals)


def test_save_load_round_trip_without_counts(tmp_path):
    from divnet.similarity import SimilarityTable

    products = (P("os", "a"), P("os", "b"))
    table = SimilarityTable("os", products, np.array([[1.0, 0.123456789012345], [0.123456789012345, 1.0]]))
    path = tmp_path / "t.csv"
    save_table(table, path)
    loaded = load_table(path)
    assert np.array_equal(loaded.values, table.values)
    assert loaded.shared is None


def test_load_rejects_asymmetry():
    rows = "\n".join(
        [
            ",".join(["service", "product_a", "product_b", "similarity", "shared", "total_a", "total_b"]),
            "os,a,a,1,,,",
            "os,b,b,1,,,",
            "os,a,b,0.5,,,",
            "os,b,a,0.25,,,",
        ]
    )
    with pytest.raises(FormatError):
        load_table(io.StringIO(rows))


def test_load_rejects_out_of_range():
    rows = "\n".join(
        [
            ",".join(["service", "product_a", "product_b", "similarity", "shared", "total_a", "total_b"]),
            "os,a,a,1,,,",
            "os,b,b,1,,,",
            "os,a,b,1.2,,,",
        ]
    )
    with pytest.raises(FormatError):
        load_table(io.StringIO(rows))
