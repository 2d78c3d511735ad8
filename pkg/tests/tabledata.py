"""Reference catalogs realizing the published vulnerability-overlap counts.

The 2016-era NVD snapshot behind the published OS / web-browser similarity
tables is gone, so these fixtures rebuild synthetic vulnerability sets whose
totals and pairwise intersections equal the published counts; the Jaccard
arithmetic then has to reproduce the published similarities. Sets are built
from disjoint "blocks" of synthetic CVE ids, each block shared by a fixed
group of products. The Windows 7 / 8.1 / 10 counts are not realizable with
pairwise-only overlaps (8.1's pairwise intersections sum past its total), so
one triple block carries the vulnerabilities common to all three.
"""

from divnet.similarity import ProductId, VulnCatalog

OS = "os"
WB = "wb"

OS_PRODUCTS = ["winxp2", "win7", "win81", "win10", "ubt1404", "deb80", "mac105", "suse132", "fedora"]

OS_TOTALS = {
    "winxp2": 479,
    "win7": 1028,
    "win81": 572,
    "win10": 453,
    "ubt1404": 612,
    "deb80": 519,
    "mac105": 424,
    "suse132": 492,
    "fedora": 367,
}

OS_BLOCKS = [
    (("winxp2", "win7"), 328),
    (("winxp2", "win81"), 10),
    (("win7", "win81"), 141),
    (("win81", "win10"), 264),
    (("win7", "win10"), 7),
    (("win7", "win81", "win10"), 157),
    (("mac105", "win7"), 109),
    (("ubt1404", "deb80"), 195),
    (("ubt1404", "suse132"), 161),
    (("ubt1404", "fedora"), 75),
    (("deb80", "suse132"), 102),
    (("deb80", "fedora"), 41),
    (("suse132", "fedora"), 89),
    (("mac105", "fedora"), 1),
]

# Published similarities (upper triangle); pairs not listed are 0.
OS_PRINTED = {
    ("winxp2", "win7"): 0.278,
    ("winxp2", "win81"): 0.009,
    ("win7", "win81"): 0.228,
    ("win7", "win10"): 0.124,
    ("win81", "win10"): 0.697,
    ("ubt1404", "deb80"): 0.208,
    ("ubt1404", "suse132"): 0.170,
    ("ubt1404", "fedora"): 0.083,
    ("deb80", "suse132"): 0.112,
    ("deb80", "fedora"): 0.049,
    ("suse132", "fedora"): 0.116,
    ("mac105", "win7"): 0.081,
    ("mac105", "fedora"): 0.001,
}

WB_PRODUCTS = ["ie8", "ie10", "edge", "chrome", "firefox", "safari", "seamonkey", "opera"]

WB_TOTALS = {
    "ie8": 349,
    "ie10": 513,
    "edge": 194,
    "chrome": 1661,
    "firefox": 1502,
    "safari": 766,
    "seamonkey": 492,
    "opera": 225,
}

WB_BLOCKS = [
    (("ie8", "ie10"), 240),
    (("ie8", "edge"), 7),
    (("ie10", "edge"), 73),
    (("edge", "chrome"), 2),
    (("edge", "firefox"), 2),
    (("edge", "safari"), 2),
    (("edge", "opera"), 1),
    (("chrome", "firefox"), 15),
    (("chrome", "safari"), 21),
    (("chrome", "seamonkey"), 3),
    (("chrome", "opera"), 6),
    (("firefox", "safari"), 6),
    (("firefox", "opera"), 7),
    (("safari", "seamonkey"), 1),
    (("safari", "opera"), 4),
]

# Three published browser cells fail internal consistency and are excluded
# everywhere: firefox/seamonkey claims 683 shared against a seamonkey total
# of 492, the seamonkey/opera cell repeats "1.00 (492)", and the printed
# ie10/edge similarity 0.121 disagrees with its own counts (73/634 = 0.115).
WB_EXCLUDED = {("firefox", "seamonkey"), ("seamonkey", "opera"), ("ie10", "edge")}

WB_PRINTED = {
    ("ie8", "ie10"): 0.386,
    ("ie8", "edge"): 0.014,
    ("edge", "chrome"): 0.001,
    ("edge", "firefox"): 0.001,
    ("edge", "safari"): 0.002,
    ("edge", "opera"): 0.003,
    ("chrome", "firefox"): 0.005,
    ("chrome", "safari"): 0.009,
    ("chrome", "seamonkey"): 0.001,
    ("chrome", "opera"): 0.003,
    ("firefox", "safari"): 0.003,
    ("firefox", "opera"): 0.004,
    ("safari", "seamonkey"): 0.001,
    ("safari", "opera"): 0.004,
}


def build_catalog(service, names, totals, blocks):
    """Assemble per-product CVE sets from shared blocks plus unique remainders."""
    products = {name: ProductId(service, name) for name in names}
    sets = {name: set() for name in names}
    counter = 0

    def fresh(n):
        nonlocal counter
        ids = [f"CVE-2016-{counter + k:07d}" for k in range(n)]
        counter += n
        return ids

    for members, count in blocks:
        ids = fresh(count)
        for name in members:
            sets[name].update(ids)
    for name in names:
        deficit = totals[name] - len(sets[name])
        if deficit < 0:
            raise AssertionError(f"blocks overflow total for {name}")
        sets[name].update(fresh(deficit))
    return VulnCatalog(
        {products[name]: frozenset(sets[name]) for name in names},
        source_meta=f"synthetic fixture ({service})",
    )


def os_catalog():
    return build_catalog(OS, OS_PRODUCTS, OS_TOTALS, OS_BLOCKS)


def wb_catalog():
    return build_catalog(WB, WB_PRODUCTS, WB_TOTALS, WB_BLOCKS)
