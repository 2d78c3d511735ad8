"""A small zoned industrial network shared by the demo scripts.

Modern IT zones (corporate, DMZ, clients, vendor support) surround legacy
operations/control zones whose hosts cannot be upgraded: those are clamped
to their installed products. Three services are diversified: operating
system, web browser, database server. Similarity tables carry hand-picked
values in the range observed for real product pairs (same-vendor releases
high, cross-vendor low).
"""

import numpy as np

from divnet import Clamp, Constraint, Network, ProductId, SimilarityTable
from divnet.netmodel import ALL_HOSTS, UNDESIRABLE

OS = "os"
WB = "wb"
DB = "db"

WINXP = ProductId(OS, "winxp")
WIN7 = ProductId(OS, "win7")
UBT = ProductId(OS, "ubt14.04")
DEB = ProductId(OS, "deb8.0")

IE8 = ProductId(WB, "ie8")
IE10 = ProductId(WB, "ie10")
CHROME = ProductId(WB, "chrome50")

MSSQL08 = ProductId(DB, "mssql2008")
MSSQL14 = ProductId(DB, "mssql2014")
MYSQL = ProductId(DB, "mysql5.5")


def tables():
    os_table = SimilarityTable(
        OS,
        (WINXP, WIN7, UBT, DEB),
        np.array(
            [
                [1.000, 0.278, 0.000, 0.000],
                [0.278, 1.000, 0.000, 0.000],
                [0.000, 0.000, 1.000, 0.208],
                [0.000, 0.000, 0.208, 1.000],
            ]
        ),
    )
    wb_table = SimilarityTable(
        WB,
        (IE8, IE10, CHROME),
        np.array(
            [
                [1.000, 0.386, 0.000],
                [0.386, 1.000, 0.000],
                [0.000, 0.000, 1.000],
            ]
        ),
    )
    db_table = SimilarityTable(
        DB,
        (MSSQL08, MSSQL14, MYSQL),
        np.array(
            [
                [1.000, 0.310, 0.020],
                [0.310, 1.000, 0.020],
                [0.020, 0.020, 1.000],
            ]
        ),
    )
    return [os_table, wb_table, db_table]


MODERN_OS = (WINXP, WIN7, UBT, DEB)
MODERN_WB = (IE8, IE10, CHROME)
MODERN_DB = (MSSQL08, MSSQL14, MYSQL)

ZONES = {
    "corporate": ["c1", "c2", "c3"],
    "dmz": ["z1", "z2"],
    "operations": ["p1", "p2"],
    "control": ["t1", "t2"],
    "clients": ["e1", "e2", "e3"],
    "vendors": ["v1", "v2"],
}

LEGACY = {"p1", "p2", "t1", "t2"}


def network():
    hosts = [h for zone in ZONES.values() for h in zone]
    links = [
        # intra-zone meshes
        ("c1", "c2"), ("c2", "c3"), ("c1", "c3"),
        ("z1", "z2"),
        ("p1", "p2"),
        ("t1", "t2"),
        ("e1", "e2"), ("e2", "e3"),
        ("v1", "v2"),
        # zone interconnects
        ("c3", "z1"), ("c2", "z2"),
        ("z2", "p1"),
        ("p2", "t1"),
        ("e1", "c1"), ("e3", "c2"),
        ("v1", "z1"),
    ]
    candidates = {}
    for h in hosts:
        if h in LEGACY:
            candidates[(h, OS)] = (WINXP,)
            candidates[(h, WB)] = (IE8,)
            candidates[(h, DB)] = (MSSQL08,)
        else:
            candidates[(h, OS)] = MODERN_OS
            candidates[(h, WB)] = MODERN_WB
            if h.startswith(("c", "z")):
                candidates[(h, DB)] = MODERN_DB
    return Network(tuple(hosts), tuple(links), (OS, WB, DB), candidates)


def policy_constraints():
    """No Internet Explorer on Linux hosts, anywhere."""
    out = []
    for os_product in (UBT, DEB):
        for browser in (IE8, IE10):
            out.append(Constraint(ALL_HOSTS, OS, os_product, WB, browser, UNDESIRABLE))
    return out


def pinned_hosts():
    """Hosts required by company policy to run specific products."""
    return [Clamp("z2", OS, WIN7), Clamp("e1", WB, CHROME)]


def show_assignment(net, assignment, title):
    print(f"\n{title}")
    width = max(len(h) for h in net.hosts)
    for h in net.hosts:
        row = []
        for s in net.host_services(h):
            row.append(f"{s}={assignment.product(h, s).cpe}")
        marker = "*" if h in LEGACY else " "
        print(f"  {h:<{width}}{marker} {'  '.join(row)}")
    print("  (* legacy host, no flexibility)")
