import io
import json

import numpy as np
import pytest

from divnet.errors import FormatError, ValidationError
from divnet.netmodel import ALL_HOSTS, Assignment
from divnet.scenario import (
    load_assignment,
    load_scenario,
    save_assignment,
    save_scenario,
)
from divnet.similarity import ProductId, SimilarityTable, save_table


def P(service, name):
    return ProductId(service, name)


def sample_doc():
    return {
        "hosts": [
            {"id": "h1", "services": {"os": ["ubuntu", "win7"], "wb": ["ie10", "chrome"]}},
            {"id": "h2", "services": {"os": ["ubuntu", "win7"]}},
        ],
        "links": [["h1", "h2"]],
        "constraints": [
            {
                "scope": "ALL",
                "trigger": {"service": "os", "product": "ubuntu"},
                "consequent": {"service": "wb", "product": "ie10"},
                "polarity": "undesirable",
            }
        ],
        "clamps": [{"host": "h2", "service": "os", "product": "win7"}],
        "tables": [
            {
                "service": "os",
                "products": ["ubuntu", "win7"],
                "values": [[1.0, 0.2], [0.2, 1.0]],
            },
            {
                "service": "wb",
                "products": ["ie10", "chrome"],
                "values": [[1.0, 0.4], [0.4, 1.0]],
            },
        ],
    }


def test_load_scenario_round_trip(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(sample_doc()))
    s = load_scenario(path)
    assert s.network.hosts == ("h1", "h2")
    assert s.network.links == (("h1", "h2"),)
    assert s.network.candidates[("h1", "os")] == (P("os", "ubuntu"), P("os", "win7"))
    assert s.constraints[0].scope == ALL_HOSTS
    assert s.clamps[0].product == P("os", "win7")
    assert s.tables[0].sim(P("os", "ubuntu"), P("os", "win7")) == 0.2

    out = tmp_path / "again.json"
    save_scenario(s, out)
    s2 = load_scenario(out)
    assert s2.network == s.network
    assert s2.constraints == s.constraints
    assert s2.clamps == s.clamps
    # saving twice is byte-identical
    out2 = tmp_path / "third.json"
    save_scenario(s2, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_load_scenario_table_csv_path(tmp_path):
    table = SimilarityTable(
        "os", (P("os", "ubuntu"), P("os", "win7")), np.array([[1.0, 0.2], [0.2, 1.0]])
    )
    save_table(table, tmp_path / "os.csv")
    doc = sample_doc()
    doc["tables"] = ["os.csv", doc["tables"][1]]
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    s = load_scenario(path)
    assert s.tables[0].service == "os"
    assert s.tables[0].sim(P("os", "ubuntu"), P("os", "win7")) == 0.2


def test_load_scenario_strict_rejects_unknown_keys(tmp_path):
    doc = sample_doc()
    doc["surprise"] = 1
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_scenario(path, strict=True)
    with pytest.warns(UserWarning):
        load_scenario(path, strict=False)


def test_load_scenario_invalid_network(tmp_path):
    doc = sample_doc()
    doc["links"] = [["h1", "h1"]]
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="self-loop"):
        load_scenario(path)


def test_assignment_round_trip(tmp_path):
    s = load_scenario(io.StringIO(json.dumps(sample_doc())))
    a = Assignment(
        {
            ("h1", "os"): P("os", "ubuntu"),
            ("h1", "wb"): P("wb", "chrome"),
            ("h2", "os"): P("os", "win7"),
        }
    )
    path = tmp_path / "assignment.json"
    save_assignment(a, path)
    loaded = load_assignment(path, s.network)
    assert loaded.choices == a.choices


def test_load_assignment_rejects_non_candidate(tmp_path):
    s = load_scenario(io.StringIO(json.dumps(sample_doc())))
    path = tmp_path / "assignment.json"
    path.write_text(json.dumps({"h1": {"os": "debian", "wb": "ie10"}, "h2": {"os": "win7"}}))
    with pytest.raises(ValidationError):
        load_assignment(path, s.network)
