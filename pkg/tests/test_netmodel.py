import numpy as np
import pytest

from divnet.errors import BuildError, ValidationError
from divnet.netmodel import (
    ALL_HOSTS,
    DESIRABLE,
    UNDESIRABLE,
    Assignment,
    Clamp,
    Constraint,
    Network,
    apply_clamps,
    check_constraints,
    mono_assignment,
    random_assignment,
    validate_assignment,
    validate_network,
)
from divnet.similarity import ProductId


def P(service, name):
    return ProductId(service, name)


UBUNTU = P("os", "ubuntu14.04")
WIN7 = P("os", "windows7")
DEBIAN = P("os", "debian8.0")
IE10 = P("wb", "ie10")
CHROME = P("wb", "chrome50")


def two_host_net():
    return Network(
        hosts=("h1", "h2"),
        links=(("h1", "h2"),),
        services=("os", "wb"),
        candidates={
            ("h1", "os"): (UBUNTU, WIN7),
            ("h1", "wb"): (IE10, CHROME),
            ("h2", "os"): (UBUNTU, WIN7),
            ("h2", "wb"): (IE10, CHROME),
        },
    )


def test_validate_well_formed():
    assert validate_network(two_host_net()) == []


def test_validate_self_loop():
    n = Network(("h1",), (("h1", "h1"),), ("os",), {("h1", "os"): (UBUNTU,)})
    kinds = [v.kind for v in validate_network(n)]
    assert "self-loop" in kinds


def test_validate_empty_candidates():
    n = Network(("h1",), (), ("os",), {("h1", "os"): ()})
    kinds = [v.kind for v in validate_network(n)]
    assert "empty-candidates" in kinds


def test_validate_catches_everything_else():
    n = Network(
        ("h1", "h1"),
        (("h1", "hx"), ("h1", "hx")),
        ("os",),
        {("h1", "os"): (IE10,), ("hz", "zz"): (UBUNTU, UBUNTU)},
    )
    kinds = {v.kind for v in validate_network(n)}
    assert {"duplicate-host", "unknown-host", "duplicate-link", "service-mismatch",
            "unknown-service", "duplicate-candidate"} <= kinds


# --- constraints ----------------------------------------------------------------


def assign(os1, wb1, os2=None, wb2=None):
    choices = {("h1", "os"): os1, ("h1", "wb"): wb1}
    if os2 is not None:
        choices[("h2", "os")] = os2
        choices[("h2", "wb")] = wb2
    return Assignment(choices)


def test_global_undesirable_violation():
    c = Constraint(ALL_HOSTS, "os", UBUNTU, "wb", IE10, UNDESIRABLE)
    violated = check_constraints(assign(UBUNTU, IE10), [c])
    assert violated == [(c, "h1")]


def test_trigger_inactive_no_violation():
    c = Constraint(ALL_HOSTS, "os", UBUNTU, "wb", IE10, UNDESIRABLE)
    assert check_constraints(assign(WIN7, IE10), [c]) == []


def test_local_desirable_violation():
    c = Constraint("h1", "os", DEBIAN, "wb", CHROME, DESIRABLE)
    assert check_constraints(assign(DEBIAN, IE10), [c]) == [(c, "h1")]
    assert check_constraints(assign(DEBIAN, CHROME), [c]) == []


def test_global_checked_on_every_host():
    c = Constraint(ALL_HOSTS, "os", UBUNTU, "wb", IE10, UNDESIRABLE)
    violated = check_constraints(assign(UBUNTU, IE10, UBUNTU, IE10), [c])
    assert [(h) for _, h in violated] == ["h1", "h2"]


def test_constraint_unknown_service():
    bad = Constraint(ALL_HOSTS, "db", P("db", "x"), "wb", IE10, UNDESIRABLE)
    with pytest.raises(ValidationError):
        check_constraints(assign(UBUNTU, IE10), [bad])


def test_constraint_field_invariants():
    with pytest.raises(ValidationError):
        Constraint(ALL_HOSTS, "os", UBUNTU, "os", WIN7, UNDESIRABLE)
    with pytest.raises(ValidationError):
        Constraint(ALL_HOSTS, "os", IE10, "wb", CHROME, UNDESIRABLE)


def brute_check(a, constraints):
    """Direct enumeration of (constraint, host) pairs; oracle for check_constraints."""
    hosts = sorted({h for h, _ in a.choices})
    out = []
    for c in constraints:
        for h in hosts:
            if c.scope != ALL_HOSTS and c.scope != h:
                continue
            trig = a.get(h, c.trigger_service)
            cons = a.get(h, c.consequent_service)
            if trig is None or cons is None:
                continue
            if trig != c.trigger_product:
                continue
            bad = cons == c.consequent_product
            if c.polarity == DESIRABLE:
                bad = not bad
            if bad:
                out.append((c, h))
    return out


def test_check_constraints_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(5)
    oss = [P("os", f"os{i}") for i in range(3)]
    wbs = [P("wb", f"wb{i}") for i in range(3)]
    hosts = [f"h{i}" for i in range(4)]
    for _ in range(50):
        a = Assignment(
            {
                (h, s): (oss if s == "os" else wbs)[rng.integers(3)]
                for h in hosts
                for s in ("os", "wb")
                if rng.random() < 0.9
            }
        )
        cs = []
        for _ in range(rng.integers(1, 6)):
            scope = ALL_HOSTS if rng.random() < 0.5 else hosts[rng.integers(len(hosts))]
            pol = UNDESIRABLE if rng.random() < 0.5 else DESIRABLE
            cs.append(
                Constraint(scope, "os", oss[rng.integers(3)], "wb", wbs[rng.integers(3)], pol)
            )
        assert check_constraints(a, cs) == brute_check(a, cs)


# --- assignment generators -------------------------------------------------------


def test_mono_assignment_identical_everywhere():
    n = two_host_net()
    a = mono_assignment(n, {"os": [WIN7, UBUNTU], "wb": [IE10, CHROME]})
    assert a.product("h1", "os") == WIN7
    assert a.product("h2", "os") == WIN7
    assert a.product("h1", "wb") == IE10
    assert validate_assignment(n, a) == []


def test_mono_assignment_fallback_to_own_first():
    n = Network(
        ("h1", "h2"),
        (("h1", "h2"),),
        ("os",),
        {("h1", "os"): (UBUNTU, WIN7), ("h2", "os"): (DEBIAN,)},
    )
    a = mono_assignment(n, {"os": [WIN7]})
    assert a.product("h1", "os") == WIN7
    assert a.product("h2", "os") == DEBIAN  # its only option


def test_mono_assignment_single_host():
    n = Network(("h1",), (), ("os",), {("h1", "os"): (UBUNTU, WIN7)})
    assert mono_assignment(n, {"os": [UBUNTU]}).product("h1", "os") == UBUNTU


def test_mono_assignment_missing_service():
    with pytest.raises(ValidationError):
        mono_assignment(two_host_net(), {"os": [WIN7]})


def test_random_assignment_deterministic():
    n = two_host_net()
    a1 = random_assignment(n, 99)
    a2 = random_assignment(n, 99)
    assert a1.choices == a2.choices
    assert validate_assignment(n, a1) == []


def test_random_assignment_single_candidate():
    n = Network(("h1",), (), ("os",), {("h1", "os"): (UBUNTU,)})
    for seed in (1, 2, 3):
        assert random_assignment(n, seed).product("h1", "os") == UBUNTU


def test_random_assignment_is_roughly_uniform():
    n = Network(("h1",), (), ("os",), {("h1", "os"): (UBUNTU, WIN7)})
    picks = sum(random_assignment(n, seed).product("h1", "os") == UBUNTU for seed in range(10_000))
    assert abs(picks - 5000) <= 200  # binomial 3-sigma is ~150


# --- clamps -----------------------------------------------------------------------


def test_apply_clamp_restricts_candidates():
    n = apply_clamps(two_host_net(), [Clamp("h1", "os", WIN7)])
    assert n.candidates[("h1", "os")] == (WIN7,)
    assert n.candidates[("h2", "os")] == (UBUNTU, WIN7)
    # any generator then yields the clamped product
    assert mono_assignment(n, {"os": [UBUNTU, WIN7], "wb": [IE10]}).product("h1", "os") == WIN7
    for seed in range(5):
        assert random_assignment(n, seed).product("h1", "os") == WIN7


def test_clamp_conflicts_and_membership():
    n = two_host_net()
    with pytest.raises(BuildError):
        apply_clamps(n, [Clamp("h1", "os", WIN7), Clamp("h1", "os", UBUNTU)])
    with pytest.raises(ValidationError):
        apply_clamps(n, [Clamp("h1", "os", DEBIAN)])
    with pytest.raises(ValidationError):
        apply_clamps(n, [Clamp("hx", "os", WIN7)])
