import itertools

import pytest

from agreesim import trace
from agreesim.adversary import canonical_partition, merge, scenario
from agreesim.algorithms import FloodEcho, StarLeader, constant_zero, silent_default
from agreesim.engine import Algorithm, broadcast, decisions, isolation, message_complexity, run
from agreesim.harness import (
    HarnessInconsistency,
    ProbeFamily,
    check_parameters,
    critical_round,
    falsify,
    find_decision_round,
    first_sign_change,
    majority_check,
    probe_horizon,
    probe_isolated_family,
    under_budget,
)
from agreesim.model import ProcState, indistinguishable
from agreesim.registry import build_algorithm
from agreesim.validate import validate_execution
from agreesim.verifier import verify_witness

from candidates import DecideOwn, GatherAck


class SplitByParity(Algorithm):
    """All-to-all chatter, then odd processes decide 1 and even ones 0."""

    name = "split-by-parity"

    def start(self, ctx, proposal):
        return ProcState(ctx.pid, 1, proposal, None, ()), broadcast(ctx, b"0")

    def step(self, ctx, state, received):
        return state.advance((), ctx.pid % 2), []


def test_budget_is_strict_and_exact():
    assert under_budget(511, 128) and not under_budget(512, 128)


@pytest.mark.parametrize("n,t", [(129, 12), (129, 4), (16, 16), (20, 30)])
def test_parameter_shape_is_enforced(n, t):
    with pytest.raises(ValueError):
        check_parameters(n, t)


def test_silent_default_fails_weak_validity_at_round_one():
    dr = find_decision_round(silent_default(17, 16), 17, 16)
    assert dr.r_max is None
    assert dr.verdict.property == "Weak Validity"
    assert decisions(dr.execution)[1] == 1


def test_flood_echo_two_decision_round():
    # decides at the end of round 2, so the round-3 states are the first decided ones
    assert find_decision_round(FloodEcho(17, 16, 2), 17, 16).r_max == 3


def test_immediate_zero_decision_round():
    assert find_decision_round(constant_zero(17, 16), 17, 16).r_max == 1


def test_star_leader_family_at_full_scale():
    fam = probe_isolated_family(StarLeader(129, 128), 129, 128)
    # followers decide when the scatter lands at the end of round 2
    assert fam.r_max == 3
    assert set(fam.probes) == {f"E0^{g}({k})" for g in "BC" for k in (1, 2, 3)} | {"E1^C(1)"}
    assert all(c < 512 for c in fam.counts.values())
    assert fam.a_decisions[f"E0^B({fam.r_max})"] == 0
    assert all(validate_execution(e, StarLeader(129, 128)) == [] for e in fam.probes.values())
    assert fam.default == 0


def test_reference_family_exceeds_budget_somewhere():
    alg = build_algorithm("ref-weak", 17, 16)
    fam = probe_isolated_family(alg, 17, 16, jobs=4)
    assert all(v is not None for v in fam.a_decisions.values())
    assert max(fam.counts.values()) * 32 >= 16 * 16
    assert fam.a_decisions[f"E0^B({fam.r_max})"] == 0


def test_family_is_the_same_with_threads():
    alg = GatherAck(17, 16, 1)
    a = probe_isolated_family(alg, 17, 16, jobs=1)
    b = probe_isolated_family(alg, 17, 16, jobs=3)
    assert a.a_decisions == b.a_decisions and a.counts == b.counts


def test_majority_check_ok_when_isolated_group_mirrors():
    alg = DecideOwn(17, 16)
    part = canonical_partition(17, 16)
    e = scenario(alg, 0, 12, part.b, 1, "B")
    out = majority_check(e, (part.a | part.c, part.b, frozenset()), 1)
    assert out.status == "ok"


def test_majority_check_builds_a_disagreement_witness():
    alg = StarLeader(129, 128)
    part = canonical_partition(129, 128)
    e = scenario(alg, 0, 6, part.b, 1, "B")
    out = majority_check(e, (part.a | part.c, part.b, frozenset()), 1)
    assert out.status == "violation" and out.property == "Agreement"
    w = out.witness
    assert validate_execution(w, alg) == []
    p, q = out.processes
    assert p in part.b and p in w.correct and q in w.correct
    dec = decisions(w)
    assert dec[p] != dec[q]
    assert p == min(part.b)


def test_majority_check_not_applicable_over_budget():
    alg = FloodEcho(17, 16, 1)
    part = canonical_partition(17, 16)
    e = scenario(alg, 0, 4, part.b, 1, "B")
    assert majority_check(e, (part.a | part.c, part.b, frozenset()), 1).status == "not-applicable"


def test_majority_check_rejects_broken_preconditions():
    alg = FloodEcho(17, 16, 2)
    part = canonical_partition(17, 16)
    e = scenario(alg, 0, 6, part.b, 1, "B")
    with pytest.raises(ValueError):
        majority_check(e, (part.a | part.c, part.b, frozenset()), 2)
    with pytest.raises(ValueError):
        majority_check(e, (part.a, part.b | part.c, frozenset()), 1)


@pytest.mark.parametrize("t", [8, 16, 24])
def test_pigeonhole_leaves_most_of_y_lightly_cut(t):
    # every way to spread fewer than t^2/32 cross messages over |Y| = t/4 receivers
    y = t // 4
    limit = (t * t - 1) // 32
    for loads in itertools.product(range(limit + 1), repeat=y):
        if sum(loads) > limit:
            continue
        light = sum(2 * x < t for x in loads)
        assert 4 * light > 3 * y


def test_first_sign_change_examples():
    assert first_sign_change({1: 1, 2: 1, 3: 1, 4: 0}, 1) == 3
    assert first_sign_change({1: 0, 2: 1, 3: 1}, 0) == 1
    with pytest.raises(HarnessInconsistency):
        first_sign_change({1: 1, 2: 1}, 1)


def test_critical_round_switches_to_mirrored_scan_on_default_zero():
    part = canonical_partition(17, 16)
    fam = ProbeFamily(17, 16, part, 10, 4, None, default=0)
    fam.a_decisions = {"E0^B(1)": 0, "E0^B(2)": 0, "E1^C(1)": 0, "E1^C(2)": 0, "E1^C(3)": 1}
    assert critical_round(fam) == 2
    fam.default = 1
    with pytest.raises(HarnessInconsistency):
        critical_round(fam)


def test_probe_horizon():
    assert probe_horizon(3) == 8


def _assert_sound(v, alg, prop=None):
    assert v.kind == "violation"
    if prop:
        assert v.property == prop
    rep = verify_witness(trace.to_document(v.witness), alg)
    assert rep.well_formed, rep.problems
    assert rep.faulty <= alg.t
    assert rep.exhibits(v.property)
    assert validate_execution(v.witness, alg) == []


def test_falsify_star_leader():
    alg = StarLeader(129, 128)
    v = falsify(alg, 129, 128)
    _assert_sound(v, alg, "Agreement")
    assert v.probe == "E0^B(1)"
    assert max(v.counts.values()) <= 256


def test_falsify_silent_default_stops_before_probing():
    v = falsify(silent_default(129, 128), 129, 128)
    _assert_sound(v, silent_default(129, 128), "Weak Validity")
    assert set(v.counts) == {"E0"}


@pytest.mark.parametrize("default,label", [(1, "merge[E0^B(3),E0^C(2)]"), (0, "merge[E1^C(3),E1^B(2)]")])
def test_falsify_reaches_the_second_merge_in_both_branches(default, label):
    alg = GatherAck(137, 136, default)
    v = falsify(alg, 137, 136)
    _assert_sound(v, alg, "Agreement")
    assert v.probe == label


def test_falsify_default_merge():
    alg = DecideOwn(137, 136)
    v = falsify(alg, 137, 136)
    _assert_sound(v, alg, "Agreement")
    assert v.probe == "merge[E0^B(1),E1^C(1)]"


def test_falsify_is_the_same_with_threads():
    alg = GatherAck(137, 136, 1)
    a, b = falsify(alg, 137, 136), falsify(alg, 137, 136, jobs=4)
    assert (a.probe, a.processes, a.counts) == (b.probe, b.processes, b.counts)
    assert trace.dumps(a.witness) == trace.dumps(b.witness)


def test_falsify_reports_budget_for_the_reference_algorithm():
    v = falsify(build_algorithm("ref-weak", 17, 16), 17, 16)
    assert v.kind == "budget-exceeded" and v.witness is None
    assert v.max_count * 32 >= 16 * 16


def test_internal_disagreement_beats_the_budget_short_circuit():
    alg = SplitByParity(17, 16)
    v = falsify(alg, 17, 16)
    assert message_complexity(run(alg, [0] * 17, None, 2)) * 32 >= 16 * 16
    _assert_sound(v, alg)
    assert v.property in ("Weak Validity", "Agreement")


def test_merges_inside_falsify_preserve_source_views():
    alg = GatherAck(137, 136, 1)
    part = canonical_partition(137, 136)
    h = probe_horizon(5)
    src = {(g, k): scenario(alg, 0, h, part.b if g == "B" else part.c, k, g) for g in "BC" for k in (2, 3)}
    for left in (src["B", 2], src["B", 3]):
        m = merge(left, src["C", 2], part, alg)
        assert all(indistinguishable(m, left, p) for p in part.b)
        assert all(indistinguishable(m, src["C", 2], p) for p in part.c)
