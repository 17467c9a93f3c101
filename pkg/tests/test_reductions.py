import pytest
from hypothesis import given, settings, strategies as st

from agreesim.engine import AdversarySchedule, decisions, run
from agreesim.reductions import (
    MENU,
    AnchorSet,
    Equivocator,
    Injector,
    ReductionRefused,
    Silent,
    adversary_corpus,
    agreement_conformance,
    derive_anchors,
    exhaustive_corpus,
    fully_correct_decision,
    interactive_consistency,
    message_multiset,
    val_agreement_from_ic,
    weak_conformance,
    weak_from_agreement,
)
from agreesim.registry import agreement_for, reference_weak
from agreesim.validity import InputConfiguration, builtin, decisions_within_containment

IC = InputConfiguration


def _ic_run(n, t, props, byz=None):
    sched = AdversarySchedule(byzantine=byz) if byz else None
    e = run(interactive_consistency(n, t), list(props), sched, t + 2)
    return e, decisions(e)


def test_fault_free_ic_decides_the_proposal_vector():
    for t in (0, 1, 3):
        e, d = _ic_run(5, t, [1, 0, 1, 1, 0])
        assert set(d.values()) == {(1, 0, 1, 1, 0)}


def test_decision_lands_after_round_t_plus_one():
    e = run(interactive_consistency(4, 2), [0, 1, 0, 1], None, 3)
    assert set(decisions(e).values()) == {None}


def test_equivocating_sender_gets_one_entry_everywhere():
    e, d = _ic_run(4, 1, [0, 1, 1, 0], {1: Equivocator(0, 1)})
    vecs = {d[p] for p in e.correct}
    assert len(vecs) == 1
    assert next(iter(vecs))[1:] == (1, 1, 0)


def test_silent_coalition_defaults_to_smallest_input():
    e, d = _ic_run(4, 3, [1, 1, 1, 1], {2: Silent(), 3: Silent(), 4: Silent()})
    assert d[1] == (1, 0, 0, 0)


def test_forged_signatures_are_ignored():
    # the injector's last-round chain for origin p1 carries made-up tokens
    e, d = _ic_run(4, 1, [0, 0, 0, 0], {4: Injector(1)})
    assert {d[p][0] for p in e.correct} == {0}


def test_menu_exposes_the_four_behaviors():
    assert sorted(MENU) == ["equivocator", "injector", "silent", "withholder"]
    assert len(list(exhaustive_corpus(4, 1))) == 16 + 4 * 4 * 16


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.lists(st.integers(0, 1), min_size=5, max_size=5),
       st.lists(st.sampled_from(sorted(MENU)), min_size=3, max_size=3), st.booleans())
def test_ic_agreement_and_validity_under_sampled_menu(t, props, behaviors, rushing):
    byz = {p: MENU[b]() for p, b in zip(range(6 - t, 6), behaviors)}
    e = run(interactive_consistency(5, t), props, AdversarySchedule(byzantine=byz, rushing=rushing), t + 2)
    d = decisions(e)
    vecs = {d[p] for p in e.correct}
    assert len(vecs) == 1
    vec = vecs.pop()
    assert all(vec[p - 1] == props[p - 1] for p in e.correct)


def test_anchors_for_strong_consensus():
    a = derive_anchors(agreement_for("strong", 5, 2), builtin("strong", 5, 2))
    assert (a.c0, a.v0) == (IC.full([0] * 5), 0)
    assert a.c1_star == a.c1 == IC.full([1] * 5) and a.v1 == 1


def test_anchors_for_interactive_consistency_fill_missing_entries():
    a = derive_anchors(agreement_for("ic", 3, 1), builtin("ic", 3, 1))
    assert a.v0 == (0, 0, 0)
    assert a.c1_star == IC.full([0, 0, 1]) and a.v1 == (0, 0, 1)


def test_trivial_property_is_refused():
    with pytest.raises(ReductionRefused, match="trivial"):
        derive_anchors(agreement_for("constant", 4, 1), builtin("constant", 4, 1))


def test_agreement_that_ignores_its_inputs_is_refused():
    prop = builtin("weak", 4, 1)
    stuck = val_agreement_from_ic(builtin("constant", 4, 1))
    with pytest.raises(ReductionRefused, match="both anchors"):
        derive_anchors(stuck, prop)


def test_cc_failure_refuses_the_agreement_reduction():
    with pytest.raises(ReductionRefused):
        val_agreement_from_ic(builtin("strong", 4, 2))


def test_weak_wrapper_decides_unanimous_bit_and_mirrors_messages():
    agreement = agreement_for("strong", 5, 2)
    a = derive_anchors(agreement, builtin("strong", 5, 2))
    weak = weak_from_agreement(agreement, a)
    for b in (0, 1):
        e = run(weak, [b] * 5, None, 4)
        assert set(decisions(e).values()) == {b}
        u = run(agreement, [b] * 5, None, 4)
        assert message_multiset(e) == message_multiset(u)


def test_weak_wrapper_rejects_non_bits():
    weak = reference_weak(4, 1)
    with pytest.raises(ValueError):
        run(weak, [0, 2, 0, 0], None, 3)


@pytest.mark.parametrize("name,n,t", [("weak", 4, 1), ("strong", 5, 2), ("ic", 4, 1), ("strong", 4, 1)])
def test_weak_conformance_over_corpus(name, n, t):
    report = weak_conformance(agreement_for(name, n, t), builtin(name, n, t))
    assert report["failures"] == 0, [r for r in report["runs"] if r["problems"]]


@pytest.mark.parametrize("name,n,t", [("weak", 4, 1), ("strong", 5, 2), ("ic", 4, 1), ("constant", 3, 1), ("weak", 2, 0)])
def test_agreement_conformance_over_corpus(name, n, t):
    report = agreement_conformance(builtin(name, n, t))
    assert report["failures"] == 0, [r for r in report["runs"] if r["problems"]]
    assert len(report["runs"]) == len(adversary_corpus(n, t, (0, 1)))


def test_decisions_stay_inside_the_containment_intersection():
    prop = builtin("strong", 5, 2)
    alg = val_agreement_from_ic(prop)
    for _, props, sched in adversary_corpus(5, 2, (0, 1)):
        e = run(alg, list(props), sched, 4)
        assert decisions_within_containment(prop, e) == []


def test_containment_check_flags_an_inadmissible_decision():
    prop = builtin("strong", 5, 2)
    wrong = val_agreement_from_ic(builtin("constant", 5, 2))
    e = run(wrong, [1] * 5, None, 4)
    assert decisions_within_containment(prop, e) == [(p, 0) for p in range(1, 6)]


def test_externally_valid_agreement_still_yields_weak_consensus():
    # a validity predicate accepting every value is trivial as a property, so anchors
    # come from two fully correct executions that decide differently
    n, t = 4, 1
    agreement = agreement_for("weak", n, t)
    with pytest.raises(ReductionRefused):
        derive_anchors(agreement, builtin("constant", n, t))
    c0, c1 = IC.full([0] * n), IC.full([1] * n)
    v0, v1 = fully_correct_decision(agreement, c0), fully_correct_decision(agreement, c1)
    assert v0 != v1
    weak = weak_from_agreement(agreement, AnchorSet(c0, v0, c1, c1, v1))
    cases = [(f"all{b}", (b,) * n, None) for b in (0, 1)] + adversary_corpus(n, t, (0, 1), configs=4)
    report = weak_conformance(agreement, builtin("weak", n, t), cases)
    assert report["failures"] == 0
    for b in (0, 1):
        assert set(decisions(run(weak, [b] * n, None, t + 2)).values()) == {b}


def test_ic_survives_the_rushing_corpus():
    for t in (1, 2, 3):
        alg = interactive_consistency(4, t)
        for label, props, sched in exhaustive_corpus(4, t, rushing=True):
            if sched is None:
                continue
            e = run(alg, list(props), sched, t + 2)
            d = decisions(e)
            vecs = {d[p] for p in e.correct}
            assert len(vecs) == 1, (t, label, props)
            assert all(next(iter(vecs))[p - 1] == props[p - 1] for p in e.correct)
