from dataclasses import replace

from agreesim.algorithms import FloodEcho, StarLeader
from agreesim.engine import AdversarySchedule, Omission, run
from agreesim.model import EMPTY, Behavior, Execution, Fragment, Message, ProcState
from agreesim.validate import FRAGMENT_RULES, validate_behavior, validate_execution, validate_fragment


def _state(p=1, r=1, proposal=0, decision=None):
    return ProcState(p, r, proposal, decision, ())


def _with_behavior(e: Execution, b: Behavior) -> Execution:
    bs = list(e.behaviors)
    bs[b.process - 1] = b
    return replace(e, behaviors=tuple(bs))


def _with_fragment(b: Behavior, j: int, f: Fragment) -> Behavior:
    frs = list(b.fragments)
    frs[j - 1] = f
    return Behavior(b.process, tuple(frs))


def test_empty_fragment_is_valid():
    assert validate_fragment(Fragment(_state(), EMPTY, EMPTY, EMPTY, EMPTY), 1, 1) == []


def test_message_both_sent_and_send_omitted():
    m = frozenset({Message(1, 2, 1, b"0")})
    found = validate_fragment(Fragment(_state(), m, m, EMPTY, EMPTY), 1, 1)
    assert [v.rule for v in found] == ["M^S ∩ M^SO = ∅"]
    assert found[0].index == 4


def test_two_received_messages_from_one_sender():
    rec = frozenset({Message(2, 1, 1, b"0"), Message(2, 1, 1, b"1")})
    found = validate_fragment(Fragment(_state(), EMPTY, EMPTY, rec, EMPTY), 1, 1)
    assert [v.index for v in found] == [10]


def test_each_fragment_rule_is_reachable():
    bad = {
        1: Fragment(_state(p=2), EMPTY, EMPTY, EMPTY, EMPTY),
        2: Fragment(_state(r=2), EMPTY, EMPTY, EMPTY, EMPTY),
        3: Fragment(_state(), frozenset({Message(1, 2, 2)}), EMPTY, EMPTY, EMPTY),
        5: Fragment(_state(), EMPTY, EMPTY, frozenset({Message(2, 1, 1)}), frozenset({Message(2, 1, 1)})),
        6: Fragment(_state(), frozenset({Message(3, 2, 1)}), EMPTY, EMPTY, EMPTY),
        7: Fragment(_state(), EMPTY, EMPTY, frozenset({Message(2, 3, 1)}), EMPTY),
        8: Fragment(_state(), frozenset({Message(1, 1, 1)}), EMPTY, EMPTY, EMPTY),
        9: Fragment(_state(), frozenset({Message(1, 2, 1, b"a")}), frozenset({Message(1, 2, 1, b"b")}), EMPTY, EMPTY),
    }
    for rule, f in bad.items():
        assert rule in {v.index for v in validate_fragment(f, 1, 1)}, FRAGMENT_RULES[rule]


def test_engine_behaviors_are_valid():
    alg = FloodEcho(5, 1, 2)
    e = run(alg, [0, 1, 0, 1, 0], AdversarySchedule(frozenset({2}), (), (Omission(2, 3, 1, "send"),)), 4)
    for p in e.processes:
        assert validate_behavior(e.behavior(p), alg, p) == []


def test_proposal_change_violates_constant_proposal():
    alg = StarLeader(4, 1)
    e = run(alg, [0] * 4, None, 4)
    b = e.behavior(2)
    f = b.fragment(3)
    b2 = _with_fragment(b, 3, replace(f, state=replace(f.state, proposal=1)))
    assert 5 in {v.index for v in validate_behavior(b2, alg, 2)}


def test_decision_reverting_to_undecided_violates_monotonicity():
    alg = StarLeader(4, 1)
    e = run(alg, [0] * 4, None, 4)
    b = e.behavior(2)
    assert b.state(3).decision == 0
    f = b.fragment(4)
    b2 = _with_fragment(b, 4, replace(f, state=replace(f.state, decision=None)))
    assert 6 in {v.index for v in validate_behavior(b2, alg, 2)}


def test_tampered_payload_breaks_transition_replay():
    alg = StarLeader(4, 1)
    e = run(alg, [0] * 4, None, 3)
    b = e.behavior(1)
    f = b.fragment(2)
    forged = frozenset(replace(m, payload=b"1") for m in f.sent)
    b2 = _with_fragment(b, 2, replace(f, sent=forged))
    assert 7 in {v.index for v in validate_behavior(b2, alg, 1)}


def test_fault_free_engine_output_is_valid_with_empty_omissions():
    alg = FloodEcho(6, 2, 2)
    e = run(alg, [0] * 6, None, 4)
    assert validate_execution(e, alg) == []
    assert all(not b.omits() for b in e.behaviors)


def test_phantom_received_message_breaks_receive_validity():
    alg = FloodEcho(4, 1, 1)
    e = run(alg, [0] * 4, None, 2)
    b = e.behavior(2)
    f = b.fragment(2)
    phantom = Message(3, 2, 2, b"[]")
    e2 = _with_behavior(e, _with_fragment(b, 2, replace(f, received=f.received | {phantom})))
    assert "receive-validity" in {v.rule for v in validate_execution(e2, alg)}


def test_too_many_faulty_processes():
    alg = FloodEcho(4, 1, 1)
    e = replace(run(alg, [0] * 4, None, 2), faulty=frozenset({1, 2}))
    assert "faulty-processes" in {v.rule for v in validate_execution(e, alg)}


def test_correct_process_with_omissions_breaks_omission_validity():
    alg = FloodEcho(4, 1, 1)
    e = run(alg, [0] * 4, AdversarySchedule(frozenset({3}), (), (Omission(3, 1, 1, "send"),)), 2)
    e2 = replace(e, faulty=frozenset())
    assert "omission-validity" in {v.rule for v in validate_execution(e2, alg)}


def test_send_without_arrival_breaks_send_validity():
    alg = FloodEcho(4, 1, 1)
    e = run(alg, [0] * 4, None, 2)
    b = e.behavior(2)
    f = b.fragment(1)
    lost = next(iter(e.behavior(1).sent(1) & frozenset(m for m in e.behavior(1).sent(1) if m.receiver == 2)))
    e2 = _with_behavior(e, _with_fragment(b, 1, replace(f, received=f.received - {lost})))
    assert "send-validity" in {v.rule for v in validate_execution(e2, alg)}
