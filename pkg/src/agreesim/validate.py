"""Structural checkers for fragments, behaviors and executions.

Violations are returned as data. Condition indices follow the order in which
the conditions are listed in each docstring below.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .engine import Algorithm, MalformedAlgorithmOutput, SignatureOracle, checked_start, checked_step
from .model import Behavior, Execution, Fragment

FRAGMENT_RULES = {
    1: "state.process = owner",
    2: "state.round = round",
    3: "every message has the fragment's round",
    4: "M^S ∩ M^SO = ∅",
    5: "M^R ∩ M^RO = ∅",
    6: "owner sends every message in M^S ∪ M^SO",
    7: "owner receives every message in M^R ∪ M^RO",
    8: "no message from the owner to itself",
    9: "no two messages in M^S ∪ M^SO share a receiver",
    10: "no two messages in M^R ∪ M^RO share a sender",
}

BEHAVIOR_RULES = {
    1: "fragment j is a j-round fragment",
    2: "first state is an initial state",
    3: "round-1 sends match the initial sends for proposal 0",
    4: "round-1 sends match the initial sends for proposal 1",
    5: "proposal constant across rounds",
    6: "decision never changes once set",
    7: "successive fragments follow the transition",
}

GUARANTEES = ("faulty-processes", "composition", "send-validity", "receive-validity", "omission-validity")


@dataclass(frozen=True)
class Violation:
    scope: str  # fragment | behavior | execution
    rule: str
    process: Optional[int] = None
    round: Optional[int] = None
    detail: str = ""
    index: Optional[int] = None

    def __str__(self) -> str:
        where = "".join(
            [f" p{self.process}" if self.process is not None else "", f" r{self.round}" if self.round is not None else ""]
        )
        return f"{self.scope}{where}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def _frag_violation(i: int, owner: int, rnd: int, detail: str) -> Violation:
    return Violation("fragment", FRAGMENT_RULES[i], owner, rnd, detail, i)


def validate_fragment(f: Fragment, owner: int, round_: int) -> list[Violation]:
    """Check the ten fragment conditions for ``owner`` at ``round_``.

    1 state.process = owner, 2 state.round = round, 3 every message is of
    that round, 4 sent and send-omitted disjoint, 5 received and
    receive-omitted disjoint, 6 owner is the sender of sent/send-omitted,
    7 owner is the receiver of received/receive-omitted, 8 no self-message,
    9 at most one outgoing message per receiver, 10 at most one incoming
    message per sender. Disjointness uses (sender, receiver, round) identity.
    """
    out: list[Violation] = []
    if f.state.process != owner:
        out.append(_frag_violation(1, owner, round_, f"state.process={f.state.process}"))
    if f.state.round != round_:
        out.append(_frag_violation(2, owner, round_, f"state.round={f.state.round}"))
    everything = f.sent | f.send_omitted | f.received | f.receive_omitted
    wrong = sorted(m.key for m in everything if m.round != round_)
    if wrong:
        out.append(_frag_violation(3, owner, round_, f"{wrong}"))
    both = {m.key for m in f.sent} & {m.key for m in f.send_omitted}
    if both:
        out.append(_frag_violation(4, owner, round_, f"{sorted(both)}"))
    both = {m.key for m in f.received} & {m.key for m in f.receive_omitted}
    if both:
        out.append(_frag_violation(5, owner, round_, f"{sorted(both)}"))
    outbound = f.sent | f.send_omitted
    inbound = f.received | f.receive_omitted
    bad = sorted(m.key for m in outbound if m.sender != owner)
    if bad:
        out.append(_frag_violation(6, owner, round_, f"{bad}"))
    bad = sorted(m.key for m in inbound if m.receiver != owner)
    if bad:
        out.append(_frag_violation(7, owner, round_, f"{bad}"))
    if any(m.sender == m.receiver for m in everything):
        out.append(_frag_violation(8, owner, round_, "self-message present"))
    # a message in both S and SO is reported by condition 4 only
    dup = [r for r, c in Counter(k[1] for k in {m.key for m in f.sent} | {m.key for m in f.send_omitted}).items() if c > 1]
    dup += [m.receiver for m in _same_key_twice(outbound)]
    if dup:
        out.append(_frag_violation(9, owner, round_, f"receivers {sorted(set(dup))}"))
    dup = [s for s, c in Counter(k[0] for k in {m.key for m in f.received} | {m.key for m in f.receive_omitted}).items() if c > 1]
    dup += [m.sender for m in _same_key_twice(inbound)]
    if dup:
        out.append(_frag_violation(10, owner, round_, f"senders {sorted(set(dup))}"))
    return out


def _same_key_twice(msgs: frozenset) -> list:
    """Messages whose identity repeats with a different payload."""
    seen: dict = {}
    clash = []
    for m in sorted(msgs):
        if m.key in seen and seen[m.key] != m.payload:
            clash.append(m)
        seen.setdefault(m.key, m.payload)
    return clash


def _beh(i: int, owner: int, rnd: Optional[int], detail: str) -> Violation:
    return Violation("behavior", BEHAVIOR_RULES[i], owner, rnd, detail, i)


def validate_behavior(
    b: Behavior,
    algorithm: Algorithm,
    owner: int,
    *,
    byzantine: bool = False,
    oracle: Optional[SignatureOracle] = None,
) -> list[Violation]:
    """Check the seven behavior conditions, replaying the transition from the start.

    Byzantine behaviors only have to be well-formed fragments with a constant
    proposal; they are not bound to the algorithm.
    """
    out: list[Violation] = []
    if not b.fragments:
        return [_beh(1, owner, None, "empty behavior")]
    for j, f in enumerate(b.fragments, start=1):
        for v in validate_fragment(f, owner, j):
            out.append(_beh(1, owner, j, str(v)))
    proposal = b.proposal
    for j, f in enumerate(b.fragments, start=1):
        if f.state.proposal != proposal:
            out.append(_beh(5, owner, j, f"{f.state.proposal!r} != {proposal!r}"))
    if byzantine:
        return out
    decided = None
    for j, f in enumerate(b.fragments, start=1):
        d = f.state.decision
        if decided is not None and d != decided:
            out.append(_beh(6, owner, j, f"{decided!r} -> {d!r}"))
        if d is not None and decided is None:
            decided = d

    if oracle is None and algorithm.authenticated:
        oracle = SignatureOracle()
    ctx = algorithm.context(owner, oracle)
    first = b.fragments[0]
    try:
        state, sends = checked_start(algorithm, ctx, proposal)
    except (MalformedAlgorithmOutput, ValueError, TypeError) as exc:
        return out + [_beh(2, owner, 1, f"initial transition failed: {exc}")]
    if state != first.state:
        out.append(_beh(2, owner, 1, "first state differs from the initial state for its proposal"))
    if sends != first.sent | first.send_omitted:
        idx = 3 if proposal == 0 else 4
        out.append(_beh(idx, owner, 1, "round-1 sends differ from the initial sends"))
    for j in range(1, len(b)):
        cur, nxt = b.fragments[j - 1], b.fragments[j]
        try:
            state, sends = checked_step(algorithm, ctx, state, cur.received)
        except (MalformedAlgorithmOutput, ValueError, TypeError) as exc:
            out.append(_beh(7, owner, j, f"transition failed: {exc}"))
            break
        if state != nxt.state:
            out.append(_beh(7, owner, j + 1, "state differs from the replayed transition"))
        if sends != nxt.sent | nxt.send_omitted:
            out.append(_beh(7, owner, j + 1, "sends differ from the replayed transition"))
    return out


def validate_execution(e: Execution, algorithm: Algorithm) -> list[Violation]:
    """Check the five execution guarantees; empty list means valid."""
    out: list[Violation] = []
    if len(e.faulty) > e.t or not e.faulty <= set(e.processes):
        out.append(Violation("execution", "faulty-processes", detail=f"|F|={len(e.faulty)} > t={e.t}"))
    if len(e.behaviors) != e.n:
        out.append(Violation("execution", "composition", detail=f"{len(e.behaviors)} behaviors for n={e.n}"))
        return out
    oracle = SignatureOracle() if algorithm.authenticated else None
    for p in e.processes:
        b = e.behavior(p)
        if len(b) != e.horizon:
            out.append(Violation("execution", "composition", p, detail=f"{len(b)} rounds, horizon {e.horizon}"))
        for v in validate_behavior(b, algorithm, p, byzantine=p in e.byzantine, oracle=oracle):
            out.append(Violation("execution", "composition", v.process, v.round, str(v)))

    for p in e.processes:
        for f in e.behavior(p).fragments:
            for m in f.sent:
                if not 1 <= m.receiver <= e.n:
                    out.append(Violation("execution", "send-validity", p, f.round, f"unknown receiver {m.receiver}"))
                    continue
                target = e.behavior(m.receiver)
                if m.round > len(target):
                    continue
                tf = target.fragment(m.round)
                if m not in tf.received and m not in tf.receive_omitted:
                    out.append(Violation("execution", "send-validity", p, f.round, f"{m.key} neither received nor receive-omitted"))
            for m in f.received | f.receive_omitted:
                if not 1 <= m.sender <= e.n:
                    out.append(Violation("execution", "receive-validity", p, f.round, f"unknown sender {m.sender}"))
                    continue
                src = e.behavior(m.sender)
                if m.round > len(src) or m not in src.fragment(m.round).sent:
                    out.append(Violation("execution", "receive-validity", p, f.round, f"{m.key} not sent by p{m.sender}"))
            if (f.send_omitted or f.receive_omitted) and p not in e.faulty:
                out.append(Violation("execution", "omission-validity", p, f.round, "omission by a correct process"))
    return out
