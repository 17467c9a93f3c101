"""Execution-level transformations: isolation checks, omission swapping, merging."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .engine import Algorithm, checked_start, checked_step, isolation, run, SignatureOracle
from .model import EMPTY, Behavior, Execution, Fragment, ScenarioTag


class MergeError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    a: frozenset
    b: frozenset
    c: frozenset

    def swapped(self) -> "Partition":
        return Partition(self.a, self.c, self.b)


def canonical_partition(n: int, t: int) -> Partition:
    """A = first n - t/2 ids, B = next t/4, C = last t/4."""
    if t % 4 or t < 4 or t >= n:
        raise ValueError(f"partition needs 4 | t, 4 <= t < n; got n={n}, t={t}")
    q = t // 4
    a_end = n - t // 2
    return Partition(
        frozenset(range(1, a_end + 1)),
        frozenset(range(a_end + 1, a_end + q + 1)),
        frozenset(range(a_end + q + 1, n + 1)),
    )


def scenario(
    algorithm: Algorithm,
    bit: int,
    horizon: int,
    group: Optional[Iterable[int]] = None,
    from_round: Optional[int] = None,
    name: str = "",
) -> Execution:
    """Everybody proposes ``bit``; ``group`` (if any) is isolated from ``from_round``."""
    if group is None:
        tag = ScenarioTag(bit)
        return run(algorithm, [bit] * algorithm.n, None, horizon, tag=tag)
    g = frozenset(group)
    tag = ScenarioTag(bit, g, from_round, name)
    sched = isolation(g, from_round, name=f"isolate-{name or 'G'}-from-{from_round}")
    return run(algorithm, [bit] * algorithm.n, sched, horizon, tag=tag)


def check_isolated(e: Execution, g: Iterable[int], k: int) -> bool:
    """True iff every member of ``g`` is faulty, never send-omits, and receive-omits
    exactly the messages sent to it from outside ``g`` in rounds >= k."""
    g = frozenset(g)
    if not g or not g < frozenset(e.processes) or len(g) > e.t:
        raise ValueError("isolated group must be a nonempty strict subset of at most t processes")
    for p in g:
        if p not in e.faulty:
            return False
        b = e.behavior(p)
        for f in b.fragments:
            if f.send_omitted:
                return False
            arrived = f.received | f.receive_omitted
            sent_to_p = frozenset(
                m for q in e.processes if q != p for m in e.behavior(q).fragment(f.round).sent if m.receiver == p
            )
            if arrived != sent_to_p:
                return False
            for m in arrived:
                cross = m.sender not in g and m.round >= k
                if cross != (m in f.receive_omitted):
                    return False
    return True


def _tag(e: Execution) -> ScenarioTag:
    if e.tag is None or e.tag.group is None or e.tag.from_round is None:
        raise ValueError("execution carries no isolation-family tag")
    return e.tag


def mergeable(e1: Execution, e2: Execution) -> bool:
    """Both isolated from round 1, or isolated at most one round apart on the same proposal bit.

    With ``e1`` proposing 0 this is exactly the pairing of E_0^{B(k1)} with
    E_b^{C(k2)}; the bit-symmetric reading also covers the mirrored scan.
    """
    t1, t2 = _tag(e1), _tag(e2)
    if t1.group & t2.group:
        return False
    if t1.from_round == 1 and t2.from_round == 1:
        return True
    return abs(t1.from_round - t2.from_round) <= 1 and t1.bit == t2.bit


def swap_omission(e: Execution, p: int) -> Execution:
    """Make ``p`` correct by turning its receive-omissions into the senders' send-omissions.

    The faulty set is recomputed as exactly the processes that still omit.
    The result may exceed t faulty processes; check ``exceeds_fault_budget``.
    """
    moved = e.behavior(p).all_receive_omitted()
    if not moved:
        faulty = frozenset(q for q in e.processes if q in e.byzantine or e.behavior(q).omits())
        return Execution(e.n, e.t, faulty, e.behaviors, e.horizon, e.byzantine, e.algorithm, e.schedule, None)
    by_sender: dict[int, set] = {}
    for m in moved:
        by_sender.setdefault(m.sender, set()).add(m)
    behaviors = []
    for b in e.behaviors:
        out = by_sender.get(b.process, set())
        if not out and b.process != p:
            behaviors.append(b)
            continue
        frs = []
        for f in b.fragments:
            gone = frozenset(m for m in out if m.round == f.round)
            ro = f.receive_omitted - moved if b.process == p else f.receive_omitted
            frs.append(Fragment(f.state, f.sent - gone, f.send_omitted | gone, f.received, ro))
        behaviors.append(Behavior(b.process, tuple(frs)))
    faulty = frozenset(
        b.process for b in behaviors if b.process in e.byzantine or b.omits()
    )
    return Execution(e.n, e.t, faulty, tuple(behaviors), e.horizon, e.byzantine, e.algorithm,
                     f"{e.schedule}+swap({p})", None)


@dataclass(frozen=True)
class MergeScenario:
    left: Execution
    right: Execution
    partition: Partition


def merge(e1: Execution, e2: Execution, partition: Partition, algorithm: Algorithm) -> Execution:
    """Splice ``e1`` (isolating partition.b) and ``e2`` (isolating partition.c).

    A and B start from e1's proposals and C from e2's. Each round, A receives
    everything sent to it; B and C receive what they received in their source
    execution and receive-omit the rest. Everybody is replayed through the
    algorithm. The output horizon is the smaller input horizon.
    """
    if (e1.n, e1.t) != (e2.n, e2.t) or e1.n != algorithm.n:
        raise MergeError("executions disagree on (n, t)")
    t1, t2 = _tag(e1), _tag(e2)
    if t1.group != partition.b or t2.group != partition.c:
        raise MergeError("left must isolate B and right must isolate C")
    if not mergeable(e1, e2):
        raise MergeError(f"{t1.label()} and {t2.label()} are not mergeable")
    a, b, c = partition.a, partition.b, partition.c
    if a | b | c != frozenset(e1.processes) or len(a) + len(b) + len(c) != e1.n:
        raise MergeError("partition does not cover the processes disjointly")

    horizon = min(e1.horizon, e2.horizon)
    oracle = SignatureOracle() if algorithm.authenticated else None
    ctxs = {p: algorithm.context(p, oracle) for p in e1.processes}
    states, pending = {}, {}
    for p in e1.processes:
        src = e2 if p in c else e1
        states[p], pending[p] = checked_start(algorithm, ctxs[p], src.behavior(p).proposal)
    frags: dict[int, list] = {p: [] for p in e1.processes}
    for j in range(1, horizon + 1):
        to: dict[int, set] = {p: set() for p in e1.processes}
        for p in e1.processes:
            for m in pending[p]:
                to[m.receiver].add(m)
        for p in e1.processes:
            arrived = frozenset(to[p])
            if p in a:
                received, ro = arrived, EMPTY
            else:
                src = e1 if p in b else e2
                received = src.behavior(p).received(j)
                ro = arrived - received
            frags[p].append(Fragment(states[p], pending[p], EMPTY, received, ro))
            if j < horizon:
                states[p], pending[p] = checked_step(algorithm, ctxs[p], states[p], received)
    behaviors = tuple(Behavior(p, tuple(frags[p])) for p in e1.processes)
    return Execution(
        e1.n, e1.t, b | c, behaviors, horizon, algorithm=algorithm.name,
        schedule=f"merge[{t1.label()},{t2.label()}]",
    )
