"""Weak-consensus candidates used as falsifier subjects.

None of these is a correct weak consensus under omission faults except by
accident; they exist to be attacked.
"""

from __future__ import annotations

from .codec import decode_payload, encode_payload
from .engine import Algorithm, ProcessContext, broadcast
from .model import ProcState


class ConstantDecision(Algorithm):
    """Decides a fixed bit in its initial state and never sends."""

    def __init__(self, n: int, t: int, bit: int, name: str) -> None:
        super().__init__(n, t)
        self.bit = bit
        self.name = name

    def start(self, ctx, proposal):
        return ProcState(ctx.pid, 1, proposal, self.bit, ()), []

    def step(self, ctx, state, received):
        return state.advance(()), []


def silent_default(n: int, t: int) -> ConstantDecision:
    return ConstantDecision(n, t, 1, "silent-default")


def constant_zero(n: int, t: int) -> ConstantDecision:
    return ConstantDecision(n, t, 0, "constant-0")


class StarLeader(Algorithm):
    """Gather proposals at p1, then scatter p1's decision.

    p1 decides its proposal if it heard the same proposal from everybody,
    otherwise 1. Everybody else adopts what p1 scatters, or 1 if nothing
    arrives. Exactly 2(n-1) messages in a fault-free run.
    """

    name = "star-leader"
    leader = 1

    def start(self, ctx, proposal):
        sends = [] if ctx.pid == self.leader else [(self.leader, encode_payload(proposal))]
        return ProcState(ctx.pid, 1, proposal, None, ()), sends

    def step(self, ctx, state, received):
        r = state.round
        if r == 1 and ctx.pid == self.leader:
            heard = [decode_payload(m.payload) for m in received]
            unanimous = len(heard) == self.n - 1 and all(v == state.proposal for v in heard)
            d = state.proposal if unanimous else 1
            return state.advance((), d), broadcast(ctx, encode_payload(d))
        if r == 2 and ctx.pid != self.leader:
            got = [decode_payload(m.payload) for m in received if m.sender == self.leader]
            d = got[0] if got and got[0] in (0, 1) else 1
            return state.advance((), d), []
        return state.advance(()), []


class FloodEcho(Algorithm):
    """k rounds of all-to-all view exchange.

    A view is the set of (process, proposal) pairs known so far. After round
    k a process decides 0 iff its view covers all n processes and every
    proposal in it is 0; otherwise it decides 1.
    """

    def __init__(self, n: int, t: int, k: int) -> None:
        super().__init__(n, t)
        if k < 1:
            raise ValueError("flood-echo needs k >= 1")
        self.k = k
        self.name = f"flood-echo-{k}"

    def start(self, ctx, proposal):
        known = frozenset({(ctx.pid, proposal)})
        return ProcState(ctx.pid, 1, proposal, None, known), broadcast(ctx, self._encode(known))

    @staticmethod
    def _encode(known: frozenset) -> bytes:
        return encode_payload(sorted(known))

    def step(self, ctx, state, received):
        known = set(state.internal)
        for m in received:
            known.update((int(p), v) for p, v in decode_payload(m.payload))
        known = frozenset(known)
        r = state.round
        if r < self.k:
            return state.advance(known), broadcast(ctx, self._encode(known))
        if r == self.k:
            complete = len({p for p, _ in known}) == self.n and all(v == 0 for _, v in known)
            return state.advance(known, 0 if complete else 1), []
        return state.advance(known), []
