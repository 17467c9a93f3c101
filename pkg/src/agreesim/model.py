"""Formal execution objects: messages, states, fragments, behaviors, executions.

Processes are plain ints in ``1..n``. A value ``None`` for a decision is the
undecided marker. All records are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Optional

from . import codec


class HorizonMismatch(ValueError):
    """Two executions with different horizons were compared without an explicit bound."""


@dataclass(frozen=True, order=True)
class Message:
    sender: int
    receiver: int
    round: int
    payload: bytes = b""

    @property
    def key(self) -> tuple[int, int, int]:
        # structural identity; payload only matters for views
        return (self.sender, self.receiver, self.round)


@dataclass(frozen=True)
class StateDigest:
    """Stand-in for an internal state read back from a trace (only its hash survives)."""

    hexdigest: str
    dump: Any = None


@dataclass(frozen=True, eq=False)
class ProcState:
    process: int
    round: int
    proposal: Any
    decision: Any = None
    internal: Any = None

    @cached_property
    def digest(self) -> str:
        if isinstance(self.internal, StateDigest):
            return self.internal.hexdigest
        return codec.digest(self.internal)

    @property
    def decided(self) -> bool:
        return self.decision is not None

    def advance(self, internal: Any = None, decision: Any = None) -> "ProcState":
        """Successor state for the next round; an existing decision is kept."""
        if self.decision is not None:
            decision = self.decision
        return ProcState(self.process, self.round + 1, self.proposal, decision, internal)

    def _head(self) -> tuple:
        return (self.process, self.round, self.proposal, self.decision)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProcState):
            return NotImplemented
        if self._head() != other._head():
            return False
        raw = not isinstance(self.internal, StateDigest) and not isinstance(other.internal, StateDigest)
        if raw and self.internal == other.internal:
            return True
        return self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self._head())


EMPTY: frozenset = frozenset()


@dataclass(frozen=True)
class Fragment:
    """What one process did in one round."""

    state: ProcState
    sent: frozenset = EMPTY
    send_omitted: frozenset = EMPTY
    received: frozenset = EMPTY
    receive_omitted: frozenset = EMPTY

    @property
    def round(self) -> int:
        return self.state.round


@dataclass(frozen=True)
class Behavior:
    """One fragment per round, rounds 1..len(fragments)."""

    process: int
    fragments: tuple[Fragment, ...]

    def __len__(self) -> int:
        return len(self.fragments)

    def fragment(self, j: int) -> Fragment:
        if not 1 <= j <= len(self.fragments):
            raise IndexError(f"round {j} outside 1..{len(self.fragments)}")
        return self.fragments[j - 1]

    @property
    def proposal(self) -> Any:
        return self.fragments[0].state.proposal

    @property
    def final_state(self) -> ProcState:
        return self.fragments[-1].state

    def state(self, j: int) -> ProcState:
        return self.fragment(j).state

    def sent(self, j: int) -> frozenset:
        return self.fragment(j).sent

    def send_omitted(self, j: int) -> frozenset:
        return self.fragment(j).send_omitted

    def received(self, j: int) -> frozenset:
        return self.fragment(j).received

    def receive_omitted(self, j: int) -> frozenset:
        return self.fragment(j).receive_omitted

    def all_sent(self) -> frozenset:
        return frozenset().union(*(f.sent for f in self.fragments))

    def all_send_omitted(self) -> frozenset:
        return frozenset().union(*(f.send_omitted for f in self.fragments))

    def all_receive_omitted(self) -> frozenset:
        return frozenset().union(*(f.receive_omitted for f in self.fragments))

    def omits(self) -> bool:
        return any(f.send_omitted or f.receive_omitted for f in self.fragments)


def message_sets(b: Behavior) -> Behavior:
    """Accessor bundle for a behavior; the behavior itself exposes every accessor."""
    return b


@dataclass(frozen=True)
class ScenarioTag:
    """Label of a member of the isolation family.

    ``group`` is None for the fully correct execution of the given bit.
    ``name`` is the human label of the group ("B" or "C").
    """

    bit: int
    group: Optional[frozenset] = None
    from_round: Optional[int] = None
    name: str = ""

    def label(self) -> str:
        if self.group is None:
            return f"E{self.bit}"
        return f"E{self.bit}^{self.name}({self.from_round})"


@dataclass(frozen=True)
class Execution:
    n: int
    t: int
    faulty: frozenset
    behaviors: tuple[Behavior, ...]
    horizon: int
    byzantine: frozenset = EMPTY
    algorithm: str = ""
    schedule: str = ""
    tag: Optional[ScenarioTag] = field(default=None, compare=False)

    @property
    def processes(self) -> range:
        return range(1, self.n + 1)

    @property
    def correct(self) -> frozenset:
        return frozenset(p for p in self.processes if p not in self.faulty)

    def behavior(self, p: int) -> Behavior:
        if not 1 <= p <= self.n:
            raise KeyError(f"unknown process {p}")
        return self.behaviors[p - 1]

    def proposals(self) -> tuple:
        return tuple(b.proposal for b in self.behaviors)

    @property
    def exceeds_fault_budget(self) -> bool:
        return len(self.faulty) > self.t

    def retag(self, tag: Optional[ScenarioTag]) -> "Execution":
        return replace(self, tag=tag)


@dataclass(frozen=True)
class View:
    process: int
    proposal: Any
    received: tuple[frozenset, ...]
    states: tuple[ProcState, ...]


def view(e: Execution, p: int, horizon: Optional[int] = None) -> View:
    b = e.behavior(p)
    h = len(b) if horizon is None else min(horizon, len(b))
    frs = b.fragments[:h]
    return View(p, b.proposal, tuple(f.received for f in frs), tuple(f.state for f in frs))


def indistinguishable(e1: Execution, e2: Execution, p: int, horizon: Optional[int] = None) -> bool:
    """Same proposal and identical per-round received messages (payloads included).

    Without ``horizon`` the two executions must have equal horizons.
    """
    if horizon is None:
        if e1.horizon != e2.horizon:
            raise HorizonMismatch(f"horizons {e1.horizon} and {e2.horizon} differ")
        horizon = e1.horizon
    if horizon > min(e1.horizon, e2.horizon):
        raise HorizonMismatch(f"comparison horizon {horizon} exceeds an execution's horizon")
    v1, v2 = view(e1, p, horizon), view(e2, p, horizon)
    return v1.proposal == v2.proposal and v1.received == v2.received


def messages_between(msgs: Iterable[Message], senders: Iterable[int]) -> frozenset:
    s = set(senders)
    return frozenset(m for m in msgs if m.sender in s)
