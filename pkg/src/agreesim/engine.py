"""Deterministic synchronous round engine.

Each round every process hands its pending sends to the network, the schedule
decides which of them are send-omitted or receive-omitted, and then every
non-Byzantine process applies the algorithm's transition to what it received.
Faulty omission processes run the algorithm unchanged.
"""

from __future__ import annotations

import hashlib
import hmac
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import codec
from .model import Behavior, Execution, Fragment, Message, ProcState, ScenarioTag

Sends = Iterable[tuple[int, bytes]]


class MalformedAlgorithmOutput(ValueError):
    pass


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class SignatureToken:
    signer: int
    digest: str

    def wire(self) -> list:
        return [self.signer, self.digest]

    @classmethod
    def from_wire(cls, obj: Sequence) -> "SignatureToken":
        signer, dig = obj
        if not isinstance(signer, int) or not isinstance(dig, str):
            raise ValueError("malformed token")
        return cls(signer, dig)


class SignatureOracle:
    """Idealized signatures: a keyed MAC whose key never leaves the engine.

    Tokens are transferable (anyone can verify a copy) but only the oracle can
    mint them, and it mints only for the process it is asked to sign for.
    """

    _KEY = b"agreesim/idealized-signature/v1"

    def __init__(self) -> None:
        self.issued: set[tuple[SignatureToken, bytes]] = set()
        self.verified: set[tuple[SignatureToken, bytes]] = set()
        self._memo: dict[tuple[SignatureToken, bytes], bool] = {}

    @staticmethod
    @lru_cache(maxsize=65536)
    def _mac(signer: int, content: bytes) -> str:
        msg = str(signer).encode() + b"|" + content
        return hmac.new(SignatureOracle._KEY, msg, hashlib.sha256).hexdigest()[:32]

    def sign(self, signer: int, content: bytes) -> SignatureToken:
        tok = SignatureToken(signer, self._mac(signer, content))
        self.issued.add((tok, content))
        return tok

    def verify(self, token: SignatureToken, content: bytes) -> bool:
        key = (token, content)
        ok = self._memo.get(key)
        if ok is None:
            ok = hmac.compare_digest(token.digest, self._mac(token.signer, content))
            self._memo[key] = ok
            if ok:
                self.verified.add(key)
        return ok


@dataclass(frozen=True)
class ProcessContext:
    """What a process may know about its environment."""

    pid: int
    n: int
    t: int
    oracle: Optional[SignatureOracle] = field(default=None, compare=False)

    def sign(self, content: bytes) -> SignatureToken:
        if self.oracle is None:
            raise RuntimeError("signatures unavailable in this run")
        return self.oracle.sign(self.pid, content)

    def verify(self, token: SignatureToken, content: bytes) -> bool:
        if self.oracle is None:
            raise RuntimeError("signatures unavailable in this run")
        return self.oracle.verify(token, content)

    def others(self) -> range:
        return range(1, self.n + 1)


class Algorithm(ABC):
    """A deterministic state machine instantiated for a fixed (n, t).

    ``start`` yields the round-1 state and round-1 sends for a proposal;
    ``step`` maps (state of round r, messages received in round r) to the
    state of round r+1 and the sends of round r+1.
    """

    name = "algorithm"
    authenticated = False

    def __init__(self, n: int, t: int) -> None:
        if not 0 <= t < n:
            raise ValueError(f"need 0 <= t < n, got n={n}, t={t}")
        self.n = n
        self.t = t

    @abstractmethod
    def start(self, ctx: ProcessContext, proposal: Any) -> tuple[ProcState, Sends]: ...

    @abstractmethod
    def step(self, ctx: ProcessContext, state: ProcState, received: frozenset) -> tuple[ProcState, Sends]: ...

    def context(self, pid: int, oracle: Optional[SignatureOracle] = None) -> ProcessContext:
        if self.authenticated and oracle is None:
            oracle = SignatureOracle()
        return ProcessContext(pid, self.n, self.t, oracle)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name} n={self.n} t={self.t}>"


def broadcast(ctx: ProcessContext, payload: bytes) -> list[tuple[int, bytes]]:
    return [(q, payload) for q in range(1, ctx.n + 1) if q != ctx.pid]


def outgoing(pid: int, n: int, round_: int, sends: Sends) -> frozenset:
    """Turn raw algorithm output into messages, rejecting malformed output."""
    out = []
    seen = set()
    for receiver, payload in sends:
        if not isinstance(receiver, int) or not 1 <= receiver <= n:
            raise MalformedAlgorithmOutput(f"p{pid} sends to unknown process {receiver!r}")
        if receiver == pid:
            raise MalformedAlgorithmOutput(f"p{pid} sends to itself in round {round_}")
        if receiver in seen:
            raise MalformedAlgorithmOutput(f"p{pid} sends twice to p{receiver} in round {round_}")
        if not isinstance(payload, bytes):
            raise MalformedAlgorithmOutput(f"p{pid} payload is {type(payload).__name__}, not bytes")
        seen.add(receiver)
        out.append(Message(pid, receiver, round_, payload))
    return frozenset(out)


def checked_start(alg: Algorithm, ctx: ProcessContext, proposal: Any) -> tuple[ProcState, frozenset]:
    state, sends = alg.start(ctx, proposal)
    if (state.process, state.round, state.proposal) != (ctx.pid, 1, proposal):
        raise MalformedAlgorithmOutput(f"p{ctx.pid} initial state is {state._head()}")
    return state, outgoing(ctx.pid, alg.n, 1, sends)


def checked_step(alg: Algorithm, ctx: ProcessContext, state: ProcState, received: frozenset) -> tuple[ProcState, frozenset]:
    nxt, sends = alg.step(ctx, state, received)
    if nxt.process != state.process or nxt.round != state.round + 1 or nxt.proposal != state.proposal:
        raise MalformedAlgorithmOutput(f"p{ctx.pid} bad successor of round {state.round}: {nxt._head()}")
    if state.decision is not None and nxt.decision != state.decision:
        raise MalformedAlgorithmOutput(f"p{ctx.pid} revoked decision {state.decision!r}")
    return nxt, outgoing(ctx.pid, alg.n, state.round + 1, sends)


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class IsolationDirective:
    """``group`` receive-omits every message from outside it in rounds >= from_round."""

    group: frozenset
    from_round: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "group", frozenset(self.group))
        if self.from_round < 1:
            raise ScheduleError("isolation must start at round >= 1")


@dataclass(frozen=True)
class Omission:
    sender: int
    receiver: int
    round: int
    kind: str  # "send" or "receive"

    def __post_init__(self) -> None:
        if self.kind not in ("send", "receive"):
            raise ScheduleError(f"omission kind must be send|receive, got {self.kind!r}")


@dataclass(frozen=True)
class ByzantineView:
    pid: int
    n: int
    t: int
    round: int
    proposal: Any
    inbox: tuple  # frozensets of messages received in rounds 1..round-1
    coalition: frozenset
    ctx: ProcessContext
    rushing: Optional[frozenset] = None  # correct same-round sends, rushing mode only


class ByzantineBehavior(ABC):
    name = "byzantine"

    @abstractmethod
    def act(self, view: ByzantineView) -> Sends: ...

    def __repr__(self) -> str:
        return f"<byzantine {self.name}>"


@dataclass(frozen=True)
class AdversarySchedule:
    faulty: frozenset = frozenset()
    isolate: tuple = ()
    omissions: tuple = ()
    byzantine: Mapping[int, ByzantineBehavior] = field(default_factory=dict, hash=False)
    rushing: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        implied = set(self.faulty)
        for d in self.isolate:
            implied |= d.group
        for o in self.omissions:
            implied.add(o.sender if o.kind == "send" else o.receiver)
        implied |= set(self.byzantine)
        object.__setattr__(self, "faulty", frozenset(implied))
        object.__setattr__(self, "isolate", tuple(self.isolate))
        object.__setattr__(self, "omissions", tuple(self.omissions))

    def check(self, n: int, t: int) -> None:
        pids = set(self.faulty)
        for d in self.isolate:
            pids |= d.group
            if len(d.group) >= n:
                raise ScheduleError("an isolated group must be a strict subset of the processes")
        for o in self.omissions:
            pids |= {o.sender, o.receiver}
        bad = sorted(p for p in pids if not (isinstance(p, int) and 1 <= p <= n))
        if bad:
            raise ScheduleError(f"schedule references unknown processes {bad}")
        if len(self.faulty) > t:
            raise ScheduleError(f"{len(self.faulty)} faulty processes exceed t={t}")

    def ident(self) -> str:
        if self.name:
            return self.name
        if not self.faulty:
            return "fault-free"
        return "sched-" + codec.digest(schedule_to_json(self))[:12]

    def send_omits(self, m: Message) -> bool:
        return (m.sender, m.receiver, m.round, "send") in self._omission_keys

    def receive_omits(self, m: Message) -> bool:
        if (m.sender, m.receiver, m.round, "receive") in self._omission_keys:
            return True
        for d in self.isolate:
            if m.receiver in d.group and m.sender not in d.group and m.round >= d.from_round:
                return True
        return False

    @property
    def _omission_keys(self) -> frozenset:
        keys = self.__dict__.get("_okeys")
        if keys is None:
            keys = frozenset((o.sender, o.receiver, o.round, o.kind) for o in self.omissions)
            object.__setattr__(self, "_okeys", keys)
        return keys


def isolation(group: Iterable[int], from_round: int, name: str = "") -> AdversarySchedule:
    g = frozenset(group)
    return AdversarySchedule(faulty=g, isolate=(IsolationDirective(g, from_round),), name=name)


def schedule_to_json(s: AdversarySchedule) -> dict:
    doc: dict = {
        "faulty": sorted(s.faulty),
        "isolate": [{"group": sorted(d.group), "from_round": d.from_round} for d in s.isolate],
        "omissions": [
            {"from": o.sender, "to": o.receiver, "round": o.round, "kind": o.kind}
            for o in sorted(s.omissions, key=lambda o: (o.round, o.sender, o.receiver, o.kind))
        ],
    }
    if s.byzantine:
        doc["byzantine"] = {str(p): b.name for p, b in sorted(s.byzantine.items())}
    if s.rushing:
        doc["rushing"] = True
    return doc


def schedule_from_json(doc: Mapping, behaviors: Optional[Mapping[str, Any]] = None, name: str = "") -> AdversarySchedule:
    """Parse a schedule document; ``behaviors`` maps Byzantine behavior ids to factories."""
    if not isinstance(doc, Mapping):
        raise ScheduleError("schedule must be a JSON object")
    try:
        isolate = tuple(IsolationDirective(frozenset(d["group"]), int(d["from_round"])) for d in doc.get("isolate", []))
        omissions = tuple(
            Omission(int(o["from"]), int(o["to"]), int(o["round"]), str(o["kind"])) for o in doc.get("omissions", [])
        )
        faulty = frozenset(int(p) for p in doc.get("faulty", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleError(f"malformed schedule: {exc}") from exc
    byz = {}
    for pid, bid in dict(doc.get("byzantine", {})).items():
        if behaviors is None or bid not in behaviors:
            raise ScheduleError(f"unknown Byzantine behavior {bid!r}")
        byz[int(pid)] = behaviors[bid]()
    return AdversarySchedule(faulty, isolate, omissions, byz, bool(doc.get("rushing", False)), name or str(doc.get("id", "")))


# ------------------------------------------------------------------ running


def run(
    algorithm: Algorithm,
    proposals: Sequence[Any],
    schedule: Optional[AdversarySchedule] = None,
    horizon: int = 1,
    *,
    until_decided: Optional[int] = None,
    tag: Optional[ScenarioTag] = None,
    oracle: Optional[SignatureOracle] = None,
) -> Execution:
    """Run ``algorithm`` for ``horizon`` rounds.

    With ``until_decided=m`` the run ends at round ``d + m``, where ``d`` is the
    first round whose starting states are decided for every correct process;
    ``horizon`` stays an upper bound.
    """
    n, t = algorithm.n, algorithm.t
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(proposals) != n:
        raise ValueError(f"expected {n} proposals, got {len(proposals)}")
    schedule = schedule or AdversarySchedule()
    schedule.check(n, t)
    if algorithm.authenticated and oracle is None:
        oracle = SignatureOracle()
    byz = dict(schedule.byzantine)
    coalition = frozenset(byz)
    ctxs = {p: ProcessContext(p, n, t, oracle) for p in range(1, n + 1)}
    correct = [p for p in range(1, n + 1) if p not in schedule.faulty]

    states: dict[int, ProcState] = {}
    pending: dict[int, frozenset] = {}
    for p in range(1, n + 1):
        if p in byz:
            states[p] = ProcState(p, 1, proposals[p - 1], None, ("byzantine", byz[p].name))
            continue
        states[p], pending[p] = checked_start(algorithm, ctxs[p], proposals[p - 1])

    frags: dict[int, list[Fragment]] = {p: [] for p in range(1, n + 1)}
    inbox: dict[int, list[frozenset]] = {p: [] for p in byz}
    stop_at = horizon
    watching = until_decided is not None
    r = 1
    while r <= stop_at:
        if watching and all(states[p].decided for p in correct):
            stop_at = min(horizon, r + until_decided)
            watching = False
        if byz:
            rush = frozenset().union(*(pending[q] for q in pending if q not in byz)) if schedule.rushing else None
            for p, beh in byz.items():
                v = ByzantineView(p, n, t, r, proposals[p - 1], tuple(inbox[p]), coalition, ctxs[p], rush)
                pending[p] = outgoing(p, n, r, beh.act(v))

        sent: dict[int, set] = {p: set() for p in range(1, n + 1)}
        omitted: dict[int, set] = {p: set() for p in range(1, n + 1)}
        to: dict[int, list] = {p: [] for p in range(1, n + 1)}
        for p in range(1, n + 1):
            for m in pending[p]:
                if schedule.faulty and schedule.send_omits(m):
                    omitted[p].add(m)
                else:
                    sent[p].add(m)
                    to[m.receiver].append(m)

        for p in range(1, n + 1):
            rec, rec_om = [], []
            for m in to[p]:
                (rec_om if schedule.faulty and schedule.receive_omits(m) else rec).append(m)
            received = frozenset(rec)
            frags[p].append(Fragment(states[p], frozenset(sent[p]), frozenset(omitted[p]), received, frozenset(rec_om)))
            if p in byz:
                inbox[p].append(received)
            elif r < stop_at:
                states[p], pending[p] = checked_step(algorithm, ctxs[p], states[p], received)
        if r < stop_at:
            for p in byz:
                s = states[p]
                states[p] = ProcState(p, r + 1, s.proposal, None, s.internal)
        r += 1

    behaviors = tuple(Behavior(p, tuple(frags[p])) for p in range(1, n + 1))
    return Execution(
        n=n,
        t=t,
        faulty=schedule.faulty,
        behaviors=behaviors,
        horizon=len(behaviors[0]),
        byzantine=coalition,
        algorithm=algorithm.name,
        schedule=schedule.ident(),
        tag=tag,
    )


def message_complexity(e: Execution) -> int:
    """Messages successfully sent by correct processes."""
    return sum(len(f.sent) for p in e.correct for f in e.behavior(p).fragments)


def decisions(e: Execution) -> dict[int, Any]:
    """Decision held in each process's last recorded state (None = undecided)."""
    return {p: e.behavior(p).final_state.decision for p in e.processes}


def decision_rounds(e: Execution) -> dict[int, Optional[int]]:
    """First round whose starting state carries a decision, per process."""
    out: dict[int, Optional[int]] = {}
    for p in e.processes:
        out[p] = next((f.round for f in e.behavior(p).fragments if f.state.decided), None)
    return out
