"""Agreement from interactive consistency, weak consensus from agreement,
and an authenticated interactive-consistency protocol to drive both.

Interactive consistency here is n parallel signature-chain broadcasts. A
chain for origin o is (o, value, signatures); every signature covers the
pair (o, value), the first signer is o and all signers are distinct. A chain
arriving in round r is accepted if it carries exactly r signatures, the last
from the sender, and the value is new for o; at most two values are kept
per origin since two already prove equivocation. Accepted chains are
relayed with one more signature while r <= t. After round t+1 the entry for
o is its unique accepted value, or the smallest input value otherwise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

from .codec import canonical_bytes, decode_payload, encode_payload, freeze, value_key
from .engine import (
    AdversarySchedule,
    Algorithm,
    ByzantineBehavior,
    ByzantineView,
    ProcessContext,
    SignatureToken,
    decisions,
    run,
)
from .harness import horizon_cap
from .model import Execution, ProcState
from .validity import (
    ENUMERATION_BOUND,
    ConstantValidity,
    EnumerationTooLarge,
    GammaTable,
    ICValidity,
    InputConfiguration,
    StrongValidity,
    ValidityProperty,
    WeakValidity,
    check_cc,
    check_trivial,
)

MAX_VALUES_PER_ORIGIN = 2


class ReductionRefused(ValueError):
    pass


@lru_cache(maxsize=65536)
def chain_content(origin: int, value: Any) -> bytes:
    return canonical_bytes([origin, value])


def _chain_wire(origin: int, value: Any, sigs: Sequence[SignatureToken]) -> list:
    return [origin, value, [s.wire() for s in sigs]]


def _parse_chain(obj: Any) -> Optional[tuple[int, Any, tuple]]:
    try:
        origin, value, raw = obj
        sigs = tuple(SignatureToken.from_wire(s) for s in raw)
    except (TypeError, ValueError):
        return None
    if not isinstance(origin, int) or isinstance(origin, bool):
        return None
    return origin, freeze(value), sigs


class InteractiveConsistency(Algorithm):
    """Signature-chain interactive consistency; decides a length-n vector after round t+1.

    Internal state: (accepted, relayed) where ``accepted[o-1]`` is the tuple of
    values accepted for origin o, and ``relayed`` the (origin, value) pairs
    sent in the current round.
    """

    authenticated = True

    def __init__(self, n: int, t: int, values: Sequence[Any] = (0, 1)) -> None:
        super().__init__(n, t)
        if not values:
            raise ValueError("need at least one input value")
        self.values = tuple(sorted((freeze(v) for v in values), key=value_key))
        self.default = self.values[0]
        self.name = "ds-ic"

    def start(self, ctx, proposal):
        proposal = freeze(proposal)
        if proposal not in self.values:
            raise ValueError(f"proposal {proposal!r} outside {self.values}")
        accepted = tuple((proposal,) if o == ctx.pid else () for o in range(1, self.n + 1))
        chain = _chain_wire(ctx.pid, proposal, [ctx.sign(chain_content(ctx.pid, proposal))])
        state = ProcState(ctx.pid, 1, proposal, None, (accepted, ((ctx.pid, proposal),)))
        return state, self._relay(ctx, [chain])

    def _relay(self, ctx, chains: list) -> list:
        if not chains:
            return []
        payload = encode_payload(chains)
        return [(q, payload) for q in range(1, self.n + 1) if q != ctx.pid]

    def step(self, ctx, state, received):
        r = state.round
        accepted = state.internal[0]
        if r > self.t + 1:
            return state.advance(state.internal), []
        accepted, fresh = self._accept(ctx, accepted, received, r)
        if r == self.t + 1:
            vec = tuple(a[0] if len(a) == 1 else self.default for a in accepted)
            return state.advance((accepted, ()), vec), []
        relay = [_chain_wire(o, v, sigs + (ctx.sign(chain_content(o, v)),)) for o, v, sigs in fresh]
        return state.advance((accepted, tuple((o, v) for o, v, _ in fresh))), self._relay(ctx, relay)

    def _accept(self, ctx: ProcessContext, accepted: tuple, received: frozenset, r: int):
        acc = [list(a) for a in accepted]
        fresh = []
        for m in sorted(received):
            try:
                chains = decode_payload(m.payload)
            except (ValueError, UnicodeDecodeError):
                continue
            if not isinstance(chains, tuple):
                continue
            for obj in chains:
                parsed = _parse_chain(obj)
                if parsed is None:
                    continue
                o, v, sigs = parsed
                if not 1 <= o <= self.n or v not in self.values:
                    continue
                slot = acc[o - 1]
                if v in slot or len(slot) >= MAX_VALUES_PER_ORIGIN:
                    continue
                if len(sigs) != r or sigs[0].signer != o or sigs[-1].signer != m.sender:
                    continue
                signers = [s.signer for s in sigs]
                if len(set(signers)) != r or ctx.pid in signers:
                    continue
                content = chain_content(o, v)
                if all(ctx.verify(s, content) for s in sigs):
                    slot.append(v)
                    fresh.append((o, v, sigs))
        return tuple(tuple(a) for a in acc), tuple(fresh)


def interactive_consistency(n: int, t: int, values: Sequence[Any] = (0, 1)) -> InteractiveConsistency:
    return InteractiveConsistency(n, t, values)


ICVector = tuple


# ------------------------------------------------------------- wrappers


class Relabeled(Algorithm):
    """Runs ``inner`` on translated proposals and translates its decision.

    Sends are exactly the inner algorithm's sends. The wrapper state keeps the
    inner state's proposal, decision and internal part.
    """

    def __init__(self, inner: Algorithm, name: str,
                 proposal_map: Callable[[int, Any], Any], decision_map: Callable[[Any], Any]) -> None:
        super().__init__(inner.n, inner.t)
        self.inner = inner
        self.name = name
        self.authenticated = inner.authenticated
        self.proposal_map = proposal_map
        self.decision_map = decision_map

    def _wrap(self, outer_proposal: Any, s: ProcState) -> ProcState:
        d = None if s.decision is None else self.decision_map(s.decision)
        return ProcState(s.process, s.round, outer_proposal, d, (s.proposal, s.decision, s.internal))

    def start(self, ctx, proposal):
        s, sends = self.inner.start(ctx, self.proposal_map(ctx.pid, proposal))
        return self._wrap(proposal, s), sends

    def step(self, ctx, state, received):
        ip, idec, iint = state.internal
        inner_state = ProcState(state.process, state.round, ip, idec, iint)
        s, sends = self.inner.step(ctx, inner_state, received)
        nxt = self._wrap(state.proposal, s)
        if state.decision is not None and nxt.decision != state.decision:
            nxt = ProcState(nxt.process, nxt.round, nxt.proposal, state.decision, nxt.internal)
        return nxt, sends


def inner_execution_decisions(e: Execution) -> dict[int, Any]:
    """Decisions of the wrapped algorithm, read out of a Relabeled execution."""
    return {p: e.behavior(p).final_state.internal[1] for p in e.processes if p not in e.byzantine}


def cc_closed_form(prop: ValidityProperty) -> Optional[bool]:
    """Known CC answer for builtins at any scale, or None."""
    if isinstance(prop, (WeakValidity, ICValidity, ConstantValidity)):
        return True
    if isinstance(prop, StrongValidity):
        return prop.n > 2 * prop.t
    return None


def gamma_for(prop: ValidityProperty) -> GammaTable:
    """Γ by enumeration when feasible, else the builtin closed-form rule."""
    if prop.count() <= ENUMERATION_BOUND:
        holds, extra = check_cc(prop)
        if not holds:
            raise ReductionRefused(f"{prop.name} violates the containment condition at {extra.config}")
        rule = prop.gamma_rule()
        return GammaTable(extra.selection, rule)
    known = cc_closed_form(prop)
    rule = prop.gamma_rule()
    if known is False:
        raise ReductionRefused(f"{prop.name} violates the containment condition")
    if known is None or rule is None:
        raise EnumerationTooLarge(f"{prop!r} is too large to enumerate and has no closed form")
    return GammaTable(rule=rule)


def val_agreement_from_ic(prop: ValidityProperty, gamma: Optional[GammaTable] = None,
                          ic: Optional[Algorithm] = None) -> Relabeled:
    """Propose to interactive consistency, decide Γ of the agreed vector."""
    if cc_closed_form(prop) is False:
        raise ReductionRefused(f"{prop.name} violates the containment condition")
    gamma = gamma if gamma is not None else gamma_for(prop)
    ic = ic if ic is not None else interactive_consistency(prop.n, prop.t, prop.inputs)
    if (ic.n, ic.t) != (prop.n, prop.t):
        raise ValueError("interactive consistency instantiated for a different (n, t)")
    return Relabeled(
        ic, f"agree-{prop.name}",
        proposal_map=lambda pid, v: v,
        decision_map=lambda vec: gamma(InputConfiguration.full(vec)),
    )


@dataclass(frozen=True)
class AnchorSet:
    c0: InputConfiguration
    v0: Any
    c1_star: InputConfiguration
    c1: InputConfiguration
    v1: Any

    def to_json(self) -> dict:
        def out(v):
            return list(out(x) for x in v) if isinstance(v, tuple) else v
        return {
            "c0": self.c0.to_json(), "v0": out(self.v0),
            "c1_star": self.c1_star.to_json(), "c1": self.c1.to_json(), "v1": out(self.v1),
        }


def fully_correct_decision(agreement: Algorithm, config: InputConfiguration) -> Any:
    e = run(agreement, list(config.entries), None, horizon_cap(), until_decided=0)
    dec = set(decisions(e).values())
    if len(dec) != 1 or None in dec:
        raise ReductionRefused(f"{agreement.name} did not reach one decision on {config}: {sorted(map(str, dec))}")
    return dec.pop()


def derive_anchors(agreement: Algorithm, prop: ValidityProperty) -> AnchorSet:
    """Fix c0, c1 and their decisions; refuses trivial properties."""
    lo = prop.inputs[0]
    c0 = InputConfiguration.full([lo] * prop.n)
    v0 = fully_correct_decision(agreement, c0)
    c1_star = prop.first_excluding(v0)
    if c1_star is None:
        raise ReductionRefused(f"{prop.name} admits {v0!r} everywhere; the property is trivial")
    c1 = InputConfiguration(tuple(lo if v is None else v for v in c1_star.entries))
    v1 = fully_correct_decision(agreement, c1)
    if v1 == v0:
        raise ReductionRefused(f"{agreement.name} decides {v0!r} on both anchors; it does not solve {prop.name}")
    return AnchorSet(c0, v0, c1_star, c1, v1)


def weak_from_agreement(agreement: Algorithm, anchors: AnchorSet) -> Relabeled:
    """Binary weak consensus: run the agreement on c0 or c1, output 0 iff it decided v0."""
    c = (anchors.c0, anchors.c1)
    v0 = anchors.v0

    def proposal_map(pid, bit):
        if bit not in (0, 1):
            raise ValueError(f"weak consensus proposals are bits, got {bit!r}")
        return c[bit][pid]

    return Relabeled(agreement, f"weak[{agreement.name}]", proposal_map, lambda d: 0 if d == v0 else 1)


def check_nontrivial(prop: ValidityProperty) -> None:
    if prop.count() <= ENUMERATION_BOUND:
        trivial, v = check_trivial(prop)
        if trivial:
            raise ReductionRefused(f"{prop.name} is trivial (always admits {v!r})")


# ------------------------------------------------------------- Byzantine menu


def _signed_chain(view: ByzantineView, origin: int, value: Any, signers: Iterable[int]) -> list:
    content = chain_content(origin, value)
    sigs = [view.ctx.oracle.sign(s, content) for s in signers]
    return _chain_wire(origin, value, sigs)


def _relay_received(view: ByzantineView) -> list:
    """Chains from last round that the coalition member can legally extend, with its signature added."""
    if view.round < 2 or not view.inbox:
        return []
    out, seen = [], set()
    for m in sorted(view.inbox[-1]):
        try:
            chains = decode_payload(m.payload)
        except (ValueError, UnicodeDecodeError):
            continue
        for obj in chains if isinstance(chains, tuple) else ():
            parsed = _parse_chain(obj)
            if parsed is None:
                continue
            o, v, sigs = parsed
            if (o, v) in seen or len(sigs) != view.round - 1 or view.pid in {s.signer for s in sigs}:
                continue
            seen.add((o, v))
            tok = view.ctx.oracle.sign(view.pid, chain_content(o, v))
            out.append(_chain_wire(o, v, list(sigs) + [tok]))
    return out


def _send_all(view: ByzantineView, chains: list, to: Iterable[int]) -> list:
    if not chains:
        return []
    payload = encode_payload(chains)
    return [(q, payload) for q in to if q != view.pid]


class Silent(ByzantineBehavior):
    name = "silent"

    def act(self, view):
        return []


class Equivocator(ByzantineBehavior):
    """Round 1: value a to the lower half of the others, b to the rest. Then relays what it hears."""

    name = "equivocator"

    def __init__(self, a: Any = 0, b: Any = 1) -> None:
        self.a, self.b = a, b

    def act(self, view):
        others = [q for q in range(1, view.n + 1) if q != view.pid]
        if view.round == 1:
            half = len(others) // 2
            ca = [_signed_chain(view, view.pid, self.a, [view.pid])]
            cb = [_signed_chain(view, view.pid, self.b, [view.pid])]
            return _send_all(view, ca, others[:half]) + _send_all(view, cb, others[half:])
        if view.round <= view.t + 1:
            return _send_all(view, _relay_received(view), others)
        return []


class Withholder(ByzantineBehavior):
    """Sends its own chain to one process only and never relays."""

    name = "withholder"

    def act(self, view):
        if view.round != 1:
            return []
        target = next(q for q in range(1, view.n + 1) if q not in view.coalition)
        return _send_all(view, [_signed_chain(view, view.pid, view.proposal, [view.pid])], [target])


class Injector(ByzantineBehavior):
    """Injects a coalition-signed chain into one correct process as late as it is still
    valid, then offers another correct process a round-(t+1) chain with forged signatures."""

    name = "injector"

    def __init__(self, value: Any = 1) -> None:
        self.value = value

    def act(self, view):
        correct = [q for q in range(1, view.n + 1) if q not in view.coalition]
        if not correct:
            return []
        partners = sorted(view.coalition - {view.pid})
        signers = partners + [view.pid]  # origin first, sender last
        sends = []
        if view.round == len(signers):
            chain = _signed_chain(view, signers[0], self.value, signers)
            sends.append((correct[-1], encode_payload([chain])))
        if view.round == view.t + 1 and correct[0] != correct[-1]:
            pool = [q for q in range(1, view.n + 1) if q != view.pid]
            signers = pool[: view.t] + [view.pid]
            origin = signers[0]
            content = chain_content(origin, self.value)
            sigs = [
                view.ctx.oracle.sign(q, content) if q in view.coalition else SignatureToken(q, "0" * 32)
                for q in signers
            ]
            sends.append((correct[0], encode_payload([_chain_wire(origin, self.value, sigs)])))
        return sends


MENU: dict[str, Callable[[], ByzantineBehavior]] = {
    "silent": Silent,
    "equivocator": Equivocator,
    "withholder": Withholder,
    "injector": Injector,
}


# ------------------------------------------------------------- conformance


def adversary_corpus(n: int, t: int, values: Sequence[Any], configs: int = 8) -> list[tuple[str, tuple, Any]]:
    """Fault-free runs on the first ``configs`` full proposal vectors, then every menu
    behavior on the last t processes for the first two vectors."""
    full = list(itertools.islice(itertools.product(values, repeat=n), configs))
    cases: list[tuple[str, tuple, Any]] = [("fault-free", props, None) for props in full]
    if t:
        faulty = range(n - t + 1, n + 1)
        for name, factory in MENU.items():
            for props in full[:2]:
                sched = AdversarySchedule(byzantine={p: factory() for p in faulty}, name=f"byzantine-{name}")
                cases.append((name, props, sched))
    return cases


def exhaustive_corpus(n: int, t: int, values: Sequence[Any] = (0, 1), rushing: bool = False
                      ) -> Iterator[tuple[str, tuple, Optional[AdversarySchedule]]]:
    """Every proposal vector fault-free, then every nonempty Byzantine set of size at most t
    with every assignment of menu behaviors, again under every proposal vector."""
    vectors = list(itertools.product(values, repeat=n))
    for props in vectors:
        yield "fault-free", props, None
    names = sorted(MENU)
    for size in range(1, t + 1):
        for faulty in itertools.combinations(range(1, n + 1), size):
            for combo in itertools.product(names, repeat=size):
                label = ",".join(f"p{p}:{b}" for p, b in zip(faulty, combo))
                for props in vectors:
                    sched = AdversarySchedule(byzantine={p: MENU[b]() for p, b in zip(faulty, combo)},
                                              rushing=rushing, name=label)
                    yield label, props, sched


def message_multiset(e: Execution) -> list:
    """Every message handed to the network, successful or send-omitted, sorted."""
    out = []
    for b in e.behaviors:
        for f in b.fragments:
            out.extend(f.sent)
            out.extend(f.send_omitted)
    return sorted(out)


def _value_out(v: Any) -> Any:
    return [_value_out(x) for x in v] if isinstance(v, tuple) else v


def agreement_conformance(prop: ValidityProperty, agreement: Optional[Algorithm] = None,
                          cases: Optional[list] = None) -> dict:
    """Run the agreement over the corpus; every correct decision must be shared, admissible
    for the realized configuration, and inside the intersection over what it contains."""
    from .validity import realized_configuration

    alg = agreement if agreement is not None else val_agreement_from_ic(prop)
    cases = cases if cases is not None else adversary_corpus(prop.n, prop.t, prop.inputs)
    runs, failures = [], 0
    for label, props, sched in cases:
        e = run(alg, list(props), sched, horizon_cap(), until_decided=0)
        c = realized_configuration(e)
        dec = decisions(e)
        vals = {dec[p] for p in e.correct}
        problems = []
        if None in vals:
            problems.append("Termination")
        if len(vals - {None}) > 1:
            problems.append("Agreement")
        allowed, admissible = prop.intersection(c), prop.admissible(c)
        if any(v is not None and v not in admissible for v in vals):
            problems.append("Validity")
        if any(v is not None and v not in allowed for v in vals):
            problems.append("Containment")
        failures += bool(problems)
        runs.append({
            "case": label, "proposals": [_value_out(v) for v in props], "faulty": sorted(e.faulty),
            "decisions": sorted({str(_value_out(v)) for v in vals}), "problems": problems,
        })
    return {"algorithm": alg.name, "property": prop.name, "runs": runs, "failures": failures}


def weak_conformance(agreement: Algorithm, prop: ValidityProperty, cases: Optional[list] = None) -> dict:
    """Derive anchors, wrap, and compare the wrapped runs with the underlying ones."""
    anchors = derive_anchors(agreement, prop)
    weak = weak_from_agreement(agreement, anchors)
    n, t = agreement.n, agreement.t
    if cases is None:
        cases = [(f"all{b}", (b,) * n, None) for b in (0, 1)]
        cases += [c for c in adversary_corpus(n, t, (0, 1), configs=4) if c[2] is not None]
    runs, failures = [], 0
    for label, bits, sched in cases:
        e = run(weak, list(bits), sched, horizon_cap(), until_decided=0)
        byz = set(sched.byzantine) if sched is not None else set()
        inner = [bits[p - 1] if p in byz else weak.proposal_map(p, bits[p - 1]) for p in range(1, n + 1)]
        u = run(agreement, inner, sched, e.horizon)
        problems = []
        if message_multiset(e) != message_multiset(u):
            problems.append("message multisets differ")
        dec = decisions(e)
        vals = {dec[p] for p in e.correct}
        if None in vals or len(vals) != 1:
            problems.append(f"correct decisions {sorted(map(str, vals))}")
        if not e.faulty and len(set(bits)) == 1 and vals != {bits[0]}:
            problems.append("Weak Validity")
        failures += bool(problems)
        runs.append({"case": label, "proposals": list(bits), "faulty": sorted(e.faulty),
                     "decisions": sorted(map(str, vals)), "problems": problems})
    return {"algorithm": weak.name, "via": agreement.name, "property": prop.name,
            "anchors": anchors.to_json(), "runs": runs, "failures": failures}
