"""Independent check of a witness trace.

Works on the raw JSON document and re-derives everything from the proposals
by replaying the algorithm. It deliberately avoids the engine, the
validators and the adversary constructions so that a bug there cannot vouch
for itself; only the message type and the signature oracle are shared.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .codec import digest as state_hash
from .engine import Algorithm, ProcessContext, SignatureOracle
from .model import Message


@dataclass
class VerifierReport:
    n: int
    t: int
    faulty: int
    problems: list = field(default_factory=list)
    violations: dict = field(default_factory=dict)  # property -> processes

    @property
    def well_formed(self) -> bool:
        return not self.problems

    def exhibits(self, prop: str) -> bool:
        return prop in self.violations


def _key(m: dict) -> tuple:
    return (int(m["from"]), int(m["to"]), int(m["round"]), str(m["payload"]))


def _as_value(v):
    return tuple(_as_value(x) for x in v) if isinstance(v, list) else v


def verify_witness(doc: dict, algorithm: Algorithm) -> VerifierReport:
    h = doc["header"]
    n, t, horizon = int(h["n"]), int(h["t"]), int(h["horizon"])
    faulty = {int(p) for p in h["faulty"]}
    byz = {int(p) for p in h.get("byzantine", [])}
    rep = VerifierReport(n, t, len(faulty))
    if (algorithm.n, algorithm.t) != (n, t):
        rep.problems.append("algorithm instantiated for a different (n, t)")
        return rep
    if len(faulty) > t:
        rep.problems.append(f"{len(faulty)} faulty > t={t}")
    frags = {int(p["pid"]): p["fragments"] for p in doc["processes"]}
    if sorted(frags) != list(range(1, n + 1)):
        rep.problems.append("process list is not 1..n")
        return rep

    sent, arrived, omitted_any = set(), {}, set()
    for p, fl in frags.items():
        if len(fl) != horizon:
            rep.problems.append(f"p{p}: {len(fl)} fragments for horizon {horizon}")
        for j, fr in enumerate(fl, start=1):
            if int(fr["round"]) != j:
                rep.problems.append(f"p{p}: fragment {j} labelled round {fr['round']}")
            s = [_key(m) for m in fr["sent"]]
            so = [_key(m) for m in fr["send_omitted"]]
            r = [_key(m) for m in fr["received"]]
            ro = [_key(m) for m in fr["receive_omitted"]]
            for k in s + so:
                if k[0] != p or k[2] != j or k[1] == p:
                    rep.problems.append(f"p{p} r{j}: bad outgoing {k[:3]}")
            for k in r + ro:
                if k[1] != p or k[2] != j or k[0] == p:
                    rep.problems.append(f"p{p} r{j}: bad incoming {k[:3]}")
            outs = [k[1] for k in s + so]
            ins = [k[0] for k in r + ro]
            if len(outs) != len(set(outs)):
                rep.problems.append(f"p{p} r{j}: two outgoing messages to one receiver")
            if len(ins) != len(set(ins)):
                rep.problems.append(f"p{p} r{j}: two incoming messages from one sender")
            sent.update(s)
            for k in r + ro:
                arrived[k] = p
            if so or ro:
                omitted_any.add(p)
    for k in sent:
        if k not in arrived:
            rep.problems.append(f"sent message {k[:3]} never reached its receiver")
    for k in arrived:
        if k not in sent:
            rep.problems.append(f"message {k[:3]} arrived but was never sent")
    for p in omitted_any - faulty:
        rep.problems.append(f"p{p} omits but is marked correct")

    oracle = SignatureOracle() if algorithm.authenticated else None
    for p, fl in frags.items():
        if p in byz or not fl:
            continue
        _replay(p, fl, algorithm, ProcessContext(p, n, t, oracle), rep)

    correct = [p for p in range(1, n + 1) if p not in faulty]
    dec = {p: _as_value(frags[p][-1]["state"]["decision"]) for p in correct}
    props = {p: _as_value(frags[p][0]["state"]["proposal"]) for p in range(1, n + 1)}
    undecided = [p for p in correct if dec[p] is None]
    if undecided:
        rep.violations["Termination"] = undecided
    values = {}
    for p in correct:
        if dec[p] is not None:
            values.setdefault(dec[p], []).append(p)
    if len(values) > 1:
        rep.violations["Agreement"] = sorted(min(ps) for ps in values.values())
    if not faulty and len(set(props.values())) == 1:
        v = props[1]
        wrong = [p for p in correct if dec[p] is not None and dec[p] != v]
        if wrong:
            rep.violations["Weak Validity"] = wrong
    return rep


def _replay(p: int, fl: list, alg: Algorithm, ctx: ProcessContext, rep: VerifierReport) -> None:
    proposal = _as_value(fl[0]["state"]["proposal"])
    try:
        state, sends = alg.start(ctx, proposal)
    except Exception as exc:  # noqa: BLE001 - any failure is a finding
        rep.problems.append(f"p{p}: initial transition raised {exc!r}")
        return
    for j, fr in enumerate(fl, start=1):
        st = fr["state"]
        if (state.proposal, state.decision) != (_as_value(st["proposal"]), _as_value(st["decision"])):
            rep.problems.append(f"p{p} r{j}: state head differs from replay")
            return
        if state_hash(state.internal) != st["internal_hash"]:
            rep.problems.append(f"p{p} r{j}: internal state differs from replay")
            return
        mine = {(p, int(q), j, bytes(pl).hex()) for q, pl in sends}
        recorded = {_key(m) for m in fr["sent"]} | {_key(m) for m in fr["send_omitted"]}
        if mine != recorded:
            rep.problems.append(f"p{p} r{j}: sends differ from replay")
            return
        if j == len(fl):
            return
        received = frozenset(
            Message(int(m["from"]), int(m["to"]), int(m["round"]), bytes.fromhex(m["payload"])) for m in fr["received"]
        )
        try:
            state, sends = alg.step(ctx, state, received)
        except Exception as exc:  # noqa: BLE001
            rep.problems.append(f"p{p} r{j}: transition raised {exc!r}")
            return
