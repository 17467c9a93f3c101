"""JSON trace files: one document per execution.

Internal states are stored as hashes; ``dump_internal=True`` also writes the
full internal state for debugging. Parsing then serializing a document gives
back the same document.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from . import codec
from .model import Behavior, Execution, Fragment, Message, ProcState, ScenarioTag, StateDigest

FORMAT = "agreesim-trace/1"


class TraceError(ValueError):
    pass


def _value_out(v: Any) -> Any:
    if isinstance(v, tuple):
        return [_value_out(x) for x in v]
    return v


def _msgs_out(msgs: frozenset) -> list:
    return [
        {"from": m.sender, "to": m.receiver, "round": m.round, "payload": m.payload.hex()}
        for m in sorted(msgs, key=lambda m: (m.round, m.sender, m.receiver, m.payload))
    ]


def _tag_out(tag: Optional[ScenarioTag]) -> Optional[dict]:
    if tag is None:
        return None
    return {
        "bit": tag.bit,
        "group": None if tag.group is None else sorted(tag.group),
        "from_round": tag.from_round,
        "name": tag.name,
    }


def to_document(e: Execution, dump_internal: bool = False) -> dict:
    processes = []
    for b in e.behaviors:
        frs = []
        for f in b.fragments:
            st = {
                "proposal": _value_out(f.state.proposal),
                "decision": _value_out(f.state.decision),
                "internal_hash": f.state.digest,
            }
            if isinstance(f.state.internal, StateDigest):
                if f.state.internal.dump is not None:
                    st["internal"] = f.state.internal.dump
            elif dump_internal:
                st["internal"] = codec.to_jsonable(f.state.internal)
            frs.append(
                {
                    "round": f.round,
                    "state": st,
                    "sent": _msgs_out(f.sent),
                    "send_omitted": _msgs_out(f.send_omitted),
                    "received": _msgs_out(f.received),
                    "receive_omitted": _msgs_out(f.receive_omitted),
                }
            )
        processes.append({"pid": b.process, "fragments": frs})
    return {
        "format": FORMAT,
        "header": {
            "n": e.n,
            "t": e.t,
            "faulty": sorted(e.faulty),
            "byzantine": sorted(e.byzantine),
            "horizon": e.horizon,
            "algorithm": e.algorithm,
            "schedule": e.schedule,
            "tag": _tag_out(e.tag),
        },
        "processes": processes,
    }


def dumps(e: Execution, dump_internal: bool = False) -> str:
    return json.dumps(to_document(e, dump_internal), sort_keys=True, separators=(",", ":"))


def _msgs_in(items: list) -> frozenset:
    return frozenset(
        Message(int(m["from"]), int(m["to"]), int(m["round"]), bytes.fromhex(m["payload"])) for m in items
    )


def from_document(doc: dict) -> Execution:
    try:
        if doc.get("format") != FORMAT:
            raise TraceError(f"unknown trace format {doc.get('format')!r}")
        h = doc["header"]
        behaviors = []
        for proc in doc["processes"]:
            pid = int(proc["pid"])
            frs = []
            for fr in proc["fragments"]:
                st = fr["state"]
                internal = StateDigest(str(st["internal_hash"]), st.get("internal"))
                state = ProcState(pid, int(fr["round"]), codec.freeze(st["proposal"]), codec.freeze(st["decision"]), internal)
                frs.append(
                    Fragment(
                        state,
                        _msgs_in(fr["sent"]),
                        _msgs_in(fr["send_omitted"]),
                        _msgs_in(fr["received"]),
                        _msgs_in(fr["receive_omitted"]),
                    )
                )
            behaviors.append(Behavior(pid, tuple(frs)))
        tag = None
        if h.get("tag") is not None:
            tg = h["tag"]
            group = None if tg["group"] is None else frozenset(tg["group"])
            tag = ScenarioTag(int(tg["bit"]), group, tg["from_round"], tg.get("name", ""))
        e = Execution(
            n=int(h["n"]),
            t=int(h["t"]),
            faulty=frozenset(int(p) for p in h["faulty"]),
            behaviors=tuple(behaviors),
            horizon=int(h["horizon"]),
            byzantine=frozenset(int(p) for p in h.get("byzantine", [])),
            algorithm=str(h["algorithm"]),
            schedule=str(h["schedule"]),
            tag=tag,
        )
    except TraceError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise TraceError(f"malformed trace: {exc!r}") from exc
    if [b.process for b in e.behaviors] != list(range(1, e.n + 1)):
        raise TraceError("processes must be listed as 1..n")
    return e


def loads(text: str) -> Execution:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceError(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise TraceError("trace must be a JSON object")
    return from_document(doc)
