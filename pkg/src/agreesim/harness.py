"""Replays the quadratic lower-bound argument against a concrete candidate.

Given a weak-consensus candidate, the harness runs the fully correct
executions, the isolation family (all processes propose the same bit, one
group of t/4 processes isolated from round k), and the merges of adjacent
family members. Under the t^2/32 message budget one of these steps must
expose a Termination, Agreement or Weak Validity violation among correct
processes; otherwise the candidate is reported as over budget.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

from .adversary import Partition, canonical_partition, check_isolated, merge, scenario, swap_omission
from .engine import Algorithm, decision_rounds, decisions, message_complexity, run
from .model import Execution

log = logging.getLogger(__name__)

DEFAULT_HORIZON_CAP = 10_000


class HarnessInconsistency(RuntimeError):
    """The argument's chain closed without a verdict; some earlier check was skipped."""


def horizon_cap() -> int:
    raw = os.environ.get("SIM_HORIZON_CAP", "")
    try:
        cap = int(raw) if raw else DEFAULT_HORIZON_CAP
    except ValueError:
        raise ValueError(f"SIM_HORIZON_CAP must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError("SIM_HORIZON_CAP must be positive")
    return cap


def under_budget(count: int, t: int) -> bool:
    """count < t^2/32, in exact integer arithmetic."""
    return 32 * count < t * t


def check_parameters(n: int, t: int) -> None:
    if t < 8 or t % 8 or t >= n:
        raise ValueError(f"need t >= 8, 8 | t and t < n; got n={n}, t={t}")


@dataclass
class Verdict:
    kind: str  # "violation" | "budget-exceeded"
    property: Optional[str] = None
    processes: tuple = ()
    witness: Optional[Execution] = None
    probe: Optional[str] = None
    max_count: Optional[int] = None
    budget: Optional[float] = None
    counts: dict = field(default_factory=dict)
    note: str = ""

    def to_json(self) -> dict:
        from .trace import to_document

        return {
            "kind": self.kind,
            "property": self.property,
            "processes": list(self.processes),
            "probe": self.probe,
            "max_count": self.max_count,
            "budget": self.budget,
            "counts": dict(self.counts),
            "note": self.note,
            "witness": None if self.witness is None else to_document(self.witness),
        }


def correct_violation(e: Execution) -> Optional[tuple[str, tuple]]:
    """First property violated among correct processes: Weak Validity, Termination, then Agreement."""
    dec = decisions(e)
    correct = sorted(e.correct)
    if not correct:
        return None
    props = e.proposals()
    if not e.faulty and len(set(props)) == 1:
        wrong = [p for p in correct if dec[p] is not None and dec[p] != props[0]]
        if wrong:
            return "Weak Validity", (wrong[0],)
    undecided = [p for p in correct if dec[p] is None]
    if undecided:
        return "Termination", (undecided[0],)
    first = correct[0]
    other = next((q for q in correct if dec[q] != dec[first]), None)
    if other is not None:
        return "Agreement", (first, other)
    return None


def group_decision(e: Execution, group) -> Any:
    """The common decision of ``group``; callers have already ruled out disagreement."""
    dec = decisions(e)
    vals = {dec[p] for p in group}
    return vals.pop() if len(vals) == 1 else None


@dataclass
class DecisionRound:
    r_max: Optional[int]
    execution: Execution
    verdict: Optional[Verdict] = None


def find_decision_round(candidate: Algorithm, n: int, t: int, bit: int = 0) -> DecisionRound:
    """Run the fully correct execution where everybody proposes ``bit``.

    ``r_max`` is the first round whose starting states are all decided. A
    wrong decision or a missing one by the horizon cap becomes a verdict.
    """
    check_parameters(n, t)
    if (candidate.n, candidate.t) != (n, t):
        raise ValueError("candidate was built for a different (n, t)")
    e = scenario_fully_correct(candidate, bit)
    found = correct_violation(e)
    if found:
        prop, procs = found
        v = Verdict("violation", prop, procs, e, probe=e.tag.label() if e.tag else f"E{bit}")
        return DecisionRound(None, e, v)
    return DecisionRound(max(decision_rounds(e).values()), e)


def scenario_fully_correct(candidate: Algorithm, bit: int) -> Execution:
    from .model import ScenarioTag

    return run(candidate, [bit] * candidate.n, None, horizon_cap(), until_decided=2, tag=ScenarioTag(bit))


@dataclass
class MajorityOutcome:
    status: str  # ok | violation | not-applicable
    witness: Optional[Execution] = None
    property: Optional[str] = None
    processes: tuple = ()
    detail: str = ""


def majority_check(e: Execution, partition: tuple, k: int) -> MajorityOutcome:
    """Either a strict majority of Y decides X's common bit, or a witness.

    ``partition`` is (X, Y, Z) with Y isolated from round ``k``, |Y| = t/4 and
    |Z| <= t/4. When the majority fails, the smallest member p of Y that
    receive-omitted fewer than t/2 messages from X and did not decide X's
    bit is made correct by swap_omission; some X member that never sent to
    p across the cut stays correct and decided X's bit.
    """
    x, y, z = (frozenset(s) for s in partition)
    t = e.t
    if len(y) != t // 4 or len(z) > t // 4 or t % 4:
        raise ValueError("partition sizes must be |Y| = t/4 and |Z| <= t/4")
    if x & y or x & z or y & z or x | y | z != frozenset(e.processes):
        raise ValueError("partition must cover the processes disjointly")
    if not check_isolated(e, y, k):
        raise ValueError(f"Y is not isolated from round {k}")
    if not x <= e.correct:
        raise ValueError("X must be correct")
    bx = group_decision(e, x)
    if bx is None:
        raise ValueError("X is not unanimous")
    count = message_complexity(e)
    if not under_budget(count, t):
        return MajorityOutcome("not-applicable", detail=f"{count} correct messages >= t^2/32")
    dec = decisions(e)
    if 2 * sum(dec[p] == bx for p in y) > len(y):
        return MajorityOutcome("ok")
    omitted = {p: [m for m in e.behavior(p).all_receive_omitted() if m.sender in x] for p in y}
    cands = sorted(p for p in y if 2 * len(omitted[p]) < t and dec[p] != bx)
    if not cands:
        raise HarnessInconsistency("no lightly-cut process in Y despite the message budget")
    p = cands[0]
    w = swap_omission(e, p)
    cut = {m.sender for m in e.behavior(p).all_receive_omitted()}
    helpers = sorted(x - cut)
    if w.exceeds_fault_budget or not helpers or p in w.faulty:
        raise HarnessInconsistency(f"swap at p{p} left |F'|={len(w.faulty)}")
    prop = "Termination" if dec[p] is None else "Agreement"
    return MajorityOutcome("violation", w, prop, (p, helpers[0]), f"p{p} decides {dec[p]!r}, p{helpers[0]} decides {bx!r}")


@dataclass
class ProbeFamily:
    n: int
    t: int
    partition: Partition
    horizon: int
    r_max: int
    e0: Execution
    probes: dict = field(default_factory=dict)  # label -> Execution
    a_decisions: dict = field(default_factory=dict)  # label -> decision of A
    counts: dict = field(default_factory=dict)  # label -> correct messages
    default: Optional[int] = None
    verdict: Optional[Verdict] = None

    def series(self, bit: int = 0, group: str = "B") -> dict:
        prefix = f"E{bit}^{group}("
        return {int(k[len(prefix):-1]): v for k, v in self.a_decisions.items() if k.startswith(prefix)}


def probe_horizon(r_max: int) -> int:
    """Room for decisions made after the isolation point: twice the fault-free decision round, plus two."""
    return 2 * r_max + 2


def probe_isolated_family(candidate: Algorithm, n: int, t: int, jobs: int = 1) -> ProbeFamily:
    """Build E_0^{B(k)}, E_0^{C(k)} for k = 1..R_max and E_1^{C(1)}."""
    dr = find_decision_round(candidate, n, t)
    part = canonical_partition(n, t)
    if dr.r_max is None:
        fam = ProbeFamily(n, t, part, dr.execution.horizon, 0, dr.execution, verdict=dr.verdict)
        return fam
    horizon = probe_horizon(dr.r_max)
    fam = ProbeFamily(n, t, part, horizon, dr.r_max, dr.execution)
    fam.counts["E0"] = message_complexity(dr.execution)
    probes = [(0, "B", part.b, k) for k in range(1, dr.r_max + 1)]
    probes += [(0, "C", part.c, k) for k in range(1, dr.r_max + 1)]
    probes.append((1, "C", part.c, 1))

    def build(key):
        bit, name, group, k = key
        return scenario(candidate, bit, horizon, group, k, name)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            execs = list(pool.map(build, probes))
    else:
        execs = [build(s) for s in probes]
    for e in execs:
        label = e.tag.label()
        fam.probes[label] = e
        fam.counts[label] = message_complexity(e)
        found = correct_violation(e)
        if found and fam.verdict is None:
            fam.verdict = Verdict("violation", found[0], found[1], e, probe=label)
        fam.a_decisions[label] = group_decision(e, part.a)
    fam.default = fam.a_decisions.get("E0^B(1)")
    return fam


def first_sign_change(series: dict, default: int) -> int:
    """Smallest R with series[R] = default and series[R+1] = 1 - default."""
    for r in sorted(series):
        if series[r] == default and series.get(r + 1) == 1 - default:
            return r
    raise HarnessInconsistency(f"decision series {series} never leaves the default {default}")


def critical_round(family: ProbeFamily) -> int:
    """Round where A's decision in the scanned family leaves the default.

    With default 1 the scan is E_0^{B(k)}; with default 0 it is the mirrored
    all-1 family E_1^{C(k)}, which must already be present in ``family``.
    """
    if family.default is None:
        raise HarnessInconsistency("family has no default decision")
    if family.default == 1:
        return first_sign_change(family.series(0, "B"), 1)
    return first_sign_change(family.series(1, "C"), 0)


class _Stop(Exception):
    def __init__(self, verdict: Verdict) -> None:
        super().__init__(verdict.kind)
        self.verdict = verdict


class _Prober:
    """Builds, checks and caches probed executions for one falsification."""

    def __init__(self, candidate: Algorithm, n: int, t: int) -> None:
        self.alg = candidate
        self.n, self.t = n, t
        self.part = canonical_partition(n, t)
        self.groups = {"B": self.part.b, "C": self.part.c}
        self.counts: dict[str, int] = {}
        self.cache: dict[tuple, Execution] = {}
        self.horizon = 0
        self.r_max: dict[int, int] = {}
        self.jobs = 1
        self.raw: dict[tuple, Execution] = {}

    def prefetch(self, keys: list) -> None:
        """Run not-yet-built probes in parallel; checking them stays sequential in ``source``."""
        todo = [k for k in keys if k not in self.cache and k not in self.raw]
        if self.jobs <= 1 or len(todo) < 2:
            return

        def build(key):
            bit, name, k = key
            return scenario(self.alg, bit, self.horizon, self.groups[name], k, name)

        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            for key, e in zip(todo, pool.map(build, todo)):
                self.raw[key] = e

    def stop(self, kind: str, e: Execution, label: str, prop=None, procs=(), note="") -> None:
        v = Verdict(kind, prop, tuple(procs), e if kind == "violation" else None, label,
                    max(self.counts.values()) if self.counts else None, self.t * self.t / 32, dict(self.counts), note)
        raise _Stop(v)

    def _screen(self, e: Execution, label: str) -> None:
        self.counts[label] = message_complexity(e)
        found = correct_violation(e)
        if found:
            self.stop("violation", e, label, *found, note=f"{label} violates {found[0]} directly")
        if not under_budget(self.counts[label], self.t):
            self.stop("budget-exceeded", e, label, note=f"{label} uses {self.counts[label]} correct messages")

    def fully_correct(self, bit: int) -> Execution:
        dr = find_decision_round(self.alg, self.n, self.t, bit)
        label = f"E{bit}"
        self.counts[label] = message_complexity(dr.execution)
        if dr.verdict is not None:
            self.stop("violation", dr.execution, label, dr.verdict.property, dr.verdict.processes,
                      note=f"fault-free {label} already violates {dr.verdict.property}")
        self._screen(dr.execution, label)
        self.r_max[bit] = dr.r_max
        return dr.execution

    def source(self, bit: int, name: str, k: int) -> Execution:
        key = (bit, name, k)
        if key in self.cache:
            return self.cache[key]
        group = self.groups[name]
        e = self.raw.pop(key, None) or scenario(self.alg, bit, self.horizon, group, k, name)
        label = e.tag.label()
        log.debug("probe %s", label)
        self._screen(e, label)
        outcome = majority_check(e, (frozenset(e.processes) - group, group, frozenset()), k)
        if outcome.status == "violation":
            self.stop("violation", outcome.witness, label, outcome.property, outcome.processes,
                      note=f"isolated minority in {label}: {outcome.detail}")
        self.cache[key] = e
        return e

    def merged(self, left: Execution, right: Execution, part: Partition) -> Any:
        m = merge(left, right, part, self.alg)
        label = m.schedule
        self._screen(m, label)
        for x, y, z, k in ((part.a, part.b, part.c, left.tag.from_round), (part.a, part.c, part.b, right.tag.from_round)):
            outcome = majority_check(m, (x, y, z), k)
            if outcome.status == "violation":
                self.stop("violation", outcome.witness, label, outcome.property, outcome.processes,
                          note=f"{label}: {outcome.detail}")
        return group_decision(m, part.a)


def falsify(candidate: Algorithm, n: int, t: int, jobs: int = 1) -> Verdict:
    """Drive the whole argument and return the first verdict reached.

    ``jobs`` > 1 builds probes on a thread pool ahead of use; the verdict is
    the same as with a single job.
    """
    check_parameters(n, t)
    pr = _Prober(candidate, n, t)
    pr.jobs = jobs
    try:
        pr.fully_correct(0)
        pr.fully_correct(1)
        pr.horizon = probe_horizon(max(pr.r_max.values()))
        pr.prefetch([(0, "B", 1), (1, "C", 1)])
        b1 = pr.source(0, "B", 1)
        c1 = pr.source(1, "C", 1)
        pr.merged(b1, c1, pr.part)
        default = group_decision(b1, pr.part.a)
        if default != group_decision(c1, pr.part.a):
            raise HarnessInconsistency("default merge closed without a verdict")
        # default 1: scan E_0^{B(k)} against E_0^{C(R)}; default 0: the mirrored all-1 scan
        bit, scan, partner, part = (0, "B", "C", pr.part) if default == 1 else (1, "C", "B", pr.part.swapped())
        pr.prefetch([(bit, scan, k) for k in range(1, pr.r_max[bit] + 1)])
        series = {k: group_decision(pr.source(bit, scan, k), pr.part.a) for k in range(1, pr.r_max[bit] + 1)}
        r = first_sign_change(series, default)
        log.info("default %s, critical round %s", default, r)
        other = pr.source(bit, partner, r)
        pr.merged(pr.source(bit, scan, r), other, part)
        pr.merged(pr.source(bit, scan, r + 1), other, part)
    except _Stop as s:
        return s.verdict
    raise HarnessInconsistency("both merges closed without a verdict")
