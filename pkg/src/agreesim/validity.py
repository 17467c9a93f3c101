"""Input configurations, validity properties, containment and the containment condition.

An input configuration assigns proposals to between n - t and n processes
(the ones that are correct). A validity property maps each configuration to
its nonempty set of admissible decisions. Everything here is exact
enumeration, refused above ``ENUMERATION_BOUND`` configurations.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import comb
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Sequence

from .codec import freeze, value_key
from .model import Execution

ENUMERATION_BOUND = 10**7


class EnumerationTooLarge(ValueError):
    pass


class PropertyError(ValueError):
    pass


@dataclass(frozen=True)
class InputConfiguration:
    """``entries[i-1]`` is process i's proposal, or None if i is not in the configuration."""

    entries: tuple

    @classmethod
    def from_pairs(cls, n: int, pairs: Mapping[int, Any]) -> "InputConfiguration":
        entries = [None] * n
        for pid, v in pairs.items():
            if not 1 <= pid <= n:
                raise PropertyError(f"process {pid} outside 1..{n}")
            if v is None:
                raise PropertyError("proposal values must not be None")
            entries[pid - 1] = v
        return cls(tuple(entries))

    @classmethod
    def full(cls, values: Sequence[Any]) -> "InputConfiguration":
        return cls(tuple(values))

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def members(self) -> frozenset:
        return frozenset(i + 1 for i, v in enumerate(self.entries) if v is not None)

    @property
    def size(self) -> int:
        return sum(v is not None for v in self.entries)

    def is_full(self) -> bool:
        return all(v is not None for v in self.entries)

    def __getitem__(self, pid: int) -> Any:
        return self.entries[pid - 1]

    def pairs(self) -> tuple:
        return tuple((i + 1, v) for i, v in enumerate(self.entries) if v is not None)

    def restrict(self, pids: Iterable[int]) -> "InputConfiguration":
        keep = set(pids)
        return InputConfiguration(tuple(v if i + 1 in keep else None for i, v in enumerate(self.entries)))

    def __str__(self) -> str:
        return "[" + ", ".join(f"(p{p}, {v})" for p, v in self.pairs()) + "]"

    def to_json(self) -> dict:
        return {str(p): _jsonable(v) for p, v in self.pairs()}


def _jsonable(v: Any) -> Any:
    return [_jsonable(x) for x in v] if isinstance(v, tuple) else v


def contains(c1: InputConfiguration, c2: InputConfiguration) -> bool:
    """c1 ⊒ c2: every process of c2 appears in c1 with the same proposal."""
    if c1.n != c2.n:
        raise PropertyError("configurations from different systems")
    return all(b is None or a == b for a, b in zip(c1.entries, c2.entries))


def count_configurations(n: int, t: int, k: int) -> int:
    """|I| for n processes, at most t missing, k proposal values."""
    return sum(comb(n, s) * k**s for s in range(n - t, n + 1))


def configurations(n: int, t: int, values: Sequence[Any]) -> Iterator[InputConfiguration]:
    """All configurations: larger ones first, then process sets and values lexicographically."""
    total = count_configurations(n, t, len(values))
    if total > ENUMERATION_BOUND:
        raise EnumerationTooLarge(f"{total} configurations exceed {ENUMERATION_BOUND}")
    for size in range(n, n - t - 1, -1):
        for pids in itertools.combinations(range(1, n + 1), size):
            for vals in itertools.product(values, repeat=size):
                entries = [None] * n
                for p, v in zip(pids, vals):
                    entries[p - 1] = v
                yield InputConfiguration(tuple(entries))


def containment_set(c: InputConfiguration, t: int) -> list[InputConfiguration]:
    """Cnt(c): the configurations with at least n - t processes that c contains, c first."""
    n = c.n
    if c.size < n - t:
        raise PropertyError(f"{c} has fewer than n - t = {n - t} processes")
    total = sum(comb(c.size, s) for s in range(n - t, c.size + 1))
    if total > ENUMERATION_BOUND:
        raise EnumerationTooLarge(f"|Cnt(c)| = {total} exceeds {ENUMERATION_BOUND}")
    members = sorted(c.members)
    out = []
    for size in range(c.size, n - t - 1, -1):
        for pids in itertools.combinations(members, size):
            out.append(c.restrict(pids))
    return out


def smallest(values: Iterable[Any]) -> Any:
    return min(values, key=value_key)


class ValidityProperty:
    """A validity property over a fixed (n, t) and finite value domains.

    Subclasses implement ``admissible``. ``intersection`` is the set of
    values admissible for every configuration contained in ``c``; builtins
    override it with a closed form that the tests compare to enumeration.
    """

    name = "property"

    def __init__(self, n: int, t: int, inputs: Sequence[Any]) -> None:
        if not 0 <= t < n:
            raise PropertyError(f"need 0 <= t < n, got n={n}, t={t}")
        if not inputs or len(set(inputs)) != len(inputs):
            raise PropertyError("V_I must be a nonempty list of distinct values")
        self.n, self.t = n, t
        self.inputs = tuple(sorted(inputs, key=value_key))

    # --- to override
    def admissible(self, c: InputConfiguration) -> frozenset:
        raise NotImplementedError

    def outputs(self) -> tuple:
        raise NotImplementedError

    def gamma_rule(self) -> Optional[Callable[[InputConfiguration], Any]]:
        """Closed-form choice of Γ for contexts too large to enumerate, if known."""
        return None

    # --- generic
    def configurations(self) -> Iterator[InputConfiguration]:
        return configurations(self.n, self.t, self.inputs)

    def count(self) -> int:
        return count_configurations(self.n, self.t, len(self.inputs))

    def check_context(self, c: InputConfiguration) -> None:
        if c.n != self.n or c.size < self.n - self.t:
            raise PropertyError(f"{c} is not an input configuration for n={self.n}, t={self.t}")
        if any(v is not None and v not in self.inputs for v in c.entries):
            raise PropertyError(f"{c} uses a value outside V_I")

    def intersection(self, c: InputConfiguration) -> frozenset:
        return enumerated_intersection(self, c)

    def first_excluding(self, value: Any) -> Optional[InputConfiguration]:
        """First configuration in enumeration order for which ``value`` is not admissible."""
        for c in self.configurations():
            if value not in self.admissible(c):
                return c
        return None

    def __repr__(self) -> str:
        return f"<{self.name} n={self.n} t={self.t} V_I={list(self.inputs)}>"


def enumerated_intersection(prop: ValidityProperty, c: InputConfiguration) -> frozenset:
    acc: Optional[frozenset] = None
    for sub in containment_set(c, prop.t):
        adm = prop.admissible(sub)
        acc = adm if acc is None else acc & adm
        if not acc:
            break
    return acc or frozenset()


def _count(c: InputConfiguration, v: Any) -> int:
    return sum(x == v for x in c.entries)


class WeakValidity(ValidityProperty):
    """If all processes are correct and propose v, only v may be decided."""

    name = "weak"

    def outputs(self):
        return self.inputs

    def admissible(self, c):
        vals = set(c.entries)
        if c.is_full() and len(vals) == 1:
            return frozenset(vals)
        return frozenset(self.inputs)

    def intersection(self, c):
        return self.admissible(c)

    def gamma_rule(self):
        return lambda c: smallest(self.admissible(c))

    def first_excluding(self, value):
        for u in self.inputs:
            if u != value:
                return InputConfiguration.full([u] * self.n)
        return None


class StrongValidity(ValidityProperty):
    """If all correct processes propose v, only v may be decided."""

    name = "strong"

    def outputs(self):
        return self.inputs

    def admissible(self, c):
        vals = {v for v in c.entries if v is not None}
        return frozenset(vals) if len(vals) == 1 else frozenset(self.inputs)

    def intersection(self, c):
        # a unanimous sub-configuration on v exists iff at least n - t members propose v
        forced = {v for v in self.inputs if _count(c, v) >= self.n - self.t}
        if len(forced) > 1:
            return frozenset()
        return frozenset(forced) if forced else frozenset(self.inputs)

    def gamma_rule(self):
        if self.n <= 2 * self.t:
            return None
        return lambda c: smallest(self.intersection(c))

    def first_excluding(self, value):
        for u in self.inputs:
            if u != value:
                return InputConfiguration.full([u] * self.n)
        return None


class ICValidity(ValidityProperty):
    """Decide a full vector that agrees with every correct process's proposal."""

    name = "ic"

    def outputs(self):
        total = len(self.inputs) ** self.n
        if total > ENUMERATION_BOUND:
            raise EnumerationTooLarge(f"{total} output vectors")
        return tuple(itertools.product(self.inputs, repeat=self.n))

    def admissible(self, c):
        slots = [(v,) if v is not None else self.inputs for v in c.entries]
        return frozenset(itertools.product(*slots))

    def intersection(self, c):
        return self.admissible(c)

    def gamma_rule(self):
        lo = self.inputs[0]
        return lambda c: tuple(lo if v is None else v for v in c.entries)

    def first_excluding(self, value):
        lo = self.inputs[0]
        base = [lo] * self.n
        if tuple(base) != tuple(value):
            return InputConfiguration.full(base)
        if len(self.inputs) < 2:
            return None
        base[-1] = self.inputs[1]
        return InputConfiguration.full(base)


class ConstantValidity(ValidityProperty):
    """Every output is always admissible: the trivial property."""

    name = "constant"

    def __init__(self, n, t, inputs, outputs: Optional[Sequence[Any]] = None):
        super().__init__(n, t, inputs)
        self._outputs = tuple(sorted(outputs if outputs is not None else self.inputs, key=value_key))

    def outputs(self):
        return self._outputs

    def admissible(self, c):
        return frozenset(self._outputs)

    def intersection(self, c):
        return frozenset(self._outputs)

    def gamma_rule(self):
        v = self._outputs[0]
        return lambda c: v

    def first_excluding(self, value):
        return None if value in self._outputs else InputConfiguration.full([self.inputs[0]] * self.n)


class TableValidity(ValidityProperty):
    """A default admissible set with per-configuration overrides."""

    name = "table"

    def __init__(self, n, t, inputs, outputs, default, overrides: Mapping[InputConfiguration, Iterable[Any]], name="table"):
        super().__init__(n, t, inputs)
        self.name = name
        self._outputs = tuple(sorted(outputs, key=value_key))
        out_set = set(self._outputs)
        self.default = frozenset(default)
        if not self.default or not self.default <= out_set:
            raise PropertyError("default must be a nonempty subset of V_O")
        self.overrides = {}
        for c, adm in overrides.items():
            self.check_context(c)
            adm = frozenset(adm)
            if not adm or not adm <= out_set:
                raise PropertyError(f"admissible set for {c} must be a nonempty subset of V_O")
            self.overrides[c] = adm

    def outputs(self):
        return self._outputs

    def admissible(self, c):
        return self.overrides.get(c, self.default)


BUILTINS = {"weak": WeakValidity, "strong": StrongValidity, "ic": ICValidity, "constant": ConstantValidity}


def builtin(name: str, n: int, t: int, values: Sequence[Any] = (0, 1)) -> ValidityProperty:
    try:
        cls = BUILTINS[name]
    except KeyError:
        raise PropertyError(f"unknown builtin property {name!r}; choose from {sorted(BUILTINS)}") from None
    return cls(n, t, values)


def property_from_json(doc: Mapping) -> TableValidity:
    try:
        n, t = int(doc["n"]), int(doc["t"])
        inputs = [freeze(v) for v in doc["V_I"]]
        outputs = [freeze(v) for v in doc["V_O"]]
        default = [freeze(v) for v in doc.get("default", outputs)]
        overrides = {}
        for o in doc.get("overrides", []):
            c = InputConfiguration.from_pairs(n, {int(p): freeze(v) for p, v in o["config"].items()})
            if c in overrides:
                raise PropertyError(f"configuration {c} overridden twice")
            overrides[c] = [freeze(v) for v in o["admissible"]]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, PropertyError):
            raise
        raise PropertyError(f"malformed property file: {exc!r}") from exc
    return TableValidity(n, t, inputs, outputs, default, overrides, name=str(doc.get("name", "table")))


def load_property(source: str, n: Optional[int] = None, t: Optional[int] = None) -> ValidityProperty:
    """``builtin:<name>`` (needs n and t) or a path to a property JSON file."""
    if source.startswith("builtin:"):
        if n is None or t is None:
            raise PropertyError("builtin properties need --n and --t")
        return builtin(source.split(":", 1)[1], n, t)
    try:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PropertyError(f"cannot read property file {source}: {exc}") from exc
    prop = property_from_json(doc)
    if (n is not None and n != prop.n) or (t is not None and t != prop.t):
        raise PropertyError(f"file declares n={prop.n}, t={prop.t}")
    return prop


class GammaTable:
    """Γ: a decision for every configuration, enumerated or given by a rule."""

    def __init__(self, selection: Optional[Mapping[InputConfiguration, Any]] = None,
                 rule: Optional[Callable[[InputConfiguration], Any]] = None) -> None:
        if selection is None and rule is None:
            raise ValueError("need a selection table or a rule")
        self.selection = dict(selection or {})
        self.rule = rule

    def __call__(self, c: InputConfiguration) -> Any:
        if c in self.selection:
            return self.selection[c]
        if self.rule is None:
            raise KeyError(f"Γ undefined on {c}")
        return self.rule(c)

    def __len__(self) -> int:
        return len(self.selection)


@dataclass(frozen=True)
class CCWitness:
    """A configuration whose contained configurations share no admissible value."""

    config: InputConfiguration
    conflicting: tuple  # configurations in Cnt(config) with jointly empty admissible sets

    def to_json(self, prop: ValidityProperty) -> dict:
        return {
            "config": self.config.to_json(),
            "conflicting": [
                {"config": c.to_json(), "admissible": sorted((_jsonable(v) for v in prop.admissible(c)), key=json.dumps)}
                for c in self.conflicting
            ],
        }


def _conflict(prop: ValidityProperty, c: InputConfiguration) -> tuple:
    subs = containment_set(c, prop.t)
    adm = [prop.admissible(s) for s in subs]
    for i, j in itertools.combinations(range(len(subs)), 2):
        if not adm[i] & adm[j]:
            return (subs[i], subs[j])
    chosen, acc = [], None
    for s, a in zip(subs, adm):
        nxt = a if acc is None else acc & a
        if acc is None or nxt != acc:
            chosen.append(s)
        acc = nxt
        if not acc:
            break
    return tuple(chosen)


def check_cc(prop: ValidityProperty) -> tuple[bool, Any]:
    """(True, Γ) with Γ the smallest common admissible value, or (False, CCWitness)."""
    selection = {}
    for c in prop.configurations():
        common = enumerated_intersection(prop, c)
        if not common:
            return False, CCWitness(c, _conflict(prop, c))
        selection[c] = smallest(common)
    return True, GammaTable(selection)


def check_trivial(prop: ValidityProperty) -> tuple[bool, Any]:
    """(True, v) if some v is admissible for every configuration, else (False, None)."""
    acc: Optional[frozenset] = None
    for c in prop.configurations():
        a = prop.admissible(c)
        acc = a if acc is None else acc & a
        if not acc:
            return False, None
    return True, smallest(acc)


SOLVABLE = "solvable"
TRIVIAL = "trivially-solvable"
UNSOLVABLE_CC = "unsolvable-CC"
UNSOLVABLE_RESILIENCE = "unsolvable-resilience"


@dataclass(frozen=True)
class Classification:
    verdict: str
    cc_holds: Optional[bool]
    witness: Optional[CCWitness] = None
    trivial_value: Any = None


def classify_solvability(prop: ValidityProperty, n: int, t: int, authenticated: bool) -> Classification:
    """Authenticated: solvable iff CC. Unauthenticated: iff CC and n > 3t.

    Trivial properties are solvable without communication in either setting.
    """
    if (n, t) != (prop.n, prop.t):
        raise PropertyError(f"property is defined for n={prop.n}, t={prop.t}")
    trivial, v = check_trivial(prop)
    if trivial:
        return Classification(TRIVIAL, True, trivial_value=v)
    holds, extra = check_cc(prop)
    if not holds:
        return Classification(UNSOLVABLE_CC, False, extra)
    if not authenticated and n <= 3 * t:
        return Classification(UNSOLVABLE_RESILIENCE, True)
    return Classification(SOLVABLE, True)


def realized_configuration(e: Execution) -> InputConfiguration:
    """The configuration formed by the correct processes' proposals."""
    props = e.proposals()
    return InputConfiguration(tuple(props[p - 1] if p in e.correct else None for p in e.processes))


def decisions_within_containment(prop: ValidityProperty, e: Execution) -> list[tuple[int, Any]]:
    """Correct decisions outside ⋂ val over Cnt(c) for the realized c; empty means conforming."""
    from .engine import decisions

    c = realized_configuration(e)
    allowed = prop.intersection(c)
    dec = decisions(e)
    return [(p, dec[p]) for p in sorted(e.correct) if dec[p] is not None and dec[p] not in allowed]
