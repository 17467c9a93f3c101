"""Algorithm identifiers accepted on the command line."""

from __future__ import annotations

import re
from functools import lru_cache

from .algorithms import FloodEcho, StarLeader, constant_zero, silent_default
from .engine import Algorithm
from .reductions import (
    AnchorSet,
    derive_anchors,
    interactive_consistency,
    val_agreement_from_ic,
    weak_from_agreement,
)
from .validity import builtin


class UnknownAlgorithm(ValueError):
    pass


FIXED = {
    "silent-default": silent_default,
    "constant-0": constant_zero,
    "star-leader": StarLeader,
    "ds-ic": interactive_consistency,
}


def agreement_for(prop_name: str, n: int, t: int) -> Algorithm:
    """Agreement for a builtin binary property, built from interactive consistency."""
    return val_agreement_from_ic(builtin(prop_name, n, t))


@lru_cache(maxsize=32)
def reference_anchors(prop_name: str, n: int, t: int) -> AnchorSet:
    return derive_anchors(agreement_for(prop_name, n, t), builtin(prop_name, n, t))


def reference_weak(n: int, t: int, via: str = "weak") -> Algorithm:
    """Weak consensus from a builtin property's agreement over interactive consistency."""
    alg = weak_from_agreement(agreement_for(via, n, t), reference_anchors(via, n, t))
    alg.name = "ref-weak" if via == "weak" else f"ref-weak[{via}]"
    return alg


def names() -> list[str]:
    return sorted(FIXED) + ["flood-echo-<k>", "ref-weak", "agree-<weak|strong|ic|constant>"]


def build_algorithm(algo_id: str, n: int, t: int) -> Algorithm:
    if algo_id in FIXED:
        return FIXED[algo_id](n, t)
    if algo_id == "ref-weak":
        return reference_weak(n, t)
    m = re.fullmatch(r"flood-echo-(\d+)", algo_id)
    if m:
        return FloodEcho(n, t, int(m.group(1)))
    m = re.fullmatch(r"agree-(weak|strong|ic|constant)", algo_id)
    if m:
        return agreement_for(m.group(1), n, t)
    raise UnknownAlgorithm(f"unknown algorithm {algo_id!r}; known: {', '.join(names())}")
