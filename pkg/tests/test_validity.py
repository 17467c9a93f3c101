import itertools
import json
from math import comb

import pytest
from hypothesis import given, settings, strategies as st

from agreesim.validity import (
    ENUMERATION_BOUND,
    SOLVABLE,
    TRIVIAL,
    UNSOLVABLE_CC,
    UNSOLVABLE_RESILIENCE,
    ConstantValidity,
    EnumerationTooLarge,
    InputConfiguration,
    PropertyError,
    ValidityProperty,
    builtin,
    check_cc,
    check_trivial,
    classify_solvability,
    configurations,
    containment_set,
    contains,
    count_configurations,
    enumerated_intersection,
    load_property,
    property_from_json,
)

IC = InputConfiguration


def c(n, **pairs):
    return IC.from_pairs(n, {int(k[1:]): v for k, v in pairs.items()})


def test_containment_examples():
    full = c(3, p1="v1", p2="v2", p3="v3")
    assert contains(full, c(3, p1="v1", p3="v3"))
    assert not contains(full, c(3, p1="v1", p3="v3x"))
    assert contains(full, full)
    assert not contains(c(3, p1="v1", p3="v3"), full)


def test_containment_set_sizes():
    assert containment_set(c(4, p1=0, p2=1, p3=0), 1) == [c(4, p1=0, p2=1, p3=0)]
    # itself plus the drop-one variants, then also the drop-two variants
    assert len(containment_set(IC.full([0, 1, 0, 1]), 1)) == 1 + comb(4, 1)
    assert len(containment_set(IC.full([0, 1, 0, 1]), 2)) == 1 + comb(4, 1) + comb(4, 2)
    cnt = containment_set(IC.full([0, 1, 1]), 1)
    assert cnt[0] == IC.full([0, 1, 1])


def test_configurations_cover_every_partial_assignment_once():
    confs = list(configurations(4, 2, (0, 1)))
    assert len(confs) == len(set(confs)) == count_configurations(4, 2, 2) == 16 + 4 * 8 + 6 * 4
    assert confs[0] == IC.full([0, 0, 0, 0])


def test_enumeration_refuses_large_contexts():
    with pytest.raises(EnumerationTooLarge):
        next(configurations(40, 5, (0, 1)))
    assert count_configurations(40, 5, 2) > ENUMERATION_BOUND


def test_too_small_configuration_is_rejected():
    with pytest.raises(PropertyError):
        containment_set(c(4, p1=0), 1)


def _brute_cc(prop):
    """Independent CC oracle: Cnt via pairwise containment over all of I."""
    confs = list(configurations(prop.n, prop.t, prop.inputs))
    for x in confs:
        common = set(prop.outputs())
        for y in confs:
            if contains(x, y):
                common &= prop.admissible(y)
        if not common:
            return False
    return True


def _contexts():
    for n in range(1, 6):
        for t in range(n):
            for name in ("weak", "strong", "ic", "constant"):
                yield builtin(name, n, t)


def test_cc_agrees_with_brute_force_on_all_small_contexts():
    for prop in _contexts():
        assert check_cc(prop)[0] == _brute_cc(prop), prop


def test_strong_consensus_two_of_four_fails_with_split_witness():
    ok, w = check_cc(builtin("strong", 4, 2))
    assert not ok
    prop = builtin("strong", 4, 2)
    assert w.config == IC.full([0, 0, 1, 1])
    a, b = w.conflicting
    assert {a, b} == {c(4, p1=0, p2=0), c(4, p3=1, p4=1)}
    assert prop.admissible(a) == {0} and prop.admissible(b) == {1}


def test_strong_consensus_five_two_holds():
    ok, gamma = check_cc(builtin("strong", 5, 2))
    assert ok
    assert gamma(IC.full([0, 0, 0, 1, 1])) == 0
    assert gamma(IC.full([1, 1, 1, 0, 0])) == 1


def test_weak_validity_holds_and_is_nontrivial():
    prop = builtin("weak", 4, 1)
    ok, gamma = check_cc(prop)
    assert ok and gamma(IC.full([1] * 4)) == 1 and gamma(IC.full([0, 1, 1, 1])) == 0
    assert check_trivial(prop) == (False, None)


def test_constant_property_gamma_is_constant():
    prop = ConstantValidity(4, 1, (0, 1), outputs=("z", "y"))
    ok, gamma = check_cc(prop)
    assert ok and {gamma(x) for x in prop.configurations()} == {"y"}
    assert check_trivial(prop) == (True, "y")


def test_ic_validity_is_nontrivial_and_gamma_fills_with_smallest():
    prop = builtin("ic", 4, 1)
    assert check_trivial(prop) == (False, None)
    ok, gamma = check_cc(prop)
    assert ok and gamma(c(4, p1=1, p2=1, p4=1)) == (1, 1, 0, 1)


def test_gamma_selection_lies_in_the_intersection():
    for prop in _contexts():
        ok, gamma = check_cc(prop)
        if not ok:
            continue
        for x in prop.configurations():
            assert gamma(x) in enumerated_intersection(prop, x)


def test_closed_forms_match_enumeration():
    for prop in _contexts():
        for x in prop.configurations():
            assert prop.intersection(x) == enumerated_intersection(prop, x), (prop, x)
        rule = prop.gamma_rule()
        if rule is not None and check_cc(prop)[0]:
            ok, gamma = check_cc(prop)
            assert all(rule(x) == gamma(x) for x in prop.configurations()), prop
        values = prop.outputs()
        for v in values[:4]:
            assert prop.first_excluding(v) == ValidityProperty.first_excluding(prop, v)


def test_classification_examples():
    assert classify_solvability(builtin("strong", 4, 2), 4, 2, True).verdict == UNSOLVABLE_CC
    assert classify_solvability(builtin("strong", 5, 2), 5, 2, True).verdict == SOLVABLE
    assert classify_solvability(builtin("weak", 4, 1), 4, 1, False).verdict == SOLVABLE
    assert classify_solvability(builtin("weak", 3, 1), 3, 1, False).verdict == UNSOLVABLE_RESILIENCE
    assert classify_solvability(builtin("weak", 3, 1), 3, 1, True).verdict == SOLVABLE
    assert classify_solvability(builtin("constant", 3, 1), 3, 1, False).verdict == TRIVIAL


def test_property_file_round_trip(tmp_path):
    doc = {
        "n": 3, "t": 1, "V_I": [0, 1], "V_O": [0, 1, 2], "default": [2],
        "overrides": [{"config": {"1": 0, "2": 0, "3": 0}, "admissible": [0]},
                      {"config": {"1": 1, "2": 1}, "admissible": [1]}],
    }
    path = tmp_path / "prop.json"
    path.write_text(json.dumps(doc))
    prop = load_property(str(path))
    assert prop.admissible(IC.full([0, 0, 0])) == {0}
    assert prop.admissible(IC.full([0, 1, 0])) == {2}
    ok, w = check_cc(prop)
    # the size-two restrictions of all-zero default to {2}, disjoint from {0}
    assert not ok and w.config == IC.full([0, 0, 0])
    assert w.conflicting == (IC.full([0, 0, 0]), c(3, p1=0, p2=0))
    assert check_cc(property_from_json({**doc, "overrides": doc["overrides"][:1]}))[0] is False


@pytest.mark.parametrize("patch", [
    {"default": []}, {"default": [7]}, {"V_I": []},
    {"overrides": [{"config": {"1": 0}, "admissible": [0]}]},
    {"overrides": [{"config": {"1": 0, "2": 0, "3": 0}, "admissible": []}]},
    {"overrides": [{"config": {"1": 5, "2": 0, "3": 0}, "admissible": [0]}]},
    {"n": "x"},
])
def test_malformed_property_files_are_rejected(patch):
    doc = {"n": 3, "t": 1, "V_I": [0, 1], "V_O": [0, 1], "default": [0, 1], "overrides": []}
    doc.update(patch)
    with pytest.raises(PropertyError):
        property_from_json(doc)


def test_builtin_needs_n_and_t():
    with pytest.raises(PropertyError):
        load_property("builtin:weak")
    with pytest.raises(PropertyError):
        load_property("builtin:nope", 3, 1)


configs4 = st.tuples(*[st.sampled_from([None, 0, 1])] * 4).filter(lambda e: sum(v is not None for v in e) >= 2)


@settings(max_examples=300)
@given(configs4, configs4, configs4)
def test_contains_is_reflexive_and_transitive(a, b, d):
    x, y, z = IC(a), IC(b), IC(d)
    assert contains(x, x)
    if contains(x, y) and contains(y, z):
        assert contains(x, z)


def test_intersection_over_cnt_lies_in_every_contained_admissible_set():
    for prop in _contexts():
        if prop.n > 4:
            continue
        for x in prop.configurations():
            inter = enumerated_intersection(prop, x)
            for y in containment_set(x, prop.t):
                assert inter <= prop.admissible(y)
