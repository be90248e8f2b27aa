import random

import pytest
from hypothesis import given, settings, strategies as st

from sds.edrs import (Condition, Edrs, EdrsSyntaxError, UnknownWordError, alpha_equivalent,
                      canonical_edrs, contains, embeddings, format_edrs, parse_edrs,
                      sentence_to_edrs)
from sds.kb import bundled_kb


def test_parse_and_format_round_trip():
    d = parse_edrs("drs([e,x],[sleep(e), bat(x), Theme(e,x), !flies(x)])")
    assert d.referents == frozenset({"e", "x"})
    assert Condition("flies", ("x",), False) in d.conditions
    assert parse_edrs(format_edrs(d)) == canonical_edrs(d)


@pytest.mark.parametrize("text, needle", [
    ("drs([x],[bat(y)])", "undeclared"),
    ("drs([x],[bat(x)", "expected"),
    ("drs([x,y],[bat(x), bat(x,y)])", "arity"),
    ("drs([x],[bat(x,x,x)])", None),
])
def test_parse_errors(text, needle):
    with pytest.raises(EdrsSyntaxError) as e:
        parse_edrs(text)
    if needle:
        assert needle in str(e.value)


def test_containment_is_an_injective_mapping():
    big = parse_edrs("drs([a,b,c],[hold(a),player(b),bat(c),Agent(a,b),Theme(a,c)])")
    small = parse_edrs("drs([e,y],[hold(e),bat(y),Theme(e,y)])")
    assert contains(small, big) == {"e": "a", "y": "c"}
    two_bats = parse_edrs("drs([x,y],[bat(x),bat(y)])")
    one_bat = parse_edrs("drs([x],[bat(x)])")
    assert contains(two_bats, one_bat) is None
    assert len(list(embeddings(one_bat, two_bats))) == 2


def test_negated_conditions_must_match_polarity():
    d = parse_edrs("drs([x],[bat(x), !flies(x)])")
    assert contains(parse_edrs("drs([x],[!flies(x)])"), d)
    assert contains(parse_edrs("drs([x],[flies(x)])"), d) is None


def test_alpha_equivalence_detects_structure_not_names():
    a = parse_edrs("drs([x,y],[p(x),q(y),r(x,y)])")
    b = parse_edrs("drs([m,n],[p(n),q(m),r(n,m)])")
    c = parse_edrs("drs([m,n],[p(n),q(m),r(m,n)])")
    assert alpha_equivalent(a, b)
    assert not alpha_equivalent(a, c)


def _random_edrs(r):
    n = r.randint(1, 6)
    refs = [f"x{i}" for i in range(n)]
    conds = set()
    for _ in range(r.randint(1, 8)):
        if r.random() < 0.5:
            conds.add(Condition(r.choice("pqs"), (r.choice(refs),), r.random() < 0.8))
        else:
            conds.add(Condition(r.choice("RT"), (r.choice(refs), r.choice(refs)), r.random() < 0.8))
    return Edrs(frozenset(refs), frozenset(conds))


def _rename(d, r):
    names = [f"z{i}" for i in range(len(d.referents))]
    r.shuffle(names)
    m = dict(zip(sorted(d.referents), names))
    return Edrs(frozenset(m.values()), frozenset(c.renamed(m) for c in d.conditions))


def test_canonical_form_agrees_with_alpha_equivalence_on_1000_renamings():
    r = random.Random(99)
    for _ in range(1000):
        d = _random_edrs(r)
        e = _rename(d, r)
        assert alpha_equivalent(d, e)
        assert canonical_edrs(d) == canonical_edrs(e)
        # a perturbed copy is equivalent exactly when the canonical forms coincide
        f = _random_edrs(r)
        assert alpha_equivalent(d, f) == (canonical_edrs(d) == canonical_edrs(f))


def test_canonical_form_handles_symmetric_structures():
    # a 6-cycle and two 3-cycles have identical color refinement
    six = Edrs(frozenset(f"v{i}" for i in range(6)),
               frozenset(Condition("R", (f"v{i}", f"v{(i + 1) % 6}")) for i in range(6)))
    tri = Edrs(frozenset(f"v{i}" for i in range(6)),
               frozenset(Condition("R", (f"v{i}", f"v{(i + 1) % 3 + 3 * (i // 3)}"))
                         for i in range(6)))
    assert not alpha_equivalent(six, tri)
    assert canonical_edrs(six) != canonical_edrs(tri)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_canonical_form_is_idempotent(seed):
    d = _random_edrs(random.Random(seed))
    c = canonical_edrs(d)
    assert canonical_edrs(c) == c
    assert alpha_equivalent(c, d)


def test_sentence_to_edrs():
    kb = bundled_kb("player_bat_1scen")
    d = sentence_to_edrs("A player was holding a bat.", kb)
    expected = parse_edrs("drs([e,x,y],[hold(e),player(x),bat(y),Agent(e,x),Theme(e,y)])")
    assert d == expected
    sleep = sentence_to_edrs("a bat was sleeping", bundled_kb("sleep"))
    assert sleep == parse_edrs("drs([e,x],[sleep(e),bat(x),Theme(e,x)])")


def test_sentence_with_unknown_word():
    with pytest.raises(UnknownWordError, match="unknown word: zebra"):
        sentence_to_edrs("a zebra slept", bundled_kb("sleep"))
