"""Existential conjunctive DRSs: data model, text syntax, renaming and containment.

Text form::

    drs([e,x],[bat(x),sleep(e),Theme(e,x),!is_black(x)])

``!`` marks a negated condition. Only unary and binary predicates exist.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Iterator

_REF_RE = re.compile(r"[a-z][a-zA-Z0-9_]*\Z")
_TOKEN_RE = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[()\[\],!]))")


class EdrsSyntaxError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position


class UnknownWordError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Condition:
    pred: str
    args: tuple[str, ...]
    positive: bool = True

    def __post_init__(self):
        if len(self.args) not in (1, 2):
            raise ValueError(f"{self.pred}: arity must be 1 or 2, got {len(self.args)}")

    @property
    def arity(self) -> int:
        return len(self.args)

    def variables(self) -> tuple[str, ...]:
        return self.args

    def renamed(self, mapping) -> "Condition":
        return Condition(self.pred, tuple(mapping[a] for a in self.args), self.positive)

    def __str__(self):
        return ("" if self.positive else "!") + f"{self.pred}({','.join(self.args)})"


@dataclass(frozen=True)
class Edrs:
    referents: frozenset = field(default_factory=frozenset)
    conditions: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "referents", frozenset(self.referents))
        object.__setattr__(self, "conditions", frozenset(self.conditions))
        for r in self.referents:
            if not _REF_RE.match(r):
                raise ValueError(f"invalid referent name {r!r}")
        for c in self.conditions:
            for a in c.args:
                if a not in self.referents:
                    raise ValueError(f"undeclared referent {a}")

    def __str__(self):
        return format_edrs(self)

    def conditions_on(self, ref: str) -> list[Condition]:
        return [c for c in self.conditions if ref in c.args]


def _natural_key(name: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name)]


def sorted_referents(refs) -> list[str]:
    return sorted(refs, key=_natural_key)


# ---------------------------------------------------------------- parsing

def _tokenize(text: str):
    pos = 0
    toks = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise EdrsSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = "name" if m.group("name") else "punct"
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None, kind=None):
        tok = self.toks[self.i]
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = repr(value) if value is not None else kind
            got = repr(tok[1]) if tok[0] != "end" else "end of input"
            raise EdrsSyntaxError(f"expected {want}, got {got}", tok[2])
        self.i += 1
        return tok

    def ref(self):
        tok = self.take(kind="name")
        if not _REF_RE.match(tok[1]):
            raise EdrsSyntaxError(f"invalid referent name {tok[1]!r}", tok[2])
        return tok


def parse_edrs(text: str) -> Edrs:
    p = _Parser(text)
    head = p.take(kind="name")
    if head[1] != "drs":
        raise EdrsSyntaxError(f"expected 'drs', got {head[1]!r}", head[2])
    p.take("(")
    p.take("[")
    refs = []
    if p.peek()[1] != "]":
        refs.append(p.ref()[1])
        while p.peek()[1] == ",":
            p.take(",")
            refs.append(p.ref()[1])
    p.take("]")
    p.take(",")
    p.take("[")
    declared = set(refs)
    arities: dict[str, int] = {}
    conds = []
    if p.peek()[1] != "]":
        while True:
            positive = True
            if p.peek()[1] == "!":
                p.take("!")
                positive = False
            name = p.take(kind="name")
            p.take("(")
            args = [p.ref()]
            if p.peek()[1] == ",":
                p.take(",")
                args.append(p.ref())
            p.take(")")
            for _, a, pos in args:
                if a not in declared:
                    raise EdrsSyntaxError(f"undeclared referent {a}", pos)
            prev = arities.setdefault(name[1], len(args))
            if prev != len(args):
                raise EdrsSyntaxError(
                    f"arity mismatch for {name[1]}: used with {prev} and {len(args)} arguments",
                    name[2])
            conds.append(Condition(name[1], tuple(a[1] for a in args), positive))
            if p.peek()[1] != ",":
                break
            p.take(",")
    p.take("]")
    p.take(")")
    p.take(kind="end")
    return Edrs(frozenset(refs), frozenset(conds))


# ---------------------------------------------------------------- canonical form

def _refine_colors(d: Edrs) -> dict[str, int]:
    """Color refinement over referents; colors are ranks of structural signatures."""
    refs = list(d.referents)
    by_ref: dict[str, list[Condition]] = {r: [] for r in refs}
    for c in d.conditions:
        for a in set(c.args):
            by_ref[a].append(c)

    def rank(sigs):
        order = {s: i for i, s in enumerate(sorted(set(sigs.values())))}
        return {r: order[s] for r, s in sigs.items()}

    colors = rank({r: tuple(sorted((c.pred, not c.positive, c.args.index(r), c.arity,
                                    c.args.count(r)) for c in by_ref[r])) for r in refs})
    while True:
        sigs = {}
        for r in refs:
            sigs[r] = (colors[r], tuple(sorted(
                (c.pred, not c.positive, tuple(-1 if a == r else colors[a] for a in c.args))
                for c in by_ref[r])))
        new = rank(sigs)
        if len(set(new.values())) == len(set(colors.values())):
            return new
        colors = new


def _labelled(conds, index) -> tuple:
    return tuple(sorted((c.pred, not c.positive, tuple(index[a] for a in c.args)) for c in conds))


def canonical_labelling(d: Edrs) -> dict[str, int]:
    """Map each referent to a canonical position 1..n (renaming-invariant)."""
    colors = _refine_colors(d)
    used = {a for c in d.conditions for a in c.args}
    groups: dict[int, list[str]] = {}
    for r in d.referents:
        groups.setdefault(colors[r], []).append(r)
    ordered = [groups[k] for k in sorted(groups)]
    # unused referents are interchangeable: no need to permute them
    choices = [permutations(sorted(g)) if any(r in used for r in g) else [tuple(sorted(g))]
               for g in ordered]
    best_key = None
    best = None
    for combo in product(*choices):
        seq = [r for grp in combo for r in grp]
        index = {r: i + 1 for i, r in enumerate(seq)}
        key = _labelled(d.conditions, index)
        if best_key is None or key < best_key:
            best_key, best = key, index
    return best if best is not None else {}


def canonical_edrs(d: Edrs) -> Edrs:
    index = canonical_labelling(d)
    mapping = {r: f"r{i}" for r, i in index.items()}
    return Edrs(frozenset(mapping.values()), frozenset(c.renamed(mapping) for c in d.conditions))


def format_conditions(conds) -> str:
    return ",".join(str(c) for c in sorted(conds, key=lambda c: (c.pred, not c.positive,
                                                                  [_natural_key(a) for a in c.args])))


def format_edrs(d: Edrs, canonical: bool = True) -> str:
    """Print an eDRS; by default in canonical form (r1, r2, ... naming)."""
    if canonical:
        d = canonical_edrs(d)
    return f"drs([{','.join(sorted_referents(d.referents))}],[{format_conditions(d.conditions)}])"


# ---------------------------------------------------------------- mappings

def _index(d: Edrs):
    idx: dict[tuple, set] = {}
    for c in d.conditions:
        idx.setdefault((c.pred, c.positive, c.arity), set()).add(c.args)
    return idx


def _search(d_u: Edrs, d: Edrs, injective: bool, bijective: bool) -> Iterator[dict[str, str]]:
    src = sorted_referents(d_u.referents)
    tgt = sorted_referents(d.referents)
    idx = _index(d)
    by_ref: dict[str, list[Condition]] = {r: [] for r in src}
    for c in d_u.conditions:
        for a in set(c.args):
            by_ref[a].append(c)
    # most constrained referents first keeps the search shallow
    src.sort(key=lambda r: -len(by_ref[r]))
    mapping: dict[str, str] = {}
    used: set[str] = set()

    def ok(ref):
        for c in by_ref[ref]:
            if all(a in mapping for a in c.args):
                if tuple(mapping[a] for a in c.args) not in idx.get((c.pred, c.positive, c.arity), ()):
                    return False
        return True

    def rec(i):
        if i == len(src):
            yield dict(mapping)
            return
        r = src[i]
        for t in tgt:
            if injective and t in used:
                continue
            mapping[r] = t
            used.add(t)
            if ok(r):
                yield from rec(i + 1)
            used.discard(t)
            del mapping[r]

    if bijective and len(src) != len(tgt):
        return
    yield from rec(0)


def embeddings(d_u: Edrs, d: Edrs) -> Iterator[dict[str, str]]:
    """All injective referent maps m with m(conditions(d_u)) a subset of conditions(d)."""
    if len(d_u.referents) > len(d.referents) or len(d_u.conditions) > len(d.conditions):
        return iter(())
    return _search(d_u, d, injective=True, bijective=False)


def contains(d_u: Edrs, d: Edrs) -> dict[str, str] | None:
    """First injective embedding of d_u into d, or None."""
    return next(embeddings(d_u, d), None)


def alpha_equivalent(a: Edrs, b: Edrs) -> bool:
    if len(a.referents) != len(b.referents) or len(a.conditions) != len(b.conditions):
        return False
    for m in _search(a, b, injective=True, bijective=True):
        # bijection plus equal condition counts: image covers b exactly
        if {c.renamed(m) for c in a.conditions} == b.conditions:
            return True
    return False


# ---------------------------------------------------------------- sentences

_DETERMINERS = {"a", "an", "the", "her", "his"}
_AUXILIARIES = {"was", "were", "is", "has", "had"}


def sentence_to_edrs(sentence: str, kb) -> Edrs:
    """Neo-Davidsonian eDRS for 'a Noun Verbed' / 'a Noun Verbed a Noun'."""
    words = re.findall(r"[A-Za-z_]+", sentence.lower())
    nouns = kb.lexicon.nouns
    verbs = kb.lexicon.verbs

    def noun(i):
        if i >= len(words) or words[i] not in _DETERMINERS:
            raise ValueError(f"sentence outside the fragment: {sentence!r}")
        if i + 1 >= len(words):
            raise ValueError(f"sentence outside the fragment: {sentence!r}")
        w = words[i + 1]
        if w not in nouns:
            raise UnknownWordError(f"unknown word: {w}")
        return nouns[w], i + 2

    subj_pred, i = noun(0)
    if i < len(words) and words[i] in _AUXILIARIES and i + 1 < len(words):
        i += 1
    if i >= len(words):
        raise ValueError(f"sentence outside the fragment: {sentence!r}")
    vw = words[i]
    if vw not in verbs:
        raise UnknownWordError(f"unknown word: {vw}")
    verb = verbs[vw]
    i += 1
    conds = {Condition(verb.pred, ("e",)), Condition(subj_pred, ("x",)),
             Condition(verb.subj, ("e", "x"))}
    refs = {"e", "x"}
    if i < len(words):
        if verb.obj is None:
            raise ValueError(f"verb {vw!r} takes no object: {sentence!r}")
        obj_pred, i = noun(i)
        if i != len(words):
            raise ValueError(f"sentence outside the fragment: {sentence!r}")
        refs.add("y")
        conds |= {Condition(obj_pred, ("y",)), Condition(verb.obj, ("e", "y"))}
    return Edrs(frozenset(refs), frozenset(conds))
