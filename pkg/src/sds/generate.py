"""The generative story over situation descriptions, canonical forms and scoring.

A situation description (SD) pairs a conceptual graph, a forest of two-level
predicate-argument trees whose nodes carry scenario labels, with the eDRS
its nodes emit. Sampling draws the scenario mix explicitly; scoring
integrates it out (Dirichlet-multinomial), so the two must agree in
distribution.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterator

from .edrs import Condition, Edrs, format_edrs
from .kb import KnowledgeBase
from .prob import (NEG_INF, RandomSource, cumulative, log_collapsed_seq_prob,
                   poe_weights, safe_log)


@dataclass(frozen=True, order=True)
class ConceptToken:
    concept: str
    scenario: str
    referent: str

    def label(self) -> str:
        return f"{self.concept}@{self.scenario}"


@dataclass(frozen=True)
class RoleToken:
    role: str
    parent: ConceptToken
    filler: ConceptToken


@dataclass(frozen=True)
class Tree:
    root: ConceptToken
    realized: tuple = ()     # RoleToken, sorted by role name
    unrealized: tuple = ()   # role names, sorted

    def tokens(self) -> list[ConceptToken]:
        return [self.root] + [r.filler for r in self.realized]

    def role(self, name: str) -> RoleToken | None:
        for r in self.realized:
            if r.role == name:
                return r
        return None

    def shape(self) -> tuple:
        """Graph-only identity of the tree (labels, no referents)."""
        return (self.root.scenario, self.root.concept,
                tuple((r.role, r.filler.scenario, r.filler.concept) for r in self.realized),
                self.unrealized)


@dataclass(frozen=True)
class ConceptualGraph:
    trees: tuple

    def tokens(self) -> list[ConceptToken]:
        return [t for tree in self.trees for t in tree.tokens()]

    def role_tokens(self) -> list[RoleToken]:
        return [r for tree in self.trees for r in tree.realized]

    def scenario_counts(self) -> Counter:
        return Counter(t.scenario for t in self.tokens())


@dataclass(frozen=True)
class SituationDescription:
    graph: ConceptualGraph
    drs: Edrs

    def token_at(self, referent: str) -> tuple[ConceptToken, Tree, str | None]:
        """(token, its tree, role it fills or None for a root) for a referent."""
        for tree in self.graph.trees:
            if tree.root.referent == referent:
                return tree.root, tree, None
            for r in tree.realized:
                if r.filler.referent == referent:
                    return r.filler, tree, r.role
        raise KeyError(referent)

    def __str__(self):
        return format_sd(self)


def make_tree(scenario: str, concept: str, realized, unrealized, referents) -> Tree:
    """Build a tree from (role, filler scenario, filler concept) triples.

    ``referents`` is an iterator supplying fresh referent names.
    """
    root = ConceptToken(concept, scenario, next(referents))
    roles = tuple(RoleToken(r, root, ConceptToken(f, s2, next(referents)))
                  for r, s2, f in sorted(realized))
    return Tree(root, roles, tuple(sorted(unrealized)))


def _fresh(prefix="v"):
    i = 0
    while True:
        i += 1
        yield f"{prefix}{i}"


# ---------------------------------------------------------------- canonical form

def _tree_conditions_sig(tree: Tree, by_ref: dict) -> tuple:
    def unary(ref):
        return tuple(sorted((c.pred, c.positive) for c in by_ref.get(ref, ()) if c.arity == 1))

    def binary(a, b):
        return tuple(sorted((c.pred, c.positive) for c in by_ref.get(a, ())
                            if c.arity == 2 and c.args == (a, b)))

    return (unary(tree.root.referent),
            tuple((unary(r.filler.referent), binary(tree.root.referent, r.filler.referent))
                  for r in tree.realized))


def canonicalize(sd: SituationDescription) -> SituationDescription:
    """Equivalence-class representative: trees sorted, referents r1, r2, ... in traversal order."""
    by_ref: dict[str, list[Condition]] = {}
    for c in sd.drs.conditions:
        by_ref.setdefault(c.args[0], []).append(c)
    keyed = sorted(((t.shape(), _tree_conditions_sig(t, by_ref)), i) for i, t in enumerate(sd.graph.trees))
    ordered = [sd.graph.trees[i] for _, i in keyed]
    rename: dict[str, str] = {}
    names = _fresh("r")
    new_trees = []
    for t in ordered:
        realized = [(r.role, r.filler.scenario, r.filler.concept) for r in t.realized]
        old = [t.root.referent] + [r.filler.referent for r in sorted(t.realized, key=lambda r: r.role)]
        nt = make_tree(t.root.scenario, t.root.concept, realized, t.unrealized, names)
        for o, tok in zip(old, nt.tokens()):
            rename[o] = tok.referent
        new_trees.append(nt)
    extra = sorted(set(sd.drs.referents) - set(rename))
    for r in extra:
        rename[r] = next(names)
    drs = Edrs(frozenset(rename.values()), frozenset(c.renamed(rename) for c in sd.drs.conditions))
    return SituationDescription(ConceptualGraph(tuple(new_trees)), drs)


def format_tree(t: Tree) -> str:
    inner = ",".join(f"{r.role}={r.filler.label()}({r.filler.referent})" for r in t.realized)
    out = f"{t.root.label()}({t.root.referent}){{{inner}}}"
    if t.unrealized:
        out += "-" + ",".join(t.unrealized)
    return out


def format_sd(sd: SituationDescription) -> str:
    trees = " ; ".join(format_tree(t) for t in sd.graph.trees)
    return f"{trees} | {format_edrs(sd.drs, canonical=False)}"


# ---------------------------------------------------------------- compiled KB

class CompiledKB:
    """Index structures for fast sampling; built once per KB."""

    def __init__(self, kb: KnowledgeBase):
        self.kb = kb
        self.scenarios = kb.scenario_names
        self.n_cum = _closed(cumulative(kb.tree_count_probs()))
        self.single_tree = kb.max_trees == 1
        self.phi = {}
        for s in self.scenarios:
            items = sorted((c, p) for c, p in kb.scenarios[s].concept_dist.items() if p > 0)
            self.phi[s] = ([c for c, _ in items], _closed(cumulative(p for _, p in items)))
        self.roles = {}
        for c in kb.concept_names:
            entries = []
            for rname in sorted(kb.concepts[c].roles):
                r = kb.concepts[c].roles[rname]
                poe = {}
                for s in self.scenarios:
                    w = poe_weights(kb.scenarios[s].concept_dist, r.selpref)
                    items = sorted(w.items())
                    poe[s] = ([k for k, _ in items], _closed(cumulative(v for _, v in items))) if items else None
                entries.append((rname, r.realize_prob, poe, sorted(r.emit_preds.items())))
            self.roles[c] = entries
        self.preds = {c: sorted(kb.concepts[c].emit_preds.items()) for c in kb.concept_names}
        self.role_names = {c: [r[0] for r in self.roles[c]] for c in self.roles}


def _closed(cum: list[float]) -> list[float]:
    """Normalize a cumulative table so its last entry is exactly 1.0."""
    total = cum[-1]
    out = [v / total for v in cum]
    out[-1] = 1.0
    return out


_COMPILED: dict[int, CompiledKB] = {}


def compiled(kb: KnowledgeBase) -> CompiledKB:
    ck = _COMPILED.get(id(kb))
    if ck is None or ck.kb is not kb:
        ck = _COMPILED[id(kb)] = CompiledKB(kb)
    return ck


# ---------------------------------------------------------------- sampling

@dataclass
class TreeState:
    scenario: str
    concept: str
    realized: dict          # role -> (filler scenario, filler concept)
    pending: list           # roles not yet decided
    unrealized: list


@dataclass
class StoryState:
    """Partially sampled story, exposed to early-rejection guards."""
    n: int
    trees: list
    unary: dict             # (tree index, role or None) -> {pred: polarity}
    binary: dict            # (tree index, role) -> {pred: polarity}

    @property
    def open_trees(self) -> int:
        return self.n - len(self.trees)


ABORT = "abort"
REJECT = "reject"


def run_story(ck: CompiledKB, rng: RandomSource, guard=None):
    """One pass of the generative story.

    Returns the completed StoryState, ``REJECT`` if ``guard`` vetoed the partial
    state, or ``ABORT`` on a PoE-infeasible filler draw.
    """
    rand = rng.random
    scen = ck.scenarios
    if len(scen) == 1:
        theta_cum = _ONE
    else:
        theta_cum = rng.dirichlet_cumulative(ck.kb.alpha, len(scen))
    n = 1 if ck.single_tree else bisect_right(ck.n_cum, rand()) + 1
    check = guard.check if guard is not None else None
    st = None
    for ti in range(n):
        s = scen[bisect_right(theta_cum, rand())]
        concepts, cum = ck.phi[s]
        c = concepts[bisect_right(cum, rand())]
        if ti == 0:
            # most attempts die on the first root; decide that before building state
            if check is not None and not guard.first_root_ok(n, c):
                return REJECT
            st = StoryState(n, [], {}, {})
        roles = ck.roles[c]
        tree = TreeState(s, c, {}, ck.role_names[c][:], [])
        st.trees.append(tree)
        if check is not None and not check(st):
            return REJECT
        for rname, rho, poe, _ in roles:
            del tree.pending[0]
            if rand() < rho:
                s2 = scen[bisect_right(theta_cum, rand())]
                dist = poe[s2]
                if dist is None:
                    return ABORT
                tree.realized[rname] = (s2, dist[0][bisect_right(dist[1], rand())])
            else:
                tree.unrealized.append(rname)
            if check is not None and not check(st):
                return REJECT
    watch = guard.watched if guard is not None else ()
    for ti, tree in enumerate(st.trees):
        for slot, concept in [(None, tree.concept)] + [(r, f) for r, (_, f) in sorted(tree.realized.items())]:
            em = st.unary[(ti, slot)] = {}
            for q, pi in ck.preds[concept]:
                em[q] = rand() < pi
                if q in watch and not check(st):
                    return REJECT
        for rname, _, _, rpreds in ck.roles[tree.concept]:
            if rname not in tree.realized:
                continue
            em = st.binary[(ti, rname)] = {}
            for q, pi in rpreds:
                em[q] = rand() < pi
                if q in watch and not check(st):
                    return REJECT
    return st


_ONE = [1.0]


def story_to_sd(st: StoryState) -> SituationDescription:
    names = _fresh("v")
    trees = []
    conds = set()
    for ti, t in enumerate(st.trees):
        tree = make_tree(t.scenario, t.concept, [(r, s2, f) for r, (s2, f) in t.realized.items()],
                         t.unrealized, names)
        trees.append(tree)
        for q, pos in st.unary.get((ti, None), {}).items():
            conds.add(Condition(q, (tree.root.referent,), pos))
        for rt in tree.realized:
            for q, pos in st.unary.get((ti, rt.role), {}).items():
                conds.add(Condition(q, (rt.filler.referent,), pos))
            for q, pos in st.binary.get((ti, rt.role), {}).items():
                conds.add(Condition(q, (tree.root.referent, rt.filler.referent), pos))
    graph = ConceptualGraph(tuple(trees))
    refs = frozenset(t.referent for t in graph.tokens())
    return canonicalize(SituationDescription(graph, Edrs(refs, frozenset(conds))))


def sample_sd(kb: KnowledgeBase, rng: RandomSource, max_aborts: int = 10_000) -> SituationDescription:
    """Draw one unconditioned SD; PoE-infeasible draws are retried."""
    ck = compiled(kb)
    for _ in range(max_aborts):
        st = run_story(ck, rng)
        if st is not ABORT:
            return story_to_sd(st)
    raise RuntimeError(f"{max_aborts} consecutive PoE-infeasible draws; check validate(kb)")


# ---------------------------------------------------------------- scoring

def _poe(kb: KnowledgeBase, scenario: str, concept: str, role: str, filler: str) -> float:
    r = kb.concepts[concept].roles[role]
    return poe_weights(kb.scenarios[scenario].concept_dist, r.selpref).get(filler, 0.0)


def _log_orderings(keys) -> float:
    """log of the number of distinct orderings of a multiset."""
    out = math.lgamma(len(keys) + 1)
    for m in Counter(keys).values():
        out -= math.lgamma(m + 1)
    return out


def score_graph(kb: KnowledgeBase, g: ConceptualGraph) -> float:
    """log Delta_1 of the graph's equivalence class, scenario mix integrated out."""
    n = len(g.trees)
    pn = kb.tree_count_probs()
    if not 1 <= n <= len(pn):
        return NEG_INF
    out = safe_log(pn[n - 1])
    counts = Counter()
    for tree in g.trees:
        root = tree.root
        c = kb.concepts.get(root.concept)
        if c is None or root.scenario not in kb.scenarios:
            return NEG_INF
        out += safe_log(kb.scenarios[root.scenario].concept_dist.get(root.concept, 0.0))
        counts[root.scenario] += 1
        realized = {r.role for r in tree.realized}
        if realized & set(tree.unrealized) or (realized | set(tree.unrealized)) != set(c.roles):
            return NEG_INF
        for rt in tree.realized:
            f = rt.filler
            if f.scenario not in kb.scenarios:
                return NEG_INF
            out += safe_log(c.roles[rt.role].realize_prob)
            out += safe_log(_poe(kb, f.scenario, root.concept, rt.role, f.concept))
            counts[f.scenario] += 1
        for rname in tree.unrealized:
            out += safe_log(1.0 - c.roles[rname].realize_prob)
        if out == NEG_INF:
            return NEG_INF
    # trees may come out in any order: count distinct orderings of the shapes
    out += _log_orderings([t.shape() for t in g.trees])
    return out + log_collapsed_seq_prob(counts, kb.alpha, len(kb.scenarios))


def _emission_factor(expected: dict, found: dict) -> float:
    """log prod of pi / (1 - pi) over expected predicates; -inf on any mismatch."""
    if set(found) != set(expected):
        return NEG_INF
    out = 0.0
    for q, pi in expected.items():
        out += safe_log(pi if found[q] else 1.0 - pi)
    return out


def score_conditions(kb: KnowledgeBase, sd: SituationDescription) -> float:
    """log Delta_2: probability of the eDRS conditions given the graph."""
    unary: dict[str, dict] = {}
    binary: dict[tuple, dict] = {}
    for c in sd.drs.conditions:
        bucket = unary.setdefault(c.args[0], {}) if c.arity == 1 else binary.setdefault(c.args, {})
        if c.pred in bucket:
            return NEG_INF  # both Q and not-Q on the same referent(s)
        bucket[c.pred] = c.positive
    out = 0.0
    seen_u, seen_b = set(), set()
    for tree in sd.graph.trees:
        for tok in tree.tokens():
            out += _emission_factor(kb.concepts[tok.concept].emit_preds, unary.get(tok.referent, {}))
            seen_u.add(tok.referent)
        for rt in tree.realized:
            pair = (tree.root.referent, rt.filler.referent)
            out += _emission_factor(kb.concepts[tree.root.concept].roles[rt.role].emit_preds,
                                    binary.get(pair, {}))
            seen_b.add(pair)
    if set(unary) - seen_u or set(binary) - seen_b:
        return NEG_INF
    if out == NEG_INF:
        return out
    # Graph-identical trees make the conditions an unordered multiset per shape.
    by_shape: dict[tuple, list] = {}
    by_ref = {}
    for c in sd.drs.conditions:
        by_ref.setdefault(c.args[0], []).append(c)
    for t in sd.graph.trees:
        by_shape.setdefault(t.shape(), []).append(_tree_conditions_sig(t, by_ref))
    for sigs in by_shape.values():
        if len(sigs) > 1:
            out += _log_orderings(sigs)
    return out


def log_score(kb: KnowledgeBase, sd: SituationDescription) -> float:
    g = score_graph(kb, sd.graph)
    return g if g == NEG_INF else g + score_conditions(kb, sd)


# ---------------------------------------------------------------- enumeration

def enumerate_tree_shapes(kb: KnowledgeBase) -> Iterator[tuple]:
    """Every single tree with nonzero local probability.

    Yields (scenario, concept, realized triples, unrealized roles).
    """
    ck = compiled(kb)
    for s in ck.scenarios:
        for c in ck.phi[s][0]:
            yield from _role_patterns(kb, ck, s, c, ck.roles[c], [], [])


def _role_patterns(kb, ck, s, c, roles, realized, unrealized):
    if not roles:
        yield (s, c, tuple(realized), tuple(unrealized))
        return
    (rname, rho, poe, _), rest = roles[0], roles[1:]
    if rho < 1.0:
        yield from _role_patterns(kb, ck, s, c, rest, realized, unrealized + [rname])
    if rho > 0.0:
        for s2 in ck.scenarios:
            if poe[s2] is None:
                continue
            for f in poe[s2][0]:
                yield from _role_patterns(kb, ck, s, c, rest, realized + [(rname, s2, f)], unrealized)


def enumerate_graphs(kb: KnowledgeBase, limit: int = 2_000_000) -> Iterator[ConceptualGraph]:
    """All conceptual graphs (as canonical multisets of trees) with nonzero Delta_1."""
    shapes = list(enumerate_tree_shapes(kb))
    produced = 0
    for n, pn in enumerate(kb.tree_count_probs(), start=1):
        if pn <= 0:
            continue
        for combo in combinations_with_replacement(range(len(shapes)), n):
            produced += 1
            if produced > limit:
                raise OverflowError(f"more than {limit} graphs to enumerate")
            names = _fresh("r")
            yield ConceptualGraph(tuple(make_tree(shapes[i][0], shapes[i][1], shapes[i][2],
                                                  shapes[i][3], names) for i in combo))
