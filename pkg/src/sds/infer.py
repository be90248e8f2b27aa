"""Conditioning on an utterance eDRS: rejection sampling, exact enumeration, queries."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product

from .edrs import Condition, Edrs, embeddings, contains
from .generate import (ABORT, REJECT, ConceptualGraph, SituationDescription, StoryState,
                       TreeState, _fresh, canonicalize, compiled, enumerate_tree_shapes,
                       format_sd, make_tree, run_story, story_to_sd)
from .kb import KnowledgeBase
from .prob import Categorical, RandomSource, collapsed_seq_prob

DEFAULT_BUDGET = 10**7


class InferenceError(RuntimeError):
    pass


class AcceptanceStarvation(InferenceError):
    def __init__(self, attempts: int, accepted: int, requested: int):
        super().__init__(f"acceptance starvation: {accepted}/{requested} samples accepted "
                         f"after {attempts} attempts")
        self.attempts = attempts
        self.accepted = accepted


class EnumerationBoundError(InferenceError):
    pass


class QueryError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass
class Posterior:
    support: list                   # [(SituationDescription, weight)], weight-descending
    source: dict
    utterance: Edrs
    kb: KnowledgeBase = field(repr=False, default=None)
    _embs: dict = field(default_factory=dict, repr=False)

    def embeddings_of(self, sd: SituationDescription) -> list[dict]:
        key = id(sd)
        if key not in self._embs:
            self._embs[key] = list(embeddings(self.utterance, sd.drs))
        return self._embs[key]

    def weighted_embeddings(self):
        """(sd, mapping, share) with an SD's weight split evenly over its embeddings."""
        for sd, w in self.support:
            embs = self.embeddings_of(sd)
            for m in embs:
                yield sd, m, w / len(embs)


def _support_from(weights: dict[str, tuple[SituationDescription, float]]) -> list:
    total = math.fsum(w for _, w in weights.values())
    items = [(sd, w / total, key) for key, (sd, w) in weights.items() if w > 0]
    items.sort(key=lambda t: (-t[1], t[2]))
    return [(sd, w) for sd, w, _ in items]


# ---------------------------------------------------------------- utterance pattern

class UtterancePattern:
    """Structural requirements the utterance puts on a two-level tree forest.

    Binary conditions link a root (event) token to one of its fillers, so a
    referent used as a first argument must sit on a root and a second
    argument on a filler of that root.
    """

    def __init__(self, utterance: Edrs):
        self.utterance = utterance
        self.unary: dict[str, list] = {r: [] for r in utterance.referents}
        edges: dict[tuple, list] = {}
        for c in utterance.conditions:
            if c.arity == 1:
                self.unary[c.args[0]].append((c.pred, c.positive))
            else:
                edges.setdefault(c.args, []).append((c.pred, c.positive))
        heads = {a for a, _ in edges}
        deps = Counter(b for _, b in edges)
        self.impossible = bool(heads & set(deps)) or any(v > 1 for v in deps.values()) \
            or any(a == b for a, b in edges)
        self.groups = [(h, sorted((b, edges[(a, b)]) for a, b in edges if a == h))
                       for h in sorted(heads)]
        self.isolated = sorted(set(utterance.referents) - heads - set(deps))
        self.watched = frozenset(c.pred for c in utterance.conditions)


def _unary_ok(preds: dict, emitted: dict | None, conds) -> bool:
    for q, pos in conds:
        if emitted is not None and q in emitted:
            if emitted[q] != pos:
                return False
            continue
        pi = preds.get(q)
        if pi is None or (pi <= 0.0 if pos else pi >= 1.0):
            return False
    return True


class Guard:
    """Optimistic feasibility test on partial stories.

    ``check`` returns False only when no completion of the partial state can
    contain the utterance, so rejecting early leaves the accepted
    distribution unchanged.
    """

    def __init__(self, kb: KnowledgeBase, pattern: UtterancePattern):
        self.kb = kb
        self.pat = pattern
        self.watched = pattern.watched
        self._memo: dict = {}
        self._first: dict = {}

    def first_root_ok(self, n: int, concept: str) -> bool:
        key = (n, concept)
        hit = self._first.get(key)
        if hit is None:
            st = StoryState(n, [TreeState("", concept, {},
                                          sorted(self.kb.concepts[concept].roles), [])], {}, {})
            hit = self._first[key] = self._check(st)
        return hit

    def check(self, st: StoryState) -> bool:
        if st.unary:
            return self._check(st)
        # graph phase: the verdict depends only on the labels drawn so far
        key = (st.n - len(st.trees),) + tuple(
            (t.concept, tuple(t.realized.items()), len(t.pending)) for t in st.trees)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = self._check(st)
        return hit

    def _check(self, st: StoryState) -> bool:
        pat = self.pat
        kb = self.kb
        concepts = kb.concepts
        trees: list[TreeState] = st.trees
        open_trees = st.open_trees
        used: set = set()

        def uok(concept, key, conds):
            return _unary_ok(concepts[concept].emit_preds, st.unary.get(key), conds)

        def slots_for(ti, tree, dep, conds_u, conds_b):
            role_defs = concepts[tree.concept].roles
            for rname, (_, f) in tree.realized.items():
                node = (ti, rname)
                if node in used:
                    continue
                if _unary_ok(role_defs[rname].emit_preds, st.binary.get(node), conds_b) \
                        and uok(f, node, conds_u):
                    yield node
            for rname in tree.pending:
                node = (ti, rname)
                if node not in used and _unary_ok(role_defs[rname].emit_preds, None, conds_b):
                    yield node

        def place_deps(ti, tree, deps, k, cont):
            if k == len(deps):
                return cont()
            dep, conds_b = deps[k]
            for node in slots_for(ti, tree, dep, pat.unary[dep], conds_b):
                used.add(node)
                if place_deps(ti, tree, deps, k + 1, cont):
                    return True
                used.discard(node)
            return False

        def groups(i, opened):
            if i == len(pat.groups):
                return isolated(0, opened)
            head, deps = pat.groups[i]
            for ti, tree in enumerate(trees):
                node = (ti, None)
                if node in used or not uok(tree.concept, node, pat.unary[head]):
                    continue
                used.add(node)
                if place_deps(ti, tree, deps, 0, lambda: groups(i + 1, opened)):
                    return True
                used.discard(node)
            # a tree that has not been started yet can host anything
            return opened < open_trees and groups(i + 1, opened + 1)

        def isolated(j, opened):
            if j == len(pat.isolated) or opened < open_trees:
                return True
            ref = pat.isolated[j]
            conds = pat.unary[ref]
            for ti, tree in enumerate(trees):
                cands = [((ti, None), tree.concept)]
                cands += [((ti, r), f) for r, (_, f) in tree.realized.items()]
                for node, concept in cands:
                    if node not in used and uok(concept, node, conds):
                        used.add(node)
                        if isolated(j + 1, opened):
                            return True
                        used.discard(node)
                for r in tree.pending:
                    node = (ti, r)
                    if node not in used:
                        used.add(node)
                        if isolated(j + 1, opened):
                            return True
                        used.discard(node)
            return False

        return groups(0, 0)


# ---------------------------------------------------------------- rejection sampling

def _story_key(st: StoryState) -> tuple:
    return (tuple((t.scenario, t.concept, tuple(t.realized.items()), tuple(t.unrealized))
                  for t in st.trees),
            # emission order is fixed by the graph, so insertion order is canonical enough
            tuple((k, tuple(v.items())) for k, v in st.unary.items()),
            tuple((k, tuple(v.items())) for k, v in st.binary.items()))


def _rejection_worker(args):
    kb, utterance, quota, seed, index, budget = args
    rng = RandomSource(seed).split(index)
    ck = compiled(kb)
    guard = Guard(kb, UtterancePattern(utterance))
    counts: Counter = Counter()
    sds: dict[str, SituationDescription] = {}
    verdicts: dict[tuple, str | None] = {}   # raw story -> canonical key, None if rejected
    attempts = aborts = accepted = 0
    while accepted < quota:
        if attempts >= budget:
            return counts, sds, attempts, aborts, accepted, True
        attempts += 1
        st = run_story(ck, rng, guard)
        if st is ABORT:
            aborts += 1
            continue
        if st is REJECT:
            continue
        raw = _story_key(st)
        if raw not in verdicts:
            sd = story_to_sd(st)
            key = format_sd(sd) if contains(utterance, sd.drs) is not None else None
            verdicts[raw] = key
            if key is not None:
                sds.setdefault(key, sd)
        key = verdicts[raw]
        if key is None:
            continue
        counts[key] += 1
        accepted += 1
    return counts, sds, attempts, aborts, accepted, False


def rejection_infer(kb: KnowledgeBase, utterance: Edrs, samples: int = 2000, seed: int = 42,
                    workers: int = 1, budget: int = DEFAULT_BUDGET) -> Posterior:
    """Posterior estimate from ``samples`` accepted runs of the generative story.

    Each predicate is checked against the utterance as soon as it is drawn;
    work is split over ``workers`` independent streams, merged in stream order.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    workers = max(1, int(workers))
    if UtterancePattern(utterance).impossible:
        raise InferenceError("no situation description of this model can contain the utterance")
    quotas = [samples // workers + (i < samples % workers) for i in range(workers)]
    budgets = [budget // workers + (i < budget % workers) for i in range(workers)]
    jobs = [(kb, utterance, q, seed, i, b) for i, (q, b) in enumerate(zip(quotas, budgets))]
    if workers == 1:
        results = [_rejection_worker(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_rejection_worker, jobs))
    counts: Counter = Counter()
    sds: dict = {}
    attempts = aborts = accepted = 0
    starved = False
    for c, s, a, ab, acc, st in results:
        counts.update(c)
        for k, v in s.items():
            sds.setdefault(k, v)
        attempts += a
        aborts += ab
        accepted += acc
        starved |= st
    if starved:
        raise AcceptanceStarvation(attempts, accepted, samples)
    support = _support_from({k: (sds[k], float(n)) for k, n in counts.items()})
    source = {"method": "rejection", "samples_requested": samples, "accepted": accepted,
              "attempts": attempts, "aborted": aborts, "seed": seed, "workers": workers}
    return Posterior(support, source, utterance, kb)


# ---------------------------------------------------------------- exact enumeration

MAX_SCENARIO_SLOTS = 8
MAX_CONCEPTS = 32
MAX_CANDIDATES = 2_000_000


def _shape_weight(kb: KnowledgeBase, shape) -> tuple[float, Counter]:
    """Local (theta-free) weight of one tree and the scenario draws it uses."""
    s, c, realized, unrealized = shape
    cdef = kb.concepts[c]
    w = kb.scenarios[s].concept_dist[c]
    draws = Counter([s])
    for rname, s2, f in realized:
        r = cdef.roles[rname]
        sel = r.selpref
        phi = kb.scenarios[s2].concept_dist
        z = math.fsum(phi.get(k, 0.0) * p for k, p in sel.items())
        w *= r.realize_prob * phi.get(f, 0.0) * sel.get(f, 0.0) / z
        draws[s2] += 1
    for rname in unrealized:
        w *= 1.0 - cdef.roles[rname].realize_prob
    return w, draws


def _multiset_orderings(combo) -> int:
    out = math.factorial(len(combo))
    for m in Counter(combo).values():
        out //= math.factorial(m)
    return out


def exact_posterior(kb: KnowledgeBase, utterance: Edrs) -> Posterior:
    """Exact conditional over canonical SDs by collapsed enumeration."""
    max_roles = max((len(c.roles) for c in kb.concepts.values()), default=0)
    slots = kb.max_trees * (1 + max_roles)
    if slots > MAX_SCENARIO_SLOTS or len(kb.concepts) > MAX_CONCEPTS:
        raise EnumerationBoundError(
            f"knowledge base too large to enumerate ({slots} scenario-draw slots, "
            f"{len(kb.concepts)} concepts; limits {MAX_SCENARIO_SLOTS} and {MAX_CONCEPTS})")
    pat = UtterancePattern(utterance)
    if pat.impossible:
        raise InferenceError("no situation description of this model can contain the utterance")
    guard = Guard(kb, pat)
    shapes = list(enumerate_tree_shapes(kb))
    local = [_shape_weight(kb, sh) for sh in shapes]
    n_scen = len(kb.scenarios)
    weights: dict[str, tuple[SituationDescription, float]] = {}
    candidates = 0
    for n, pn in enumerate(kb.tree_count_probs(), start=1):
        if pn <= 0:
            continue
        for combo in combinations_with_replacement(range(len(shapes)), n):
            candidates += 1
            if candidates > MAX_CANDIDATES:
                raise EnumerationBoundError(f"more than {MAX_CANDIDATES} candidate graphs")
            trees = [TreeState(shapes[i][0], shapes[i][1],
                               {r: (s2, f) for r, s2, f in shapes[i][2]}, [], list(shapes[i][3]))
                     for i in combo]
            if not guard.check(StoryState(n, trees, {}, {})):
                continue
            draws = Counter()
            w = pn * _multiset_orderings(combo)
            for i in combo:
                lw, d = local[i]
                w *= lw
                draws.update(d)
            w *= collapsed_seq_prob(draws, kb.alpha, n_scen)
            if w <= 0:
                continue
            _add_completions(kb, utterance, [shapes[i] for i in combo], w, weights)
    if not weights:
        raise InferenceError("utterance has probability zero under this knowledge base")
    support = _support_from(weights)
    return Posterior(support, {"method": "exact", "candidates": candidates}, utterance, kb)


def _add_completions(kb, utterance, shapes, graph_weight, weights):
    """Enumerate condition polarities for a graph; keep those containing the utterance."""
    names = _fresh("v")
    trees = [make_tree(s, c, realized, unrealized, names) for s, c, realized, unrealized in shapes]
    graph = ConceptualGraph(tuple(trees))
    slots = []  # (pred, args, pi)
    for t in trees:
        for tok in t.tokens():
            for q, pi in sorted(kb.concepts[tok.concept].emit_preds.items()):
                slots.append((q, (tok.referent,), pi))
        for rt in t.realized:
            for q, pi in sorted(kb.concepts[t.root.concept].roles[rt.role].emit_preds.items()):
                slots.append((q, (t.root.referent, rt.filler.referent), pi))
    options = [[(True, pi)] if pi >= 1.0 else [(False, 1.0 - pi)] if pi <= 0.0
               else [(True, pi), (False, 1.0 - pi)] for _, _, pi in slots]
    refs = frozenset(tok.referent for tok in graph.tokens())
    for choice in product(*options):
        w = graph_weight
        conds = set()
        for (q, args, _), (pos, p) in zip(slots, choice):
            w *= p
            conds.add(Condition(q, args, pos))
        drs = Edrs(refs, frozenset(conds))
        if contains(utterance, drs) is None:
            continue
        sd = canonicalize(SituationDescription(graph, drs))
        key = format_sd(sd)
        prev = weights.get(key)
        weights[key] = (sd, w + (prev[1] if prev else 0.0))


# ---------------------------------------------------------------- queries

def _check_ref(p: Posterior, ref: str):
    if ref not in p.utterance.referents:
        raise QueryError(f"unknown referent {ref!r}")


def _categorical(weights: dict) -> Categorical:
    return Categorical.from_weights({k: weights[k] for k in sorted(weights)})


def query_sense(p: Posterior, referent: str) -> Categorical:
    _check_ref(p, referent)
    acc: dict[str, float] = {}
    for sd, m, share in p.weighted_embeddings():
        tok, _, _ = sd.token_at(m[referent])
        acc[tok.concept] = acc.get(tok.concept, 0.0) + share
    return _categorical(acc)


def query_role(p: Posterior, event_referent: str, role: str) -> tuple[float, Categorical | None]:
    """P(role realized on the event's token) and its filler distribution given realization."""
    _check_ref(p, event_referent)
    if p.kb is not None and role not in p.kb.role_names():
        raise QueryError(f"unknown role {role!r}")
    realized = 0.0
    fillers: dict[str, float] = {}
    for sd, m, share in p.weighted_embeddings():
        tok, tree, slot = sd.token_at(m[event_referent])
        rt = tree.role(role) if slot is None else None
        if rt is not None:
            realized += share
            fillers[rt.filler.concept] = fillers.get(rt.filler.concept, 0.0) + share
    return realized, (_categorical(fillers) if fillers else None)


def query_entailment(p: Posterior, referent: str, predicate: str) -> float:
    _check_ref(p, referent)
    out = 0.0
    for sd, m, share in p.weighted_embeddings():
        if Condition(predicate, (m[referent],), True) in sd.drs.conditions:
            out += share
    return out


def top_k(p: Posterior, k: int) -> list:
    if k < 1:
        raise ValueError("k must be at least 1")
    return p.support[:k]
