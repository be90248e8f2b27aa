import itertools
import json
import math

import pytest

from sds.edrs import Condition, Edrs
from sds.generate import SituationDescription, canonicalize, format_sd
from sds.kb import bundled_kb, load_kb

# Two scenarios, up to two trees, a partly realized role and fractional predicates:
# small enough to enumerate by hand, rich enough to exercise ordering multiplicities.
TINY = {
    "alpha": 0.7,
    "max_trees": 2,
    "tree_count_dist": [0.6, 0.4],
    "scenarios": {
        "farm": {"dog": 0.5, "bark": 0.3, "stick": 0.2},
        "park": {"dog": 0.2, "stick": 0.5, "bark": 0.3},
    },
    "concepts": {
        "dog": {"preds": {"dog": 1.0, "brown": 0.4}},
        "stick": {"preds": {"stick": 1.0, "brown": 0.7}},
        "bark": {
            "preds": {"bark": 1.0},
            "roles": {"bark_Agent": {"realize": 0.6, "selpref": {"dog": 0.9, "stick": 0.1}}},
        },
    },
    "lexicon": {
        "nouns": {"dog": "dog", "stick": "stick"},
        "verbs": {"barked": {"pred": "bark", "subj": "Agent"}},
    },
}


@pytest.fixture(scope="session")
def tiny_kb():
    return load_kb(json.dumps(TINY))


@pytest.fixture(scope="session")
def sleep_kb():
    return bundled_kb("sleep")


def completions(kb, graph):
    """Every eDRS a graph can emit, merged by canonical SD text: {key: (sd, prob)}.

    Built directly from the emission parameters, independently of score_conditions.
    """
    slots = []
    for t in graph.trees:
        for tok in t.tokens():
            for q, pi in kb.concepts[tok.concept].emit_preds.items():
                slots.append((q, (tok.referent,), pi))
        for rt in t.realized:
            for q, pi in kb.concepts[t.root.concept].roles[rt.role].emit_preds.items():
                slots.append((q, (t.root.referent, rt.filler.referent), pi))
    refs = frozenset(tok.referent for tok in graph.tokens())
    out = {}
    for signs in itertools.product((True, False), repeat=len(slots)):
        p = math.prod(pi if s else 1 - pi for (_, _, pi), s in zip(slots, signs))
        if p == 0:
            continue
        conds = frozenset(Condition(q, a, s) for (q, a, _), s in zip(slots, signs))
        sd = canonicalize(SituationDescription(graph, Edrs(refs, conds)))
        key = format_sd(sd)
        prev = out.get(key, (sd, 0.0))[1]
        out[key] = (sd, prev + p)
    return out


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true",
                     help="rewrite the golden CLI outputs instead of comparing")


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
