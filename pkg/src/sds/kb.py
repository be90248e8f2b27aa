"""Knowledge bases: scenarios, concepts, roles, generative parameters and lexicon."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

SUM_TOL = 1e-9


class KBError(ValueError):
    pass


@dataclass(frozen=True)
class RoleDef:
    name: str
    realize_prob: float
    selpref: dict
    emit_preds: dict


@dataclass(frozen=True)
class ConceptDef:
    name: str
    emit_preds: dict
    roles: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioDef:
    name: str
    concept_dist: dict


@dataclass(frozen=True)
class VerbEntry:
    pred: str
    subj: str
    obj: str | None = None


@dataclass(frozen=True)
class Lexicon:
    nouns: dict = field(default_factory=dict)
    verbs: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    code: str
    message: str

    def __str__(self):
        return f"{self.level}: [{self.code}] {self.message}"


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    alpha: float
    max_trees: int
    tree_count_dist: object  # "uniform" or list of weights for 1..max_trees
    scenarios: dict
    concepts: dict
    lexicon: Lexicon = field(default_factory=Lexicon)

    def __post_init__(self):
        # inverted predicate index, built once
        index: dict[str, set] = {}
        for c in self.concepts.values():
            for q, p in c.emit_preds.items():
                if p > 0:
                    index.setdefault(q, set()).add(c.name)
        object.__setattr__(self, "_emitters", {q: frozenset(s) for q, s in index.items()})

    @property
    def scenario_names(self) -> list[str]:
        return sorted(self.scenarios)

    @property
    def concept_names(self) -> list[str]:
        return sorted(self.concepts)

    def tree_count_probs(self) -> list[float]:
        """p(n) for n = 1..max_trees."""
        if self.tree_count_dist == "uniform":
            return [1.0 / self.max_trees] * self.max_trees
        ws = list(self.tree_count_dist)
        total = math.fsum(ws)
        return [w / total for w in ws]

    def role(self, concept: str, role: str) -> RoleDef:
        return self.concepts[concept].roles[role]

    def role_names(self) -> set[str]:
        return {r for c in self.concepts.values() for r in c.roles}

    def with_alpha(self, alpha: float) -> "KnowledgeBase":
        if not alpha > 0:
            raise KBError("alpha must be positive")
        return replace(self, alpha=float(alpha))

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return to_dict(self) == to_dict(other)

    __hash__ = None


def emitters(kb: KnowledgeBase, predicate: str) -> frozenset:
    """Concepts that can emit ``predicate`` as a positive unary condition."""
    return kb._emitters.get(predicate, frozenset())


# ---------------------------------------------------------------- loading

def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise KBError(f"duplicate name {k!r}")
        out[k] = v
    return out


def _prob(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise KBError(f"{where}: expected a probability, got {value!r}")
    v = float(value)
    if not 0.0 <= v <= 1.0 or math.isnan(v):
        raise KBError(f"{where}: probability {value} out of range [0, 1]")
    return v


def _prob_map(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise KBError(f"{where}: expected an object")
    return {k: _prob(v, f"{where}[{k!r}]") for k, v in obj.items()}


def _fmt_sum(s: float) -> str:
    return f"{s:.12g}"


def from_dict(data: dict, check: bool = True) -> KnowledgeBase:
    """Build a KB; with ``check`` the first validation error is raised as KBError."""
    if not isinstance(data, dict):
        raise KBError("knowledge base must be a JSON object")
    unknown = set(data) - {"alpha", "max_trees", "tree_count_dist", "scenarios", "concepts", "lexicon"}
    if unknown:
        raise KBError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        alpha = float(data["alpha"])
        scen_raw = data["scenarios"]
        conc_raw = data["concepts"]
    except KeyError as e:
        raise KBError(f"missing required key {e.args[0]!r}") from None
    if not alpha > 0:
        raise KBError("alpha must be positive")
    max_trees = data.get("max_trees", 1)
    if not isinstance(max_trees, int) or max_trees < 1:
        raise KBError("max_trees must be a positive integer")
    tcd = data.get("tree_count_dist", "uniform")
    if tcd != "uniform":
        if (not isinstance(tcd, list) or len(tcd) != max_trees
                or any(not isinstance(w, (int, float)) or w < 0 for w in tcd) or sum(tcd) <= 0):
            raise KBError("tree_count_dist must be 'uniform' or max_trees nonnegative weights")
        tcd = [float(w) for w in tcd]

    concepts = {}
    for cname, cdef in conc_raw.items():
        cdef = cdef or {}
        preds = _prob_map(cdef.get("preds", {}), f"concept {cname!r} preds")
        roles = {}
        for rname, rdef in (cdef.get("roles") or {}).items():
            if rname in roles:
                raise KBError(f"duplicate role {rname!r} in concept {cname!r}")
            realize = _prob(rdef.get("realize", 1.0), f"role {rname!r} realize")
            selpref = _prob_map(rdef.get("selpref", {}), f"role {rname!r} selpref")
            rpreds = _prob_map(rdef["preds"], f"role {rname!r} preds") if "preds" in rdef \
                else {rname.rsplit("_", 1)[-1]: 1.0}
            roles[rname] = RoleDef(rname, realize, selpref, rpreds)
        concepts[cname] = ConceptDef(cname, preds, roles)

    scenarios = {name: ScenarioDef(name, _prob_map(dist, f"scenario {name!r}"))
                 for name, dist in scen_raw.items()}

    lex = data.get("lexicon", {}) or {}
    verbs = {}
    for w, v in (lex.get("verbs") or {}).items():
        try:
            verbs[w] = VerbEntry(v["pred"], v["subj"], v.get("obj"))
        except (KeyError, TypeError):
            raise KBError(f"verb {w!r} needs 'pred' and 'subj'") from None
    lexicon = Lexicon(dict(lex.get("nouns") or {}), verbs)

    kb = KnowledgeBase(alpha, max_trees, tcd, scenarios, concepts, lexicon)
    if not check:
        return kb
    errors = [d for d in validate(kb) if d.level == "error"]
    if errors:
        raise KBError(errors[0].message)
    return kb


def load_kb(text: str, check: bool = True) -> KnowledgeBase:
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise KBError(f"parse error: {e}") from None
    return from_dict(data, check)


def load_kb_file(path) -> KnowledgeBase:
    return load_kb(Path(path).read_text(encoding="utf-8"))


def bundled_kb_names() -> list[str]:
    files = resources.files("sds") / "data"
    return sorted(p.name[: -len(".kb.json")] for p in files.iterdir()
                  if p.name.endswith(".kb.json"))


def bundled_kb_text(name: str) -> str:
    return (resources.files("sds") / "data" / f"{name}.kb.json").read_text(encoding="utf-8")


def bundled_kb(name: str) -> KnowledgeBase:
    return load_kb(bundled_kb_text(name))


def to_dict(kb: KnowledgeBase) -> dict:
    concepts = {}
    for c in kb.concepts.values():
        entry = {"preds": dict(c.emit_preds)}
        if c.roles:
            entry["roles"] = {r.name: {"realize": r.realize_prob, "selpref": dict(r.selpref),
                                       "preds": dict(r.emit_preds)} for r in c.roles.values()}
        concepts[c.name] = entry
    verbs = {}
    for w, v in kb.lexicon.verbs.items():
        verbs[w] = {"pred": v.pred, "subj": v.subj}
        if v.obj is not None:
            verbs[w]["obj"] = v.obj
    return {
        "alpha": kb.alpha,
        "max_trees": kb.max_trees,
        "tree_count_dist": kb.tree_count_dist if kb.tree_count_dist == "uniform"
        else list(kb.tree_count_dist),
        "scenarios": {s.name: dict(s.concept_dist) for s in kb.scenarios.values()},
        "concepts": concepts,
        "lexicon": {"nouns": dict(kb.lexicon.nouns), "verbs": verbs},
    }


def format_kb(kb: KnowledgeBase) -> str:
    return json.dumps(to_dict(kb), indent=2)


# ---------------------------------------------------------------- validation

def validate(kb: KnowledgeBase) -> list[Diagnostic]:
    out: list[Diagnostic] = []

    def err(code, msg):
        out.append(Diagnostic("error", code, msg))

    def warn(code, msg):
        out.append(Diagnostic("warning", code, msg))

    if not kb.scenarios:
        err("no-scenarios", "knowledge base declares no scenarios")
    concepts = kb.concepts

    for s in kb.scenarios.values():
        for c in s.concept_dist:
            if c not in concepts:
                err("dangling", f"scenario {s.name!r} refers to undeclared concept {c!r}")
        total = math.fsum(s.concept_dist.values())
        if abs(total - 1.0) > SUM_TOL:
            err("sum", f"scenario {s.name!r} distribution sums to {_fmt_sum(total)}")

    fillers = set()
    for c in concepts.values():
        for r in c.roles.values():
            for f, p in r.selpref.items():
                if f not in concepts:
                    err("dangling", f"role {r.name!r} of {c.name!r} refers to undeclared concept {f!r}")
                elif p > 0:
                    fillers.add(f)
            total = math.fsum(r.selpref.values())
            if abs(total - 1.0) > SUM_TOL:
                err("sum", f"role {r.name!r} of {c.name!r} selectional preference sums to {_fmt_sum(total)}")
    for f in sorted(fillers):
        if f in concepts and concepts[f].roles:
            err("filler-roles", f"concept {f!r} can fill a role but has roles of its own")

    for word, pred in kb.lexicon.nouns.items():
        if not emitters(kb, pred):
            warn("lexicon", f"noun {word!r} maps to {pred!r}, which no concept emits")

    # PoE feasibility: the scenario must be able to supply some filler for each role
    for s in kb.scenarios.values():
        support = {c for c, p in s.concept_dist.items() if p > 0}
        for cname in sorted(support):
            c = concepts.get(cname)
            if c is None:
                continue
            for r in c.roles.values():
                if r.realize_prob > 0 and not support & {f for f, p in r.selpref.items() if p > 0}:
                    warn("poe-infeasible",
                         f"scenario {s.name!r} generates {cname!r} but none of the fillers of role {r.name!r}")

    reachable = {c for s in kb.scenarios.values() for c, p in s.concept_dist.items() if p > 0}
    for cname in sorted(set(concepts) - reachable):
        warn("unreachable", f"unreachable concept {cname!r}: no scenario generates it")
    return out
