"""Command-line front end: ``sds validate|interpret|reproduce|sample``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .edrs import EdrsSyntaxError, UnknownWordError, parse_edrs, sentence_to_edrs
from .generate import format_sd, sample_sd
from .infer import (DEFAULT_BUDGET, AcceptanceStarvation, InferenceError, QueryError, exact_posterior,
                    query_entailment, query_role, query_sense, rejection_infer, top_k)
from .kb import KBError, bundled_kb_names, bundled_kb_text, load_kb, validate
from .prob import RandomSource
from .reproduce import TABLES, format_cells

EXIT_OK, EXIT_ERROR, EXIT_UNREADABLE, EXIT_STARVED = 0, 1, 2, 3
DEFAULT_TOP_K = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def read_kb_text(path: str) -> str:
    """KB text from a file, falling back to a bundled KB of the same base name."""
    p = Path(path)
    if p.is_file():
        try:
            return p.read_text(encoding="utf-8")
        except OSError as e:
            raise CliError(f"cannot read {path}: {e.strerror}", EXIT_UNREADABLE) from None
    name = p.name.removesuffix(".json").removesuffix(".kb")
    if name in bundled_kb_names():
        return bundled_kb_text(name)
    raise CliError(f"cannot read {path}: no such file or bundled KB", EXIT_UNREADABLE)


def load(path: str, alpha: float | None = None):
    try:
        kb = load_kb(read_kb_text(path))
        return kb.with_alpha(alpha) if alpha is not None else kb
    except KBError as e:
        raise CliError(f"invalid knowledge base: {e}") from None


def parse_query(text: str) -> tuple:
    kind, _, rest = text.partition(":")
    args = rest.split(":") if rest else []
    shapes = {"sense": 1, "role": 2, "entailment": 2, "topk": 1}
    if kind not in shapes or len(args) != shapes[kind] or not all(args):
        raise CliError(f"bad query {text!r}; expected sense:REF, role:REF:ROLE, "
                       "entailment:REF:PRED or topk:K")
    if kind == "topk":
        try:
            k = int(args[0])
        except ValueError:
            raise CliError(f"bad query {text!r}: K must be an integer") from None
        if k < 1:
            raise CliError(f"bad query {text!r}: K must be at least 1")
        args = [k]
    return (kind, *args)


def answer(post, query: tuple) -> dict:
    kind = query[0]
    out = {"query": ":".join(str(a) for a in query)}
    if kind == "sense":
        out["distribution"] = query_sense(post, query[1]).as_dict()
    elif kind == "role":
        realized, fillers = query_role(post, query[1], query[2])
        out["realized"] = realized
        out["fillers"] = fillers.as_dict() if fillers else {}
    elif kind == "entailment":
        out["probability"] = query_entailment(post, query[1], query[2])
    else:
        out["top"] = [{"sd": format_sd(sd), "weight": w} for sd, w in top_k(post, query[1])]
    return out


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    try:
        kb_text = read_kb_text(args.kb)
    except CliError as e:
        print(f"error: {e}")
        return e.code
    try:
        diags = validate(load_kb(kb_text, check=False))
    except KBError as e:
        print(f"error: {e}")
        return EXIT_ERROR
    for d in diags:
        print(d)
    errors = sum(d.level == "error" for d in diags)
    warnings = len(diags) - errors
    print(f"{'OK' if not errors else 'FAILED'}: {errors} error(s), {warnings} warning(s)")
    return EXIT_ERROR if errors else EXIT_OK


def interpret(args) -> dict:
    kb = load(args.kb, args.alpha_override)
    try:
        utt = parse_edrs(args.drs) if args.drs is not None else sentence_to_edrs(args.sentence, kb)
    except (EdrsSyntaxError, UnknownWordError) as e:
        raise CliError(str(e)) from None
    queries = [parse_query(q) for q in args.query]
    if args.mode == "exact":
        post = exact_posterior(kb, utt)
    else:
        post = rejection_infer(kb, utt, args.samples, args.seed, args.workers, args.max_attempts)
    try:
        answers = [answer(post, q) for q in queries]
    except QueryError as e:
        raise CliError(f"bad query: {e}") from None
    return {
        "kb": args.kb,
        "alpha": kb.alpha,
        "mode": args.mode,
        "seed": args.seed,
        "utterance": str(utt),
        "stats": post.source,
        "support_size": len(post.support),
        "queries": answers,
        "top": answer(post, ("topk", args.top))["top"],
    }


def report_tsv(rep: dict) -> str:
    lines = [f"# mode={rep['mode']} alpha={rep['alpha']} seed={rep['seed']}",
             "# " + " ".join(f"{k}={v}" for k, v in sorted(rep["stats"].items()))]
    for a in rep["queries"]:
        q = a["query"]
        if "distribution" in a:
            lines += [f"{q}\t{k}\t{v:.6f}" for k, v in a["distribution"].items()]
        elif "realized" in a:
            lines.append(f"{q}\t<realized>\t{a['realized']:.6f}")
            lines += [f"{q}\t{k}\t{v:.6f}" for k, v in a["fillers"].items()]
        elif "probability" in a:
            lines.append(f"{q}\t{a['probability']:.6f}")
        else:
            lines += [f"{q}\t{t['weight']:.6f}\t{t['sd']}" for t in a["top"]]
    lines += [f"top\t{t['weight']:.6f}\t{t['sd']}" for t in rep["top"]]
    return "\n".join(lines)


def cmd_interpret(args) -> int:
    if args.samples < 1:
        raise CliError("--samples must be at least 1")
    if args.top < 1:
        raise CliError("--top must be at least 1")
    try:
        rep = interpret(args)
    except AcceptanceStarvation as e:
        print(f"error: {e}", file=sys.stderr)
        print(json.dumps({"error": "acceptance starvation", "attempts": e.attempts,
                          "accepted": e.accepted}, sort_keys=True))
        return EXIT_STARVED
    except InferenceError as e:
        raise CliError(str(e)) from None
    if args.format == "json":
        print(json.dumps(rep, sort_keys=True, indent=2))
    else:
        print(report_tsv(rep))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    fn = TABLES.get(args.table_id)
    if fn is None:
        raise CliError(f"unknown table {args.table_id!r}; choose from {', '.join(TABLES)}")
    cells = fn(args.samples, args.seed)
    print(format_cells(cells))
    bad = sum(not c.ok for c in cells)
    print(f"{len(cells) - bad}/{len(cells)} cells pass")
    return EXIT_OK if not bad else EXIT_ERROR


def cmd_sample(args) -> int:
    kb = load(args.kb, args.alpha_override)
    if args.n < 1:
        raise CliError("--n must be at least 1")
    rng = RandomSource(args.seed)
    for _ in range(args.n):
        print(format_sd(sample_sd(kb, rng)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sds", description="Situation description systems toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a knowledge base file")
    v.add_argument("kb")
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("interpret", help="condition on an utterance and answer queries")
    i.add_argument("--kb", required=True)
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--drs", help="utterance as eDRS text")
    src.add_argument("--sentence", help="utterance as a simple sentence")
    i.add_argument("--mode", choices=["rejection", "exact"], default="rejection")
    i.add_argument("--samples", type=int, default=2000)
    i.add_argument("--seed", type=int, default=42)
    i.add_argument("--workers", type=int, default=1)
    i.add_argument("--alpha-override", type=float, default=None)
    i.add_argument("--max-attempts", type=int, default=DEFAULT_BUDGET,
                   help="give up (exit 3) after this many story runs")
    i.add_argument("--query", action="append", default=[], metavar="KIND:ARG")
    i.add_argument("--top", type=int, default=DEFAULT_TOP_K, help="number of SDs listed")
    i.add_argument("--format", choices=["json", "tsv"], default="json")
    i.set_defaults(func=cmd_interpret)

    r = sub.add_parser("reproduce", help="recompute one of the case-study tables")
    r.add_argument("table_id")
    r.add_argument("--samples", type=int, default=2000)
    r.add_argument("--seed", type=int, default=42)
    r.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("sample", help="draw unconditioned situation descriptions")
    s.add_argument("--kb", required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--alpha-override", type=float, default=None)
    s.set_defaults(func=cmd_sample)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
