import json

import pytest

from sds.kb import (KBError, bundled_kb, bundled_kb_names, emitters, format_kb, load_kb,
                    validate)

from conftest import TINY

EXPECTED = {"astronomer", "bat_features", "leave", "leave_theme_only", "player_bat_1scen",
            "player_bat_2scen", "sleep", "vampire_eating"}


def test_bundled_kbs_load_without_errors():
    assert EXPECTED <= set(bundled_kb_names())
    for name in EXPECTED:
        kb = bundled_kb(name)
        assert not [d for d in validate(kb) if d.level == "error"], name


def test_round_trip_through_text():
    for name in EXPECTED:
        kb = bundled_kb(name)
        assert load_kb(format_kb(kb)) == kb


def _mutated(**changes):
    data = json.loads(json.dumps(TINY))
    for path, value in changes.items():
        node = data
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = value
    return json.dumps(data)


def test_bad_sum_is_an_error():
    with pytest.raises(KBError, match="'farm' distribution sums to 0.9"):
        load_kb(_mutated(scenarios__farm__stick=0.1))


def test_dangling_reference_is_an_error():
    text = _mutated(scenarios__farm={"dog": 0.5, "wolf": 0.5})
    with pytest.raises(KBError, match="undeclared concept 'wolf'"):
        load_kb(text)


def test_probability_out_of_range():
    with pytest.raises(KBError, match="out of range"):
        load_kb(_mutated(concepts__dog__preds={"dog": 1.5}))


def test_duplicate_keys_rejected():
    with pytest.raises(KBError, match="duplicate"):
        load_kb('{"alpha": 1, "alpha": 2, "scenarios": {}, "concepts": {}}')


def test_fillers_with_roles_are_rejected():
    data = json.loads(json.dumps(TINY))
    data["concepts"]["bark"]["roles"]["bark_Agent"]["selpref"] = {"bark": 1.0}
    with pytest.raises(KBError, match="has roles of its own"):
        load_kb(json.dumps(data))


def test_warnings_do_not_block_loading():
    data = json.loads(json.dumps(TINY))
    data["concepts"]["cat"] = {"preds": {"cat": 1.0}}
    data["lexicon"]["nouns"]["ghost"] = "ghost"
    kb = load_kb(json.dumps(data))
    codes = {d.code for d in validate(kb)}
    assert {"unreachable", "lexicon"} <= codes


def test_poe_infeasible_warning():
    kb = bundled_kb("leave_theme_only")
    warn = [d for d in validate(kb) if d.code == "poe-infeasible"]
    assert warn and all(d.level == "warning" for d in warn)


def test_role_predicates_default_to_role_suffix(tiny_kb):
    assert tiny_kb.role("bark", "bark_Agent").emit_preds == {"Agent": 1.0}


def test_emitters_index(tiny_kb):
    assert emitters(tiny_kb, "brown") == {"dog", "stick"}
    assert emitters(tiny_kb, "nothing") == frozenset()


def test_with_alpha():
    kb = bundled_kb("astronomer")
    assert kb.with_alpha(0.1).alpha == 0.1
    assert kb.alpha == 0.5
    with pytest.raises(KBError):
        kb.with_alpha(0)


def test_tree_count_probs(tiny_kb):
    assert tiny_kb.tree_count_probs() == pytest.approx([0.6, 0.4])
    assert bundled_kb("sleep").tree_count_probs() == [1.0]
