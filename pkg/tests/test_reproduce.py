import pytest

from sds.edrs import sentence_to_edrs
from sds.infer import exact_posterior, query_sense
from sds.kb import bundled_kb
from sds.reproduce import LEAVE_ROWS, LEAVE_SENSES, TABLES


@pytest.mark.parametrize("table", ["player_bat", "astronomer", "vampire_eating"])
def test_tables_pass(table):
    cells = TABLES[table]()
    assert cells and all(c.ok for c in cells), [c for c in cells if not c.ok]


def test_sampled_leave_column_agrees_with_exact():
    # the reported friend row is off (see the leave criterion); the sampler itself must not be
    cells = TABLES["leave"](samples=1000)
    assert all(c.sampled_ok for c in cells)


def test_theme_only_leave_scenarios_match_reported_table():
    # scenarios that emit only the sense and its Theme fillers
    kb = bundled_kb("leave_theme_only")
    for noun, reported in LEAVE_ROWS:
        dist = query_sense(exact_posterior(kb, sentence_to_edrs(f"a woman left a {noun}", kb)), "e")
        for s in LEAVE_SENSES:
            assert dist.prob(s) == pytest.approx(reported.get(s, 0.0), abs=0.025), (noun, s)
