import csv
import re
from pathlib import Path

import pytest

from ptelicit.design import (INTRO, LOTTERY_IDS, MARKERS, OUTRO, Round, Series, battery,
                             branch_markers, export_battery_csv, lottery_by_id, marker_by_text,
                             render_decision_prompt, render_mapping_prompt, session_order,
                             with_probabilities)
from ptelicit.errors import ConfigurationError
from ptelicit.pt_core import PTParams, Prospect, prospect_utility

GOLDEN = Path(__file__).parent / "golden" / "baseline_prompts.txt"

# re-typed independently of the package constants
S1_Z = [68, 75, 83, 93, 106, 125, 150, 185, 220, 300, 400, 600, 1000, 1700]
S2_Z = [54, 56, 58, 60, 62, 65, 68, 72, 77, 83, 90, 100, 110, 130]
S3 = [(25, 4, 30, 21), (4, 4, 30, 21), (1, 4, 30, 21), (1, 4, 30, 16),
      (1, 8, 30, 16), (1, 8, 30, 14), (1, 8, 30, 11)]
HUMAN_MARKERS = {
    "almost certain": 95, "highly likely": 90, "very likely": 90, "likely": 80,
    "probable": 70, "somewhat likely": 70, "possible": 60, "uncertain": 50,
    "somewhat unlikely": 30, "unlikely": 25, "not likely": 20, "doubtful": 20,
    "very unlikely": 10, "highly unlikely": 10,
}


def expected_numbers(lot):
    s, i = lot.series, lot.index - 1
    if s is Series.S1:
        return [30, 40, 70, 10, 10, S1_Z[i], 90, 5]
    if s is Series.S2:
        return [90, 40, 10, 30, 70, S2_Z[i], 30, 5]
    kw, kl, uw, ul = S3[i]
    return [50, kw, 50, kl, 50, uw, 50, ul]


def test_battery_shape():
    b = battery()
    assert len(b) == 35 and len(set(LOTTERY_IDS)) == 35
    assert [l.series for l in b].count(Series.S1) == 14
    assert [l.series for l in b].count(Series.S3) == 7


def test_battery_known_rows():
    l = lottery_by_id("S1-1")
    assert l.option_k == Prospect(40, 0.3, 10, 0.7) and l.option_u == Prospect(68, 0.1, 5, 0.9)
    assert lottery_by_id("S2-14").option_u == Prospect(130, 0.7, 5, 0.3)
    l = lottery_by_id("S3-7")
    assert l.option_k == Prospect(-8, 0.5, 1, 0.5) and l.option_u == Prospect(-11, 0.5, 30, 0.5)


def test_every_lottery_dispatches():
    for l in battery():
        for opt in "KU":
            assert prospect_utility(l.option(opt), PTParams(0.67, 2.63, 0.685)) == pytest.approx(
                prospect_utility(l.option(opt), PTParams(0.67, 2.63, 0.685)))


def test_markers_match_table():
    assert len(MARKERS) == 14
    assert {m.text: round(m.human_probability * 100) for m in MARKERS} == HUMAN_MARKERS
    assert marker_by_text("likely").human_probability == 0.8
    with pytest.raises(KeyError):
        marker_by_text("perhaps")


@pytest.mark.parametrize("rnd,slots", [
    (Round.BASELINE, set()),
    (Round.R1, {("S1", "K"), ("S2", "K")}),
    (Round.R2, {("S1", "K"), ("S2", "K"), ("S3", "K")}),
    (Round.R3, {("S1", "U"), ("S2", "U"), ("S3", "U")}),
    (Round.R4, {(s, o) for s in ("S1", "S2", "S3") for o in "KU"}),
])
def test_round_membership(rnd, slots):
    assert {(s.value, o) for s, o in rnd.marked_slots} == slots


@pytest.mark.parametrize("text,want", [("1", Round.R1), ("r3", Round.R3), ("round4", Round.R4),
                                       ("Baseline", Round.BASELINE)])
def test_round_parse(text, want):
    assert Round.parse(text) is want


def test_round_parse_unknown():
    with pytest.raises(ConfigurationError):
        Round.parse("round9")


def test_baseline_prompts_golden():
    text = "".join(f"### {l.id}\n" + render_decision_prompt(l, i) + "\n"
                   for i, l in enumerate(battery(), 1))
    assert text == GOLDEN.read_text()


@pytest.mark.parametrize("lot", battery(), ids=lambda l: l.id)
def test_baseline_prompt_numbers(lot):
    body = render_decision_prompt(lot, 7).split("\n\n")[0]
    nums = [int(n) for n in re.findall(r"\d+", body)]
    assert nums[0] == 7
    assert nums[1:] == expected_numbers(lot)


def test_prompt_template_lines():
    p = render_decision_prompt(lottery_by_id("S1-1"), 1)
    assert p.startswith("Here is lottery 1:\nFor option K:\n")
    assert "30% probability to win $40" in p and "70% probability to win $10" in p
    assert p.endswith(OUTRO)
    assert "DO NOT REASON" in OUTRO and '"[K]", "[U]"' in OUTRO
    assert INTRO.startswith("You are invited to participate in an experiment.")


def test_mixed_prompt_says_lose_with_positive_amount():
    p = render_decision_prompt(lottery_by_id("S3-2"), 2)
    assert "50% probability to lose $4" in p and "$-" not in p


def test_u_first_swaps_order():
    p = render_decision_prompt(lottery_by_id("S1-1"), 1, u_first=True)
    assert p.index("For option U:") < p.index("For option K:")


def test_r4_prompt_has_no_percentages():
    p = render_decision_prompt(lottery_by_id("S1-3"), 3, Round.R4, ("unlikely", "likely"))
    body = p.split("\n\n")[0]
    assert "%" not in body
    assert "\nunlikely to win $40" in body and "\nlikely to win $10" in body


def test_r1_marks_only_k():
    p = render_decision_prompt(lottery_by_id("S2-1"), 1, Round.R1, ("unlikely", "likely"))
    k, u = p.split("For option U:")
    assert "%" not in k and "70% probability to win $54" in u


def test_marker_pair_required_iff_marked():
    with pytest.raises(ConfigurationError):
        render_decision_prompt(lottery_by_id("S1-1"), 1, Round.R1)
    with pytest.raises(ConfigurationError):
        render_decision_prompt(lottery_by_id("S3-1"), 1, Round.R1, ("unlikely", "likely"))


def test_branch_markers_alignment():
    class P:
        marker_low, marker_high = "lo", "hi"
    assert branch_markers(Prospect(40, 0.3, 10, 0.7), P) == ("lo", "hi")
    assert branch_markers(Prospect(40, 0.9, 30, 0.1), P) == ("hi", "lo")
    assert branch_markers(Prospect(-4, 0.5, 25, 0.5), P) == ("lo", "hi")


def test_mapping_prompt():
    p = render_mapping_prompt(0.15, "It's extremely certain", 2)
    assert p.startswith("Here is lottery 2:\nFor option K: 15% probability to win $100.\n"
                        "For option U: It's extremely certain to win $100.\n\n")


def test_session_order():
    a = session_order(11)
    assert a == session_order(11)
    assert sorted(a) == sorted(LOTTERY_IDS)
    perms = {tuple(session_order(s)) for s in range(100)}
    assert len(perms) == 100


def test_with_probabilities():
    l = with_probabilities(lottery_by_id("S1-1"), {"K": (0.25, 0.75)})
    assert l.option_k == Prospect(40, 0.25, 10, 0.75)
    assert l.option_u == lottery_by_id("S1-1").option_u


def test_export_csv(tmp_path):
    path = tmp_path / "battery.csv"
    export_battery_csv(path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 70
    assert rows[0] == {"series": "S1", "index": "1", "option": "K", "outcome1": "40",
                       "prob1": "0.3", "outcome2": "10", "prob2": "0.7"}
    assert rows[-1]["outcome1"] == "-11"
