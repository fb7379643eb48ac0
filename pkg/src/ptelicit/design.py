"""Fixed experimental instrument: the 35-lottery battery, the 14 epistemic
markers, the round substitution schemes and prompt rendering."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from types import SimpleNamespace
from typing import Mapping

import numpy as np

from .errors import ConfigurationError
from .pt_core import Prospect

class Series(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"


@dataclass(frozen=True)
class Lottery:
    series: Series
    index: int
    option_k: Prospect
    option_u: Prospect

    @property
    def id(self) -> str:
        return f"{self.series.value}-{self.index}"

    def option(self, label: str) -> Prospect:
        return self.option_k if label == "K" else self.option_u


# Series 1: K = (40, .3; 10, .7), U = (z, .1; 5, .9)
SERIES1_U_HIGH = (68, 75, 83, 93, 106, 125, 150, 185, 220, 300, 400, 600, 1000, 1700)
# Series 2: K = (40, .9; 30, .1), U = (z, .7; 5, .3)
SERIES2_U_HIGH = (54, 56, 58, 60, 62, 65, 68, 72, 77, 83, 90, 100, 110, 130)
# Series 3, all branches at 50%: (K win, K lose, U win, U lose)
SERIES3 = (
    (25, 4, 30, 21),
    (4, 4, 30, 21),
    (1, 4, 30, 21),
    (1, 4, 30, 16),
    (1, 8, 30, 16),
    (1, 8, 30, 14),
    (1, 8, 30, 11),
)


def _build_battery() -> tuple[Lottery, ...]:
    out = []
    for i, z in enumerate(SERIES1_U_HIGH, start=1):
        out.append(Lottery(Series.S1, i, Prospect(40, 0.3, 10, 0.7), Prospect(z, 0.1, 5, 0.9)))
    for i, z in enumerate(SERIES2_U_HIGH, start=1):
        out.append(Lottery(Series.S2, i, Prospect(40, 0.9, 30, 0.1), Prospect(z, 0.7, 5, 0.3)))
    for i, (kw, kl, uw, ul) in enumerate(SERIES3, start=1):
        out.append(
            Lottery(Series.S3, i, Prospect(-kl, 0.5, kw, 0.5), Prospect(-ul, 0.5, uw, 0.5))
        )
    return tuple(out)


_BATTERY = _build_battery()
LOTTERY_IDS = tuple(l.id for l in _BATTERY)


def battery() -> list[Lottery]:
    """All 35 lotteries in table order (S1 1-14, S2 1-14, S3 1-7)."""
    return list(_BATTERY)


def lottery_by_id(lottery_id: str) -> Lottery:
    try:
        return _BATTERY[LOTTERY_IDS.index(lottery_id)]
    except ValueError:
        raise KeyError(f"unknown lottery id {lottery_id!r}") from None


@dataclass(frozen=True)
class MarkerSpec:
    text: str
    human_probability: float


MARKERS = (
    MarkerSpec("almost certain", 0.95),
    MarkerSpec("highly likely", 0.90),
    MarkerSpec("very likely", 0.90),
    MarkerSpec("likely", 0.80),
    MarkerSpec("probable", 0.70),
    MarkerSpec("somewhat likely", 0.70),
    MarkerSpec("possible", 0.60),
    MarkerSpec("uncertain", 0.50),
    MarkerSpec("somewhat unlikely", 0.30),
    MarkerSpec("unlikely", 0.25),
    MarkerSpec("not likely", 0.20),
    MarkerSpec("doubtful", 0.20),
    MarkerSpec("very unlikely", 0.10),
    MarkerSpec("highly unlikely", 0.10),
)


def marker_by_text(text: str) -> MarkerSpec:
    for m in MARKERS:
        if m.text == text:
            return m
    raise KeyError(f"unknown marker {text!r}")


_ALL_SLOTS = frozenset((s, o) for s in Series for o in ("K", "U"))


class Round(str, enum.Enum):
    BASELINE = "baseline"
    R1 = "round1"
    R2 = "round2"
    R3 = "round3"
    R4 = "round4"

    @property
    def marked_slots(self) -> frozenset:
        """(series, option) pairs whose probabilities are replaced by markers."""
        return _MARKED[self]

    def marks_series(self, series: Series) -> bool:
        return any(s == series for s, _ in self.marked_slots)

    @classmethod
    def parse(cls, text: str) -> "Round":
        t = str(text).strip().lower()
        aliases = {"r1": "round1", "r2": "round2", "r3": "round3", "r4": "round4",
                   "1": "round1", "2": "round2", "3": "round3", "4": "round4",
                   "stage1": "baseline"}
        t = aliases.get(t, t)
        for r in cls:
            if r.value == t:
                return r
        raise ConfigurationError(f"unknown round {text!r}")


_MARKED = {
    Round.BASELINE: frozenset(),
    Round.R1: frozenset({(Series.S1, "K"), (Series.S2, "K")}),
    Round.R2: frozenset({(Series.S1, "K"), (Series.S2, "K"), (Series.S3, "K")}),
    Round.R3: frozenset({(Series.S1, "U"), (Series.S2, "U"), (Series.S3, "U")}),
    Round.R4: _ALL_SLOTS,
}
RoundScheme = Round


# -- prompts ---------------------------------------------------------------

INTRO = (
    "You are invited to participate in an experiment.\n"
    "Your task is to choose between option K and option U "
    "for each of the following lotteries."
)
OUTRO = (
    "Please DO NOT REASON and DIRECTLY output your choice, "
    'by ONLY returning one of the following two labels: "[K]", "[U]".\n'
    "The answer is:"
)
LABEL_K = "[K]"
LABEL_U = "[U]"


@dataclass(frozen=True)
class PromptBundle:
    intro: str = INTRO
    outro: str = OUTRO
    label_k: str = LABEL_K
    label_u: str = LABEL_U


def format_percent(p: float) -> str:
    return f"{round(100.0 * p, 6):g}%"


def format_money(x: float) -> str:
    return f"${abs(x):g}"


def _branch_line(amount: float, prob_text: str) -> str:
    verb = "lose" if amount < 0 else "win"
    return f"{prob_text} to {verb} {format_money(amount)}"


def _option_lines(prospect: Prospect, markers: tuple[str, str] | None) -> list[str]:
    # markers: (text for the x branch, text for the y branch)
    branches = [(prospect.x, prospect.p, 0), (prospect.y, prospect.q, 1)]
    if prospect.mixed:
        branches.reverse()  # gain line first, loss line second
    lines = []
    for amount, prob, slot in branches:
        head = markers[slot] if markers else f"{format_percent(prob)} probability"
        lines.append(_branch_line(amount, head))
    return lines


def branch_markers(prospect: Prospect, pair) -> tuple[str, str]:
    """Marker texts for the (x, y) branches of ``prospect``.

    The branch with the larger original probability gets the higher-valued
    marker; on a tie the x branch gets the lower one.
    """
    if prospect.p > prospect.q:
        return (pair.marker_high, pair.marker_low)
    return (pair.marker_low, pair.marker_high)


def _as_pair(pair):
    if isinstance(pair, tuple):
        low, high = pair
        return SimpleNamespace(marker_low=low, marker_high=high)
    return pair


def render_decision_prompt(
    lottery: Lottery,
    index_label: int,
    scheme: Round = Round.BASELINE,
    marker_pair=None,
    *,
    u_first: bool = False,
    bundle: PromptBundle = PromptBundle(),
) -> str:
    """Text of one battery question as shown to the agent.

    ``marker_pair`` is either one pair (``NormalizedPair`` or a
    ``(low_text, high_text)`` tuple) used for every marked option, or a
    mapping from option label ("K"/"U") to a pair.
    """
    marked = [o for o in ("K", "U") if (lottery.series, o) in scheme.marked_slots]
    if marked and marker_pair is None:
        raise ConfigurationError(
            f"{scheme.value} marks {lottery.series.value} but no marker pair was given"
        )
    if not marked and marker_pair is not None:
        raise ConfigurationError(
            f"{scheme.value} marks nothing in {lottery.series.value}; unexpected marker pair"
        )

    def pair_for(opt):
        if isinstance(marker_pair, Mapping):
            if opt not in marker_pair:
                raise ConfigurationError(f"no marker pair for option {opt}")
            return _as_pair(marker_pair[opt])
        return _as_pair(marker_pair)

    blocks = []
    order = ("U", "K") if u_first else ("K", "U")
    for opt in order:
        prospect = lottery.option(opt)
        markers = branch_markers(prospect, pair_for(opt)) if opt in marked else None
        blocks.append(f"For option {opt}:\n" + "\n".join(_option_lines(prospect, markers)))
    return f"Here is lottery {index_label}:\n" + "\n".join(blocks) + "\n\n" + bundle.outro


def render_mapping_prompt(
    p: float, marker: str, index_label: int, bundle: PromptBundle = PromptBundle()
) -> str:
    """Stage-2 question: fixed ``p`` chance of $100 (K) against ``marker`` (U)."""
    return (
        f"Here is lottery {index_label}:\n"
        f"For option K: {format_percent(p)} probability to win $100.\n"
        f"For option U: {marker} to win $100.\n\n" + bundle.outro
    )


def session_order(seed) -> list[str]:
    """Seeded uniformly random presentation order of the 35 lottery ids."""
    perm = np.random.default_rng(seed).permutation(len(LOTTERY_IDS))
    return [LOTTERY_IDS[i] for i in perm]


def marked_probabilities(prospect: Prospect, pair) -> tuple[float, float]:
    """Normalized (p, q) for ``prospect`` under a marker pair, aligned the
    same way as :func:`branch_markers`."""
    if prospect.p > prospect.q:
        return (pair.p_high_norm, pair.p_low_norm)
    return (pair.p_low_norm, pair.p_high_norm)


def with_probabilities(lottery: Lottery, overrides: Mapping[str, tuple[float, float]]) -> Lottery:
    """Copy of ``lottery`` with option probabilities replaced.

    ``overrides`` maps "K"/"U" to the new (p, q) of that option's (x, y).
    """
    changes = {}
    for opt, (p, q) in overrides.items():
        old = lottery.option(opt)
        changes["option_k" if opt == "K" else "option_u"] = Prospect(old.x, p, old.y, q)
    return replace(lottery, **changes)


def export_battery_csv(path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "index", "option", "outcome1", "prob1", "outcome2", "prob2"])
        for lot in _BATTERY:
            for opt in ("K", "U"):
                P = lot.option(opt)
                w.writerow([lot.series.value, lot.index, opt, f"{P.x:g}", f"{P.p:g}", f"{P.y:g}", f"{P.q:g}"])
