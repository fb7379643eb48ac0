"""Marker-to-probability sweeps, switching-point interpolation, and the
choice and normalization of marker pairs for the substitution rounds."""
from __future__ import annotations

import enum
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import design
from .agents import AgentConfig, SessionState, Trial, present, run_passes, write_transcript
from .design import MarkerSpec, Round, Series
from .errors import ConfigurationError, ContractError, SelectionError
from .seeding import derive_seed

GRID = (5, 15, 25, 35, 45, 55, 65, 75, 85, 95)

# Target probability pair for each (series, option) slot, as (p, q) of the
# battery prospect.
TARGETS = {
    (Series.S1, "K"): (0.3, 0.7),
    (Series.S1, "U"): (0.1, 0.9),
    (Series.S2, "K"): (0.9, 0.1),
    (Series.S2, "U"): (0.7, 0.3),
    (Series.S3, "K"): (0.5, 0.5),
    (Series.S3, "U"): (0.5, 0.5),
}


class Diagnostic(str, enum.Enum):
    CLEAN = "Clean"
    MULTIPLE_CROSSINGS = "MultipleCrossings"
    NO_CROSSING_ALL_K = "NoCrossingAllK"
    NO_CROSSING_ALL_U = "NoCrossingAllU"


@dataclass
class SweepResult:
    marker: MarkerSpec
    counts: list[tuple[int, int, int]]  # (p percent, k_count, n_samples)
    crossings: list[float] = field(default_factory=list)
    monotone: bool = True

    def __post_init__(self):
        if [c[0] for c in self.counts] != list(GRID):
            raise ContractError(f"sweep must cover the grid {GRID} in order")
        for p, k, n in self.counts:
            if not 0 <= k <= n:
                raise ContractError(f"p={p}: k_count {k} outside [0, {n}]")
        ks = [c[1] for c in self.counts]
        self.monotone = all(a <= b for a, b in zip(ks, ks[1:]))


@dataclass
class MappingResult:
    marker: MarkerSpec
    p_mapping: float | None  # percent
    diagnostic: Diagnostic
    crossing_used: int | None = None  # index into GRID of the segment's left end
    counts: list = field(default_factory=list)
    crossings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p_mapping": self.p_mapping,
            "diagnostic": self.diagnostic.value,
            "crossing_used": self.crossing_used,
            "crossings": list(self.crossings),
            "human_probability": self.marker.human_probability,
            "counts": [list(c) for c in self.counts],
        }


@dataclass(frozen=True)
class NormalizedPair:
    marker_low: str
    marker_high: str
    p_low_norm: float
    p_high_norm: float
    target: tuple[float, float]
    distance: float

    def to_dict(self) -> dict:
        return {"marker_low": self.marker_low, "marker_high": self.marker_high,
                "p_low_norm": self.p_low_norm, "p_high_norm": self.p_high_norm,
                "target": list(self.target), "distance": self.distance}

    @classmethod
    def from_dict(cls, d) -> "NormalizedPair":
        return cls(d["marker_low"], d["marker_high"], d["p_low_norm"], d["p_high_norm"],
                   tuple(d["target"]), d["distance"])


# -- stage 2 sweep ---------------------------------------------------------

def mapping_trial(p_percent: int, marker: str, position: int) -> Trial:
    p = p_percent / 100.0
    return Trial(
        prompt=design.render_mapping_prompt(p, marker, position),
        item_id=f"{marker}@{p_percent}",
        series="MAP",
        index=p_percent,
        option_k=None,
        option_u=None,
        marker=marker,
        p_numeric=p,
    )


def _sweep_session(agent, marker, seed, pass_id, client):
    # one session = the ten grid questions in a seeded random order
    session = SessionState.new(seed, pass_id)
    order = session.rng.permutation(len(GRID))
    lines = []
    results = []
    for pos, gi in enumerate(order, start=1):
        trial = mapping_trial(GRID[gi], marker.text, pos)
        results.append((GRID[gi], present(agent, session, trial, client, lines)))
    return results, lines, dict(session.parse_failures)


def run_sweep(agent: AgentConfig, marker: MarkerSpec, n_samples: int = 256,
              master_seed: int = 0, *, transcript_path=None, client=None) -> SweepResult:
    """Ask the ten mapping questions ``n_samples`` times each and count K.

    Draws whose replies never parse are dropped, so a grid point may end up
    with fewer than ``n_samples`` valid draws.
    """
    if n_samples < 2 or n_samples % 2:
        raise ConfigurationError("n_samples must be even and at least 2")
    jobs = [(agent, marker, derive_seed(master_seed, f"stage2:{marker.text}", j), j, client)
            for j in range(n_samples)]
    sessions = run_passes(agent, jobs, _sweep_session)
    k = dict.fromkeys(GRID, 0)
    n = dict.fromkeys(GRID, 0)
    lines = []
    for results, sl, _ in sessions:
        lines.extend(sl)
        for p, out in results:
            if out.label is None:
                continue
            n[p] += 1
            k[p] += out.label == "K"
    if transcript_path is not None:
        write_transcript(transcript_path, lines)
    res = SweepResult(marker, [(p, k[p], n[p]) for p in GRID])
    res.crossings = [c[2] for c in _crossings(res.counts, n_samples / 2.0)]
    return res


# -- interpolation ---------------------------------------------------------

def switching_point(p_x: float, cnt_x: float, p_y: float, cnt_y: float, n0: float) -> float:
    """Where the straight line through (p_x, cnt_x), (p_y, cnt_y) reaches n0."""
    return ((n0 - cnt_x) * p_y + (cnt_y - n0) * p_x) / (cnt_y - cnt_x)


def _crossings(counts, n0) -> list[tuple[int, str, float]]:
    """(left index, direction, location) of every segment that reaches n0.

    An ascending segment satisfies cnt_x < n0 <= cnt_y, a descending one
    cnt_x >= n0 > cnt_y. A first grid point sitting exactly on n0 counts as
    a crossing at that point.
    """
    out = []
    if counts and counts[0][1] == n0:
        out.append((0, "hit", float(counts[0][0])))
    for i in range(len(counts) - 1):
        (px, cx, _), (py, cy, _) = counts[i], counts[i + 1]
        if cx < n0 <= cy:
            out.append((i, "up", switching_point(px, cx, py, cy, n0)))
        elif cx >= n0 > cy:
            out.append((i, "down", switching_point(px, cx, py, cy, n0)))
    return out


def interpolate_mapping(sweep: SweepResult, n_samples: int) -> MappingResult:
    """Switching-point estimate of the marker's probability, in percent.

    With several crossings the result is flagged ``MultipleCrossings`` and
    the first ascending one (K count rising through n0) is used; a
    descending crossing is used only when no ascending one exists.
    """
    n0 = 0.5 * n_samples
    counts = sweep.counts
    found = _crossings(counts, n0)
    if not found:
        diag = (Diagnostic.NO_CROSSING_ALL_K if all(c[1] >= n0 for c in counts)
                else Diagnostic.NO_CROSSING_ALL_U)
        return MappingResult(sweep.marker, None, diag, None, list(counts), [])
    rising = [f for f in found if f[1] != "down"]
    idx, _, loc = (rising or found)[0]
    diag = Diagnostic.CLEAN if len(found) == 1 else Diagnostic.MULTIPLE_CROSSINGS
    return MappingResult(sweep.marker, float(loc), diag, idx, list(counts), [f[2] for f in found])


# -- stage 3 pair selection --------------------------------------------------

def _mapped_values(markers: Mapping) -> dict[str, float]:
    out = {}
    for text, v in markers.items():
        if isinstance(v, MappingResult):
            if v.p_mapping is None:
                continue
            v = v.p_mapping
        if v is None:
            continue
        out[text] = float(v)
    return out


def select_pair(markers: Mapping, target: tuple[float, float]) -> NormalizedPair:
    """Marker pair whose normalized probabilities best match ``target``.

    ``markers`` maps marker text to its mapped probability (any consistent
    unit, typically percent) or to a :class:`MappingResult`; unmapped
    markers are ignored. The score is |p_low' - min(target)| where
    p_low' = p_low / (p_low + p_high); ties go to the smaller raw distance
    |p_low - min(target)|, then to the lexicographically smaller texts.
    """
    if abs(sum(target) - 1.0) > 1e-9:
        raise ContractError(f"target {target} does not sum to 1")
    vals = _mapped_values(markers)
    if len(vals) < 2:
        raise SelectionError(f"need at least 2 mapped markers, have {len(vals)}")
    unit = 100.0 if max(vals.values()) > 1.0 else 1.0
    t_low = min(target)
    best_key, best = None, None
    for a, b in itertools.combinations(sorted(vals), 2):
        pa, pb = vals[a], vals[b]
        if (pb, b) < (pa, a):
            a, b, pa, pb = b, a, pb, pa
        if pa + pb <= 0:
            continue
        lo, hi = pa / (pa + pb), pb / (pa + pb)
        dist = abs(lo - t_low)
        key = (dist, abs(pa - unit * t_low), a, b)
        if best_key is None or key < best_key:
            best_key = key
            best = NormalizedPair(a, b, lo, hi, tuple(target), dist)
    if best is None:
        raise SelectionError("no pair with positive mapped probabilities")
    return best


def select_assignments(markers: Mapping, scheme: Round) -> dict:
    """One independently chosen pair per marked (series, option) slot."""
    return {slot: select_pair(markers, TARGETS[slot]) for slot in sorted(scheme.marked_slots)}


def effective_probabilities(scheme: Round, assignments: Mapping) -> dict[str, dict[str, tuple[float, float]]]:
    """Per-lottery probability overrides for the marked options of ``scheme``.

    Returns ``{lottery_id: {"K" or "U": (p, q)}}``; unmarked options keep
    their battery probabilities and are absent.
    """
    out: dict = {}
    for lot in design.battery():
        for opt in ("K", "U"):
            slot = (lot.series, opt)
            if slot not in scheme.marked_slots:
                continue
            if slot not in assignments:
                raise ConfigurationError(f"no marker pair assigned to {slot[0].value}-{opt}")
            out.setdefault(lot.id, {})[opt] = design.marked_probabilities(
                lot.option(opt), assignments[slot]
            )
    return out


# -- persistence -------------------------------------------------------------

def save_marker_map(path, results: Mapping[str, MappingResult]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps({t: r.to_dict() for t, r in results.items()}, indent=2))
    os.replace(tmp, path)


def load_marker_map(path) -> dict[str, MappingResult]:
    raw = json.loads(Path(path).read_text())
    out = {}
    for text, d in raw.items():
        try:
            spec = design.marker_by_text(text)
        except KeyError:
            spec = MarkerSpec(text, d.get("human_probability"))
        out[text] = MappingResult(
            spec, d.get("p_mapping"), Diagnostic(d["diagnostic"]), d.get("crossing_used"),
            [tuple(c) for c in d.get("counts", [])], list(d.get("crossings", [])),
        )
    return out
