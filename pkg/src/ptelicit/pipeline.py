"""Three-stage run orchestration, persistence and reporting.

Run directory layout::

    <run>/manifest.json
    <run>/stage1/{counts.csv, probabilities.json, report.json, transcripts/}
    <run>/stage2/{marker_map.json, transcripts/}
    <run>/roundN/{counts.csv, probabilities.json, report.json, transcripts/}
    <run>/report/{summary.txt, markers.csv, rounds.csv}
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import yaml

from . import __version__, design
from .agents import AgentConfig, AgentKind, ChatClient, aggregate, run_battery_pass, run_passes
from .design import MARKERS, Round, Series
from .errors import ConfigurationError, InputParseError, PTElicitError
from .estimation import ChoiceTable, EstimationReport, estimate
from .marker_mapping import (
    effective_probabilities,
    interpolate_mapping,
    load_marker_map,
    run_sweep,
    save_marker_map,
    select_assignments,
)
from .pt_core import PARAM_NAMES
from .seeding import derive_seed

log = logging.getLogger(__name__)

ALL_STAGES = ("stage1", "stage2", "round1", "round2", "round3", "round4")


@dataclass
class RunConfig:
    agent: AgentConfig
    n_samples: int = 256
    bootstrap_replicates: int = 1000
    master_seed: int = 0
    output_dir: Path = Path("runs/default")
    stages: tuple[str, ...] = ALL_STAGES
    # Optional separate agent for the stage-2 sweep (the synthetic PT agent
    # cannot answer mapping questions).
    marker_agent: AgentConfig | None = None
    transcripts: bool = True
    u_first: bool = False

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.n_samples < 2 or self.n_samples % 2:
            raise ConfigurationError("n_samples must be even and at least 2")
        if self.bootstrap_replicates and self.bootstrap_replicates < 100:
            raise ConfigurationError("bootstrap_replicates must be 0 or at least 100")
        unknown = set(self.stages) - set(ALL_STAGES)
        if unknown:
            raise ConfigurationError(f"unknown stages {sorted(unknown)}")

    def snapshot(self) -> dict:
        return {
            "agent": self.agent.to_dict(),
            "marker_agent": None if self.marker_agent is None else self.marker_agent.to_dict(),
            "n_samples": self.n_samples,
            "bootstrap_replicates": self.bootstrap_replicates,
            "master_seed": self.master_seed,
            "output_dir": str(self.output_dir),
            "stages": list(self.stages),
            "transcripts": self.transcripts,
            "u_first": self.u_first,
        }


def load_config(path, **overrides) -> RunConfig:
    """Read a YAML run config; keyword overrides that are not None win."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    run = dict(raw.get("run", {}))
    if "agent" not in raw:
        raise ConfigurationError(f"{path}: missing 'agent' section")
    kw = {
        "agent": AgentConfig.from_dict(raw["agent"]),
        "marker_agent": AgentConfig.from_dict(raw["marker_agent"]) if raw.get("marker_agent") else None,
    }
    for key in ("n_samples", "bootstrap_replicates", "master_seed", "output_dir",
                "transcripts", "u_first"):
        if key in run:
            kw[key] = run[key]
    if "stages" in run:
        kw["stages"] = tuple(run["stages"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kw)


# -- file helpers ------------------------------------------------------------

def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def write_counts_csv(path, table: ChoiceTable) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "index", "k_count", "n_samples"])
    for lot, k, n in zip(table.lotteries, table.k, table.n):
        w.writerow([lot.series.value, lot.index, int(k), int(n)])
    _write_atomic(Path(path), buf.getvalue())


def read_counts_csv(path) -> dict[str, tuple[int, int]]:
    """Parse a counts CSV, requiring exactly the 35 battery lotteries."""
    counts = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["series", "index", "k_count", "n_samples"]:
            raise InputParseError(f"bad header {header!r}", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise InputParseError(f"expected 4 fields, got {len(row)}", row_no)
            try:
                lid = f"{Series(row[0]).value}-{int(row[1])}"
                k, n = int(row[2]), int(row[3])
            except ValueError as e:
                raise InputParseError(str(e), row_no) from None
            if lid not in design.LOTTERY_IDS:
                raise InputParseError(f"unknown lottery {lid}", row_no)
            if lid in counts:
                raise InputParseError(f"duplicate lottery {lid}", row_no)
            if not 0 <= k <= n:
                raise InputParseError(f"{lid}: k_count {k} outside [0, {n}]", row_no)
            counts[lid] = (k, n)
    missing = [lid for lid in design.LOTTERY_IDS if lid not in counts]
    if missing:
        raise InputParseError(f"missing lotteries: {', '.join(missing)}")
    return {lid: counts[lid] for lid in design.LOTTERY_IDS}


def write_probabilities(path, table: ChoiceTable, pairs: Mapping | None = None) -> None:
    doc = {"round": table.round.value, "overrides": table.overrides(),
           "pairs": _pairs_doc(pairs)}
    _write_atomic(Path(path), _dump_json(doc))


def read_probabilities(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputParseError(f"{path}: {e}", e.lineno) from None
    doc.setdefault("round", Round.BASELINE.value)
    doc.setdefault("overrides", {})
    doc.setdefault("pairs", None)
    return doc


def _pairs_doc(pairs: Mapping | None):
    if not pairs:
        return None
    return {f"{s.value}-{o}": p.to_dict() for (s, o), p in sorted(pairs.items())}


# -- manifest ----------------------------------------------------------------

def _manifest_path(run: Path) -> Path:
    return run / "manifest.json"


def load_manifest(run: Path) -> dict:
    p = _manifest_path(run)
    if p.exists():
        return json.loads(p.read_text())
    return {"tool_version": __version__, "config": None, "stages": {}}


def _record(config: RunConfig, stage: str, artifacts: dict, seconds: float,
            parse_failures: dict) -> None:
    run = config.output_dir
    m = load_manifest(run)
    m["tool_version"] = __version__
    m["config"] = config.snapshot()
    entry = {"artifacts": {k: str(Path(v).relative_to(run)) for k, v in artifacts.items()},
             "seconds": round(seconds, 3)}
    if any(parse_failures.values()):
        entry["parse_failures"] = {k: v for k, v in sorted(parse_failures.items()) if v}
    m["stages"][stage] = entry
    _write_atomic(_manifest_path(run), _dump_json(m))


# -- stages --------------------------------------------------------------------

def _client(agent: AgentConfig):
    return ChatClient(agent) if agent.kind is AgentKind.LLM else None


def _battery_passes(config: RunConfig, stage: str, scheme: Round, assignment) -> tuple[dict, dict]:
    agent = config.agent
    tdir = config.output_dir / stage / "transcripts"
    client = _client(agent)

    def one(i):
        seed = derive_seed(config.master_seed, stage, i)
        path = tdir / f"pass_{i:04d}.jsonl" if config.transcripts else None
        return run_battery_pass(agent, scheme, assignment, seed, pass_id=i,
                                transcript_path=path, client=client, u_first=config.u_first)

    try:
        passes = run_passes(agent, [(i,) for i in range(config.n_samples)], one)
    finally:
        if client is not None:
            client.close()
    failures: dict[str, int] = {}
    for res in passes:
        for lid, out in res:
            if out.label is None:
                failures[lid] = failures.get(lid, 0) + 1
    return aggregate(passes), failures


def _estimate_and_write(config: RunConfig, stage: str, table: ChoiceTable, pairs) -> EstimationReport:
    out = config.output_dir / stage
    write_counts_csv(out / "counts.csv", table)
    write_probabilities(out / "probabilities.json", table, pairs)
    report = estimate(table, config.bootstrap_replicates, config.master_seed)
    report.extra["pairs"] = _pairs_doc(pairs)
    _write_atomic(out / "report.json", _dump_json(report.to_dict()))
    return report


def cmd_stage1(config: RunConfig) -> EstimationReport:
    """Baseline battery: passes, aggregation, fit, bootstrap, persistence."""
    t0 = time.monotonic()
    counts, failures = _battery_passes(config, "stage1", Round.BASELINE, None)
    table = ChoiceTable.from_counts(counts, Round.BASELINE)
    report = _estimate_and_write(config, "stage1", table, None)
    out = config.output_dir / "stage1"
    _record(config, "stage1", {"counts": out / "counts.csv", "report": out / "report.json",
                               "probabilities": out / "probabilities.json"},
            time.monotonic() - t0, failures)
    return report


def cmd_stage2(config: RunConfig) -> dict:
    """Sweep every marker; per-marker failures are recorded and skipped."""
    t0 = time.monotonic()
    agent = config.marker_agent or config.agent
    out = config.output_dir / "stage2"
    client = _client(agent)
    results, errors = {}, {}
    try:
        for marker in MARKERS:
            tpath = (out / "transcripts" / f"{marker.text.replace(' ', '_')}.jsonl"
                     if config.transcripts else None)
            try:
                sweep = run_sweep(agent, marker, config.n_samples, config.master_seed,
                                  transcript_path=tpath, client=client)
            except PTElicitError as e:
                log.error("sweep failed for %s: %s", marker.text, e)
                errors[marker.text] = str(e)
                continue
            results[marker.text] = interpolate_mapping(sweep, config.n_samples)
    finally:
        if client is not None:
            client.close()
    save_marker_map(out / "marker_map.json", results)
    failures = {}
    for text, r in results.items():
        for p, k, n in r.counts:
            if n < config.n_samples:
                failures[f"{text}@{p}"] = config.n_samples - n
    _record(config, "stage2", {"marker_map": out / "marker_map.json"}, time.monotonic() - t0,
            failures)
    if errors:
        m = load_manifest(config.output_dir)
        m["stages"]["stage2"]["errors"] = errors
        _write_atomic(_manifest_path(config.output_dir), _dump_json(m))
    return results


def cmd_round(config: RunConfig, round: Round | str, marker_map=None) -> EstimationReport:
    """Marker-substituted battery for one round, fitted on the marker-implied
    probabilities."""
    round = Round.parse(round) if isinstance(round, str) else round
    if round is Round.BASELINE:
        raise ConfigurationError("use stage1 for the baseline")
    t0 = time.monotonic()
    mpath = Path(marker_map) if marker_map else config.output_dir / "stage2" / "marker_map.json"
    if not mpath.exists():
        raise ConfigurationError(f"marker map not found: {mpath}")
    assignment = select_assignments(load_marker_map(mpath), round)
    stage = round.value
    counts, failures = _battery_passes(config, stage, round, assignment)
    overrides = effective_probabilities(round, assignment)
    table = ChoiceTable.from_counts(counts, round, overrides)
    report = _estimate_and_write(config, stage, table, assignment)
    out = config.output_dir / stage
    _record(config, stage, {"counts": out / "counts.csv", "report": out / "report.json",
                            "probabilities": out / "probabilities.json"},
            time.monotonic() - t0, failures)
    return report


def cmd_fit(counts_path, probs_path=None, replicates: int = 1000, master_seed: int = 0) -> EstimationReport:
    """Offline re-estimation from a counts CSV and optional probabilities sidecar."""
    counts = read_counts_csv(counts_path)
    if probs_path:
        doc = read_probabilities(probs_path)
    else:
        doc = {"round": Round.BASELINE.value, "overrides": {}, "pairs": None}
    rnd = Round.parse(doc["round"])
    table = ChoiceTable.from_counts(counts, rnd, doc["overrides"])
    report = estimate(table, replicates, master_seed)
    report.extra["pairs"] = doc["pairs"]
    return report


def _run_stage(config: RunConfig, stage: str):
    if stage == "stage1":
        return cmd_stage1(config)
    if stage == "stage2":
        return cmd_stage2(config)
    return cmd_round(config, stage)


def run_all(config: RunConfig) -> dict:
    return {stage: _run_stage(config, stage) for stage in ALL_STAGES if stage in config.stages}


# -- reporting -----------------------------------------------------------------

def _fmt(v):
    return "" if v is None else f"{v:.6g}"


def cmd_report(run_dir) -> str:
    """Write summary.txt, markers.csv and rounds.csv under ``<run>/report``."""
    run = Path(run_dir)
    mpath = _manifest_path(run)
    if not mpath.exists():
        raise ConfigurationError(f"missing artifact: {mpath}")
    manifest = json.loads(mpath.read_text())
    missing = [str(run / rel) for st in manifest["stages"].values()
               for rel in st["artifacts"].values() if not (run / rel).exists()]
    if missing:
        raise ConfigurationError(f"missing artifacts: {', '.join(missing)}")

    rows = []
    for stage in ("stage1", "round1", "round2", "round3", "round4"):
        rp = run / stage / "report.json"
        if stage in manifest["stages"] and rp.exists():
            rows.append((stage, EstimationReport.from_dict(json.loads(rp.read_text()))))

    out = run / "report"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["round"]
    for name in PARAM_NAMES:
        header += [name, f"{name}_ci_low", f"{name}_ci_high"]
    w.writerow(header + ["mae", "mcfadden_r2", "reliable"])
    for stage, rep in rows:
        line = ["baseline" if stage == "stage1" else stage]
        for name, v in zip(PARAM_NAMES, rep.params.as_tuple()):
            lo, hi = rep.ci[name] if rep.ci else (None, None)
            line += [_fmt(v), _fmt(lo), _fmt(hi)]
        w.writerow(line + [_fmt(rep.mae), _fmt(rep.mcfadden_r2), rep.reliable])
    _write_atomic(out / "rounds.csv", buf.getvalue())

    lines = [f"run: {run}", ""]
    markers = {}
    mm = run / "stage2" / "marker_map.json"
    if mm.exists():
        markers = load_marker_map(mm)
        order = sorted(markers.values(),
                       key=lambda r: (r.p_mapping is None, -(r.p_mapping or 0.0), r.marker.text))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["marker", "p_mapping", "diagnostic"])
        for r in order:
            w.writerow([r.marker.text, _fmt(r.p_mapping), r.diagnostic.value])
        _write_atomic(out / "markers.csv", buf.getvalue())
        lines.append("marker mapping (percent):")
        for r in order:
            pm = "   n/a" if r.p_mapping is None else f"{r.p_mapping:6.2f}"
            lines.append(f"  {r.marker.text:<18} {pm}  {r.diagnostic.value}")
        lines.append("")

    if rows:
        lines.append(f"{'round':<9} {'sigma':>7} {'lambda':>7} {'gamma':>7} {'MAE':>6} {'R2':>6}  reliable")
    for stage, rep in rows:
        s, l, g = rep.params.as_tuple()
        name = "baseline" if stage == "stage1" else stage
        lines.append(f"{name:<9} {s:7.3f} {l:7.3f} {g:7.3f} {rep.mae:6.3f} {rep.mcfadden_r2:6.3f}  "
                     f"{'yes' if rep.reliable else 'no'}")
        flagged = [n for n, f in rep.boundary_flags.items() if f]
        if flagged:
            lines.append(f"  warning: {', '.join(flagged)} on the parameter box boundary")
        if rep.ci:
            for n in PARAM_NAMES:
                lo, hi = rep.ci[n]
                lines.append(f"  {n:<6} 95% CI ({lo:.3f}, {hi:.3f})")
    for stage, st in manifest["stages"].items():
        if st.get("parse_failures"):
            total = sum(st["parse_failures"].values())
            lines.append(f"{stage}: {total} draws discarded after unparseable replies")
    text = "\n".join(lines) + "\n"
    _write_atomic(out / "summary.txt", text)
    return text


def simulation_config(sigma: float, lam: float, gamma: float, *, output_dir, n_samples=256,
                      bootstrap_replicates=1000, master_seed=0, sharpness=1.0,
                      marker_probs: Mapping[str, float] | None = None,
                      stages=ALL_STAGES, transcripts=True) -> RunConfig:
    """Synthetic PT agent for the battery, synthetic marker agent for stage 2
    (planted at the human marker probabilities unless given)."""
    from .pt_core import PTParams

    probs = dict(marker_probs) if marker_probs else {m.text: m.human_probability for m in MARKERS}
    return RunConfig(
        agent=AgentConfig.synthetic_pt(PTParams(sigma, lam, gamma)),
        marker_agent=AgentConfig.synthetic_marker(probs, sharpness),
        n_samples=n_samples, bootstrap_replicates=bootstrap_replicates,
        master_seed=master_seed, output_dir=Path(output_dir), stages=tuple(stages),
        transcripts=transcripts,
    )
