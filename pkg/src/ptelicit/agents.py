"""Choice-making agents and session mechanics.

Three agent kinds share one protocol: ``decide`` takes a :class:`Trial`
(prompt text plus the structured lottery behind it) and returns a label.
LLM agents only ever see the prompt; synthetic agents read the structure.
"""
from __future__ import annotations

import enum
import json
import logging
import os
import re
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np

from . import design
from .design import Lottery, Round, Series
from .errors import ConfigurationError, ExperimentError
from .pt_core import PTParams, Prospect, choice_probability, sigmoid

log = logging.getLogger(__name__)

HISTORY_CAPACITY = 15


class AgentKind(str, enum.Enum):
    LLM = "llm"
    SYNTHETIC_PT = "synthetic_pt"
    SYNTHETIC_MARKER = "synthetic_marker"


_KIND_FIELDS = {
    AgentKind.LLM: {"endpoint", "model_name", "credential_env"},
    AgentKind.SYNTHETIC_PT: {"params"},
    AgentKind.SYNTHETIC_MARKER: {"marker_probs", "sharpness"},
}
_KIND_SPECIFIC = set().union(*_KIND_FIELDS.values())


@dataclass
class AgentConfig:
    """Agent description. Only the fields belonging to ``kind`` may be set.

    ``credential_env`` names the environment variable holding the API key;
    the key itself never lives in config. ``marker_probs`` are probabilities
    in [0, 1] and ``sharpness`` is the logistic slope per percentage point.
    """

    kind: AgentKind
    endpoint: str | None = None
    model_name: str | None = None
    credential_env: str | None = None
    params: PTParams | None = None
    marker_probs: Mapping[str, float] | None = None
    sharpness: float | None = None
    temperature: float = 1.0
    max_retries: int = 3
    max_resamples: int = 2
    max_tokens: int = 8
    max_in_flight: int = 4
    min_interval: float = 0.0
    timeout: float = 60.0

    def __post_init__(self):
        self.kind = AgentKind(self.kind)
        required = _KIND_FIELDS[self.kind]
        missing = [f for f in sorted(required) if getattr(self, f) is None]
        if self.kind is AgentKind.LLM and "credential_env" in missing:
            missing.remove("credential_env")  # keyless local endpoints are fine
        if missing:
            raise ConfigurationError(f"{self.kind.value} agent needs {', '.join(missing)}")
        extra = [f for f in sorted(_KIND_SPECIFIC - required) if getattr(self, f) is not None]
        if extra:
            raise ConfigurationError(f"{self.kind.value} agent does not take {', '.join(extra)}")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be nonnegative")
        if self.max_retries < 0 or self.max_resamples < 0:
            raise ConfigurationError("retry counts must be nonnegative")
        if self.sharpness is not None and self.sharpness <= 0:
            raise ConfigurationError("sharpness must be positive")
        if self.marker_probs is not None:
            for k, v in self.marker_probs.items():
                if not 0.0 <= v <= 1.0:
                    raise ConfigurationError(f"marker probability for {k!r} outside [0, 1]")

    @classmethod
    def synthetic_pt(cls, params: PTParams, **kw) -> "AgentConfig":
        return cls(AgentKind.SYNTHETIC_PT, params=params, **kw)

    @classmethod
    def synthetic_marker(cls, marker_probs: Mapping[str, float], sharpness: float = 1.0, **kw):
        return cls(AgentKind.SYNTHETIC_MARKER, marker_probs=dict(marker_probs), sharpness=sharpness, **kw)

    @classmethod
    def from_dict(cls, d: Mapping) -> "AgentConfig":
        d = dict(d)
        if d.get("params") is not None and not isinstance(d["params"], PTParams):
            p = d["params"]
            d["params"] = (
                PTParams(p["sigma"], p["lam"], p["gamma"]) if isinstance(p, Mapping)
                else PTParams.from_sequence(p)
            )
        return cls(**d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for f in ("endpoint", "model_name", "credential_env", "marker_probs", "sharpness"):
            v = getattr(self, f)
            if v is not None:
                out[f] = dict(v) if f == "marker_probs" else v
        if self.params is not None:
            out["params"] = {"sigma": self.params.sigma, "lam": self.params.lam,
                             "gamma": self.params.gamma}
        for f in ("temperature", "max_retries", "max_resamples", "max_tokens",
                  "max_in_flight", "min_interval", "timeout"):
            out[f] = getattr(self, f)
        return out


@dataclass(frozen=True)
class Trial:
    """One question: rendered prompt plus what a synthetic agent needs.

    Battery trials carry the effective prospects; mapping trials carry the
    numeric probability of K and the marker describing U.
    """

    prompt: str
    item_id: str
    series: str
    index: int
    option_k: Prospect | None = None
    option_u: Prospect | None = None
    marker: str | None = None
    p_numeric: float | None = None


@dataclass(frozen=True)
class ChoiceOutcome:
    label: str | None  # "K", "U", or None when every attempt failed to parse
    raw_reply: str
    attempts: int


@dataclass
class SessionState:
    rng: np.random.Generator
    pass_id: int = 0
    seed: int | None = None
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_CAPACITY))
    transcript: list = field(default_factory=list)
    parse_failures: dict = field(default_factory=dict)

    @classmethod
    def new(cls, seed: int, pass_id: int = 0) -> "SessionState":
        return cls(rng=np.random.default_rng(seed), pass_id=pass_id, seed=seed)


# -- label parsing ---------------------------------------------------------

_BRACKET = re.compile(r"\[\s*([KU])\s*\]", re.IGNORECASE)
_WORD = re.compile(r"[A-Za-z]+")


def parse_label(reply: str) -> str | None:
    """Extract "K" or "U" from a reply, or None if absent or ambiguous."""
    found = {m.upper() for m in _BRACKET.findall(reply or "")}
    if len(found) == 1:
        return found.pop()
    if len(found) > 1:
        return None
    m = _WORD.search(reply or "")
    if m and m.group(0).upper() in ("K", "U"):
        return m.group(0).upper()
    return None


# -- chat-completions transport -------------------------------------------

class ChatClient:
    """Minimal chat-completions client with retry, backoff and pacing."""

    def __init__(self, agent: AgentConfig, transport=None):
        import httpx

        self.agent = agent
        headers = {"Content-Type": "application/json"}
        if agent.credential_env:
            key = os.environ.get(agent.credential_env)
            if not key:
                raise ConfigurationError(f"environment variable {agent.credential_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(headers=headers, timeout=agent.timeout, transport=transport)
        self._lock = threading.Lock()
        self._last = 0.0
        self._gate = threading.BoundedSemaphore(max(1, agent.max_in_flight))

    def _pace(self):
        if self.agent.min_interval <= 0:
            return
        with self._lock:
            wait = self._last + self.agent.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()

    def complete(self, messages: list[dict], item_id: str | None = None) -> str:
        body = {
            "model": self.agent.model_name,
            "messages": messages,
            "temperature": self.agent.temperature,
            "max_tokens": self.agent.max_tokens,
        }
        last_err = None
        for attempt in range(self.agent.max_retries + 1):
            if attempt:
                time.sleep(min(30.0, 0.5 * 2 ** (attempt - 1)))
            self._pace()
            try:
                with self._gate:
                    r = self._http.post(self.agent.endpoint, json=body)
            except Exception as e:  # transport-level failure, retry
                last_err = e
                continue
            if r.status_code == 429 or r.status_code >= 500:
                last_err = RuntimeError(f"HTTP {r.status_code}")
                continue
            if r.status_code >= 400:
                raise ExperimentError(f"HTTP {r.status_code}: {r.text[:200]}", item_id)
            try:
                return r.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as e:
                last_err = e
        raise ExperimentError(f"request failed after retries: {last_err}", item_id)

    def close(self):
        self._http.close()


def build_messages(session: SessionState, prompt: str, intro: str = design.INTRO) -> list[dict]:
    msgs = [{"role": "system", "content": intro}]
    for p, r in session.history:
        msgs.append({"role": "user", "content": p})
        msgs.append({"role": "assistant", "content": r})
    msgs.append({"role": "user", "content": prompt})
    return msgs


# -- decisions -------------------------------------------------------------

def _synthetic_reply(agent: AgentConfig, session: SessionState, trial: Trial) -> str:
    if agent.kind is AgentKind.SYNTHETIC_PT:
        if trial.option_k is None or trial.option_u is None:
            raise ConfigurationError("synthetic PT agent needs both prospects on the trial")
        pk = choice_probability(trial.option_k, trial.option_u, agent.params)
    else:
        if trial.marker is None or trial.p_numeric is None:
            raise ConfigurationError("synthetic marker agent only answers mapping trials")
        try:
            q = agent.marker_probs[trial.marker]
        except KeyError:
            raise ConfigurationError(f"no planted probability for marker {trial.marker!r}") from None
        pk = sigmoid(agent.sharpness * 100.0 * (trial.p_numeric - q))
    return design.LABEL_K if session.rng.random() < pk else design.LABEL_U


def decide(agent: AgentConfig, session: SessionState, trial: Trial, client: ChatClient | None = None) -> ChoiceOutcome:
    """Ask the agent one question; retries unparseable replies.

    Successful exchanges enter the rolling history (at most 15 kept).
    """
    if not trial.prompt:
        raise ConfigurationError("empty prompt")
    reply, attempts = "", 0
    label = None
    for attempts in range(1, agent.max_retries + 2):
        if agent.kind is AgentKind.LLM:
            if client is None:
                raise ConfigurationError("LLM agent needs a ChatClient")
            reply = client.complete(build_messages(session, trial.prompt), trial.item_id)
        else:
            reply = _synthetic_reply(agent, session, trial)
        label = parse_label(reply)
        if label is not None:
            break
    if label is not None:
        session.history.append((trial.prompt, reply))
    assert len(session.history) <= HISTORY_CAPACITY
    return ChoiceOutcome(label, reply, attempts)


def present(agent, session, trial, client=None, transcript=None) -> ChoiceOutcome:
    """``decide`` plus the discard-and-resample policy for parse failures.

    A draw whose every retry fails to parse is tallied and asked afresh, at
    most ``max_resamples`` times; if it still fails the returned outcome has
    ``label=None`` and the caller drops it from the counts.
    """
    for _ in range(agent.max_resamples + 1):
        out = decide(agent, session, trial, client)
        if transcript is not None:
            transcript.append(_transcript_line(session, trial, out))
        if out.label is not None:
            return out
        session.parse_failures[trial.item_id] = session.parse_failures.get(trial.item_id, 0) + 1
        log.warning("unparseable reply for %s: %r", trial.item_id, out.raw_reply[:80])
    return out


def _transcript_line(session, trial, out) -> dict:
    line = {
        "pass_id": session.pass_id,
        "seed": session.seed,
        "lottery_series": trial.series,
        "lottery_index": trial.index,
        "prompt": trial.prompt,
        "raw_reply": out.raw_reply,
        "label": out.label,
        "attempts": out.attempts,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if trial.marker is not None:
        line["marker"] = trial.marker
    return line


def write_transcript(path, lines) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    os.replace(tmp, path)


# -- battery passes --------------------------------------------------------

def effective_battery(scheme: Round, marker_assignment: Mapping | None = None) -> list[Lottery]:
    """Battery with marked options carrying their normalized marker probabilities."""
    out = []
    for lot in design.battery():
        overrides = {}
        for opt in ("K", "U"):
            slot = (lot.series, opt)
            if slot in scheme.marked_slots:
                if not marker_assignment or slot not in marker_assignment:
                    raise ConfigurationError(
                        f"{scheme.value} needs a marker pair for {lot.series.value}-{opt}"
                    )
                overrides[opt] = design.marked_probabilities(lot.option(opt), marker_assignment[slot])
        out.append(design.with_probabilities(lot, overrides) if overrides else lot)
    return out


def battery_trials(scheme: Round, marker_assignment, seed, *, u_first=False) -> list[Trial]:
    """The 35 trials of one session, in that session's random order."""
    eff = {l.id: l for l in effective_battery(scheme, marker_assignment)}
    trials = []
    for pos, lid in enumerate(design.session_order(seed), start=1):
        orig = design.lottery_by_id(lid)
        pairs = {
            opt: marker_assignment[(orig.series, opt)]
            for opt in ("K", "U")
            if (orig.series, opt) in scheme.marked_slots
        }
        prompt = design.render_decision_prompt(orig, pos, scheme, pairs or None, u_first=u_first)
        lot = eff[lid]
        trials.append(Trial(prompt, lid, orig.series.value, orig.index, lot.option_k, lot.option_u))
    return trials


def run_battery_pass(
    agent: AgentConfig,
    scheme: Round = Round.BASELINE,
    marker_assignment: Mapping | None = None,
    seed: int = 0,
    *,
    pass_id: int = 0,
    transcript_path=None,
    client: ChatClient | None = None,
    u_first: bool = False,
) -> list[tuple[str, ChoiceOutcome]]:
    """One session: all 35 lotteries once, in ``session_order(seed)``.

    History starts empty and the session RNG is seeded with ``seed``.
    """
    session = SessionState.new(seed, pass_id)
    lines = [] if transcript_path is not None else None
    results = []
    try:
        for trial in battery_trials(scheme, marker_assignment, seed, u_first=u_first):
            results.append((trial.item_id, present(agent, session, trial, client, lines)))
    finally:
        # written even when a transport error aborts the pass
        if transcript_path is not None:
            write_transcript(transcript_path, lines)
    return results


def aggregate(passes) -> dict[str, tuple[int, int]]:
    """Fold passes into ``{lottery_id: (k_count, n_valid)}`` in battery order."""
    k = {lid: 0 for lid in design.LOTTERY_IDS}
    n = {lid: 0 for lid in design.LOTTERY_IDS}
    for results in passes:
        for lid, out in results:
            if out.label is None:
                continue
            n[lid] += 1
            k[lid] += out.label == "K"
    return {lid: (k[lid], n[lid]) for lid in design.LOTTERY_IDS}


def counts_from_transcripts(paths) -> dict[str, tuple[int, int]]:
    """Re-aggregate battery counts from persisted JSONL transcripts."""
    k = {lid: 0 for lid in design.LOTTERY_IDS}
    n = {lid: 0 for lid in design.LOTTERY_IDS}
    for path in paths:
        with open(path) as fh:
            for raw in fh:
                rec = json.loads(raw)
                if rec["label"] is None:
                    continue
                lid = f"{rec['lottery_series']}-{rec['lottery_index']}"
                n[lid] += 1
                k[lid] += rec["label"] == "K"
    return {lid: (k[lid], n[lid]) for lid in design.LOTTERY_IDS}


def run_passes(agent, jobs, worker, max_workers=None):
    """Run independent sessions; threaded only for LLM agents.

    ``jobs`` is a list of argument tuples for ``worker``; results come back
    in job order regardless of completion order.
    """
    if agent.kind is not AgentKind.LLM or len(jobs) <= 1:
        return [worker(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=max_workers or agent.max_in_flight) as ex:
        return list(ex.map(lambda j: worker(*j), jobs))
