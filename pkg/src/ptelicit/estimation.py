"""Maximum-likelihood fitting of (sigma, lambda, gamma) from choice counts,
parametric bootstrap intervals and fit statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numba
import numpy as np
from scipy.optimize import minimize

from . import design
from .design import Lottery, Round
from .errors import CIError, ContractError, EstimationError
from .pt_core import PARAM_LOWER, PARAM_NAMES, PARAM_UPPER, PTParams
from .seeding import derive_seed

PROB_CLAMP = 1e-12
MAE_MAX = 0.20
R2_MIN = 0.10
BOUNDARY_TOL = 1e-6
FATOL = 1e-8
XATOL = 1e-7
MAX_ITER = 2000
DEFAULT_REPLICATES = 1000
MAX_FAILURE_RATE = 0.05

# Multi-start points: corners of a plausible inner region, jittered once
# with a fixed generator so fits are reproducible.
_START_BOX = np.array([[0.3, 1.2], [0.8, 3.0], [0.5, 1.5]])
_START_JITTER = 0.05


def default_starts() -> np.ndarray:
    corners = np.array(
        [[_START_BOX[0, a], _START_BOX[1, b], _START_BOX[2, c]]
         for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    )
    rng = np.random.default_rng(20240601)
    return corners * (1.0 + rng.uniform(-_START_JITTER, _START_JITTER, corners.shape))


# -- likelihood kernel -----------------------------------------------------
# Mirrors pt_core.value / weight / prospect_utility; tests hold them equal.

@numba.njit(cache=True)
def _v(x, s, l):
    if x >= 0.0:
        return x**s
    return -l * (-x) ** s


@numba.njit(cache=True)
def _w(p, g):
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    pg = p**g
    return pg / (pg + (1.0 - p) ** g) ** (1.0 / g)


@numba.njit(cache=True)
def _u(x, p, y, q, s, l, g):
    vx = _v(x, s, l)
    vy = _v(y, s, l)
    if x < 0.0 and y > 0.0:
        return _w(p, g) * vx + _w(q, g) * vy
    return vy + _w(p, g) * (vx - vy)


@numba.njit(cache=True)
def _probs(theta, D):
    s, l, g = theta[0], theta[1], theta[2]
    out = np.empty(D.shape[0])
    for i in range(D.shape[0]):
        d = _u(D[i, 0], D[i, 1], D[i, 2], D[i, 3], s, l, g) - _u(
            D[i, 4], D[i, 5], D[i, 6], D[i, 7], s, l, g
        )
        if d >= 0.0:
            out[i] = 1.0 / (1.0 + math.exp(-d))
        else:
            e = math.exp(d)
            out[i] = e / (1.0 + e)
    return out


@numba.njit(cache=True)
def _nll(theta, D, k, n):
    pr = _probs(theta, D)
    tot = 0.0
    for i in range(D.shape[0]):
        p = min(max(pr[i], 1e-12), 1.0 - 1e-12)
        tot -= k[i] * math.log(p) + (n[i] - k[i]) * math.log(1.0 - p)
    return tot


# -- data ------------------------------------------------------------------

@dataclass
class ChoiceTable:
    """K-choice counts per lottery together with the probabilities in force.

    ``lotteries`` are the *effective* lotteries: for marker rounds, marked
    options already carry their normalized marker probabilities.
    """

    lotteries: tuple[Lottery, ...]
    k: np.ndarray
    n: np.ndarray
    round: Round = Round.BASELINE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lotteries = tuple(self.lotteries)
        self.k = np.asarray(self.k, dtype=np.int64)
        self.n = np.asarray(self.n, dtype=np.int64)
        if not (len(self.lotteries) == len(self.k) == len(self.n)):
            raise ContractError("lotteries, k and n must have equal length")
        bad = np.flatnonzero((self.k < 0) | (self.k > self.n))
        if bad.size:
            i = bad[0]
            raise ContractError(
                f"{self.lotteries[i].id}: k_count {self.k[i]} outside [0, {self.n[i]}]"
            )

    @classmethod
    def from_counts(cls, counts: Mapping[str, tuple[int, int]], round: Round = Round.BASELINE,
                    overrides: Mapping[str, Mapping[str, Sequence[float]]] | None = None,
                    meta: dict | None = None) -> "ChoiceTable":
        """Build from ``{lottery_id: (k, n)}``; ``overrides`` maps lottery id
        to ``{"K": (p, q), "U": (p, q)}`` for options whose probabilities
        differ from the battery."""
        overrides = overrides or {}
        lots, ks, ns = [], [], []
        for lid, (k, n) in counts.items():
            lot = design.lottery_by_id(lid)
            if lid in overrides:
                lot = design.with_probabilities(lot, {o: tuple(v) for o, v in overrides[lid].items()})
            lots.append(lot)
            ks.append(k)
            ns.append(n)
        return cls(tuple(lots), np.array(ks), np.array(ns), round, dict(meta or {}))

    @property
    def rows(self) -> list[tuple[str, int, int]]:
        return [(l.id, int(k), int(n)) for l, k, n in zip(self.lotteries, self.k, self.n)]

    @property
    def effective_probabilities(self) -> dict[str, dict[str, list[float]]]:
        return {
            l.id: {"K": [l.option_k.p, l.option_k.q], "U": [l.option_u.p, l.option_u.q]}
            for l in self.lotteries
        }

    def overrides(self) -> dict[str, dict[str, list[float]]]:
        """Only the options whose probabilities differ from the battery."""
        out = {}
        for l in self.lotteries:
            orig = design.lottery_by_id(l.id)
            d = {}
            for o in ("K", "U"):
                P, O = l.option(o), orig.option(o)
                if (P.p, P.q) != (O.p, O.q):
                    d[o] = [P.p, P.q]
            if d:
                out[l.id] = d
        return out

    @cached_property
    def design_matrix(self) -> np.ndarray:
        return np.array(
            [[l.option_k.x, l.option_k.p, l.option_k.y, l.option_k.q,
              l.option_u.x, l.option_u.p, l.option_u.y, l.option_u.q] for l in self.lotteries],
            dtype=float,
        )

    def with_counts(self, k) -> "ChoiceTable":
        return ChoiceTable(self.lotteries, k, self.n, self.round, self.meta)

    @property
    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.k / self.n


def predicted_probabilities(table: ChoiceTable, params: PTParams) -> np.ndarray:
    return _probs(params.as_array(), table.design_matrix)


def negative_log_likelihood(table: ChoiceTable, params: PTParams) -> float:
    """Binomial-count form of the summed per-trial Bernoulli log-likelihood."""
    return float(_nll(params.as_array(), table.design_matrix,
                      table.k.astype(float), table.n.astype(float)))


def null_log_likelihood(table: ChoiceTable) -> float:
    return -float(table.n.sum()) * math.log(2.0)


def mcfadden_r2(table: ChoiceTable, fitted_nll: float) -> float:
    if fitted_nll < 0:
        raise ContractError("fitted_nll must be nonnegative")
    return 1.0 - (-fitted_nll) / null_log_likelihood(table)


def mean_absolute_error(table: ChoiceTable, params: PTParams) -> float:
    """Mean over lotteries of |observed K rate - predicted K probability|.

    Lotteries with no valid draws are skipped.
    """
    ok = table.n > 0
    pred = predicted_probabilities(table, params)
    return float(np.mean(np.abs(table.k[ok] / table.n[ok] - pred[ok])))


def is_reliable(mae: float, r2: float) -> bool:
    return mae <= MAE_MAX and r2 >= R2_MIN


@dataclass
class EstimationReport:
    params: PTParams
    nll: float
    mcfadden_r2: float
    mae: float
    converged: bool
    boundary_flags: dict[str, bool]
    reliable: bool
    ci: dict[str, tuple[float, float]] | None = None
    bootstrap_failures: int = 0
    replicates: int = 0
    master_seed: int | None = None
    round: str = Round.BASELINE.value
    starts_converged: int = 0
    n_starts: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from . import __version__

        d = {
            "tool_version": __version__,
            "round": self.round,
            "params": dict(zip(PARAM_NAMES, self.params.as_tuple())),
            "ci": None if self.ci is None else {k: list(v) for k, v in self.ci.items()},
            "mcfadden_r2": self.mcfadden_r2,
            "mae": self.mae,
            "nll": self.nll,
            "converged": self.converged,
            "boundary_flags": dict(self.boundary_flags),
            "reliable": self.reliable,
            "bootstrap": {"replicates": self.replicates, "failures": self.bootstrap_failures,
                          "master_seed": self.master_seed},
            "optimizer": {"starts": self.n_starts, "converged_starts": self.starts_converged},
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EstimationReport":
        known = {"tool_version", "round", "params", "ci", "mcfadden_r2", "mae", "nll",
                 "converged", "boundary_flags", "reliable", "bootstrap", "optimizer"}
        p = d["params"]
        return cls(
            params=PTParams(p["sigma"], p["lam"], p["gamma"]),
            nll=d["nll"], mcfadden_r2=d["mcfadden_r2"], mae=d["mae"],
            converged=d["converged"], boundary_flags=dict(d["boundary_flags"]),
            reliable=d["reliable"],
            ci=None if d.get("ci") is None else {k: tuple(v) for k, v in d["ci"].items()},
            bootstrap_failures=d["bootstrap"]["failures"],
            replicates=d["bootstrap"]["replicates"],
            master_seed=d["bootstrap"]["master_seed"],
            round=d["round"],
            starts_converged=d["optimizer"]["converged_starts"],
            n_starts=d["optimizer"]["starts"],
            extra={k: v for k, v in d.items() if k not in known},
        )


# -- fitting ---------------------------------------------------------------

_BOUNDS = [(PARAM_LOWER, PARAM_UPPER)] * 3


def _minimize(table: ChoiceTable, starts) -> tuple[np.ndarray, float, int, list]:
    D = table.design_matrix
    k = table.k.astype(float)
    n = table.n.astype(float)
    best_x, best_f, n_ok, diag = None, math.inf, 0, []
    for x0 in np.atleast_2d(starts):
        x0 = np.clip(np.asarray(x0, dtype=float), PARAM_LOWER, PARAM_UPPER)
        res = minimize(_nll, x0, args=(D, k, n), method="Nelder-Mead", bounds=_BOUNDS,
                       options={"xatol": XATOL, "fatol": FATOL, "maxiter": MAX_ITER,
                                "maxfev": 4 * MAX_ITER})
        diag.append({"start": x0.tolist(), "x": res.x.tolist(), "nll": float(res.fun),
                     "success": bool(res.success), "message": str(res.message)})
        if not res.success or not np.isfinite(res.fun):
            continue
        n_ok += 1
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    if best_x is None:
        raise EstimationError("no optimizer start converged", {"starts": diag})
    return np.clip(best_x, PARAM_LOWER, PARAM_UPPER), best_f, n_ok, diag


def fit(table: ChoiceTable, starts=None) -> EstimationReport:
    """Multi-start bounded Nelder-Mead MLE; intervals are left empty."""
    starts = default_starts() if starts is None else np.atleast_2d(starts)
    x, f, n_ok, _ = _minimize(table, starts)
    params = PTParams.from_sequence(x)
    r2 = mcfadden_r2(table, f)
    mae = mean_absolute_error(table, params)
    flags = {
        name: bool(min(v - PARAM_LOWER, PARAM_UPPER - v) <= BOUNDARY_TOL)
        for name, v in zip(PARAM_NAMES, x)
    }
    return EstimationReport(
        params=params, nll=f, mcfadden_r2=r2, mae=mae, converged=True,
        boundary_flags=flags, reliable=is_reliable(mae, r2), round=table.round.value,
        starts_converged=n_ok, n_starts=len(starts),
    )


@dataclass
class BootstrapResult:
    ci: dict[str, tuple[float, float]]
    failures: int
    estimates: np.ndarray  # (successful replicates, 3), in replicate order


def bootstrap_ci(table: ChoiceTable, point: PTParams, replicates: int = DEFAULT_REPLICATES,
                 master_seed: int = 0, starts=None) -> BootstrapResult:
    """Parametric percentile bootstrap.

    Each replicate redraws every lottery's count as Binomial(n_i, p_hat_i)
    under ``point`` and refits. Refits start from ``point`` and from the
    centre of the default start region.
    """
    if replicates < 100:
        raise ContractError("bootstrap needs at least 100 replicates")
    if starts is None:
        starts = np.vstack([point.as_array(), _START_BOX.mean(axis=1)])
    p_hat = predicted_probabilities(table, point)
    est, failures = [], 0
    for r in range(replicates):
        rng = np.random.default_rng(derive_seed(master_seed, "boot", r))
        k_star = rng.binomial(table.n, p_hat)
        try:
            x, *_ = _minimize(table.with_counts(k_star), starts)
        except EstimationError:
            failures += 1
            continue
        est.append(x)
    if failures > MAX_FAILURE_RATE * replicates:
        raise CIError(f"{failures} of {replicates} bootstrap refits failed", failures)
    est = np.array(est)
    lo, hi = np.quantile(est, [0.025, 0.975], axis=0)
    ci = {name: (float(lo[i]), float(hi[i])) for i, name in enumerate(PARAM_NAMES)}
    return BootstrapResult(ci, failures, est)


def estimate(table: ChoiceTable, replicates: int = DEFAULT_REPLICATES, master_seed: int = 0,
             starts=None) -> EstimationReport:
    """Point fit followed by bootstrap intervals."""
    rep = fit(table, starts)
    if replicates:
        boot = bootstrap_ci(table, rep.params, replicates, master_seed)
        rep.ci = boot.ci
        rep.bootstrap_failures = boot.failures
        rep.replicates = replicates
    rep.master_seed = master_seed
    return rep
