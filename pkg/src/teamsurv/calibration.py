"""In-control ATS estimation, threshold search and threshold surrogates.

Threshold search relies on a property of every plan in this package: the
excess stream does not depend on the threshold, and a run signals at the
first t with excess_t > h.  So for a fixed set of simulated streams the
in-control run length of each replication is the first time the running
maximum of its excess passes h.  :class:`InControlPaths` records the running
maximum of each stream once and answers ATS(h) for any h, simulating further
only when a probe asks for a larger h than any seen so far.  This is common
random numbers taken to the limit: every probe of the bisection sees
identical streams, and ATS(h) is exactly nondecreasing in h.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import ExcessRunner
from .errors import (
    BudgetExhausted,
    InvalidHorizon,
    NoBracket,
    RankDeficient,
    TooFewSamples,
    ValidationError,
    ZeroReps,
)
from .simharness import Scenario, ScenarioStream, rep_rng
from .types import BASES, AtsReport, SurrogateModel, SurveillancePlan, design_matrix

log = logging.getLogger(__name__)

DEFAULT_PROBE_REPS = 500
HORIZON_FACTOR = 20


class InControlPaths:
    """Running-maximum records of in-control excess streams, one per replication.

    ``offset`` subtracts the plan's own per-step threshold from the excess,
    which turns a plan with a varying threshold into one that signals when
    the adjusted excess passes 0.
    """

    def __init__(self, plan: SurveillancePlan, scenario: Scenario, reps: int, seed: int,
                 horizon: int, offset: bool = False):
        if reps < 1:
            raise ZeroReps("reps must be >= 1")
        if horizon < 1:
            raise InvalidHorizon("horizon must be >= 1")
        self.plan = plan
        self.scenario = scenario.in_control()
        self.reps = reps
        self.seed = seed
        self.horizon = horizon
        self.offset = offset
        self._rec_t: list[list[int]] = [[] for _ in range(reps)]
        self._rec_v: list[list[float]] = [[] for _ in range(reps)]
        self._cap = np.full(reps, -math.inf)
        self._done = np.zeros(reps, dtype=bool)
        self.steps_simulated = 0

    def _simulate(self, r: int, cap: float) -> None:
        """(Re)run replication r until its running max exceeds cap or the horizon."""
        stream = ScenarioStream(self.scenario, rep_rng(self.seed, r))
        y, lam, m = stream.next()
        runner = ExcessRunner(self.plan, lam, means_constant=True)
        rec_t, rec_v = [], []
        best = -math.inf
        t = 1
        while True:
            e = runner.step(y, lam, m)
            if self.offset:
                e -= runner.threshold(m)
            if e > best:
                best = e
                rec_t.append(t)
                rec_v.append(e)
                if best > cap:
                    break
            if t >= self.horizon:
                self._done[r] = True
                break
            y, lam, m = stream.next()
            t += 1
        self.steps_simulated += t
        self._rec_t[r] = rec_t
        self._rec_v[r] = rec_v
        self._cap[r] = cap

    def run_lengths(self, h: float) -> tuple[np.ndarray, int]:
        """(time to first signal per replication, number censored) at level h."""
        times = np.empty(self.reps)
        censored = 0
        if h == math.inf:
            return np.full(self.reps, float(self.horizon)), self.reps
        for r in range(self.reps):
            if not self._done[r] and self._cap[r] < h:
                # overshoot the request a little so nearby probes need no rerun
                self._simulate(r, h + 0.1 * abs(h) + 1e-9)
            vals = self._rec_v[r]
            i = bisect.bisect_right(vals, h)
            if i < len(vals):
                times[r] = self._rec_t[r][i]
            else:
                times[r] = self.horizon
                censored += 1
        return times, censored

    def report(self, h: float) -> AtsReport:
        times, censored = self.run_lengths(h)
        return AtsReport.from_times(times, self.horizon, censored, self.reps - censored)


def _uses_offset(plan: SurveillancePlan) -> bool:
    return plan.surrogate is not None and not plan.statistic.adaptive


def estimate_in_control_ats(plan: SurveillancePlan, generator: Scenario, reps: int,
                            horizon: int | None = None, seed: int = 0) -> AtsReport:
    """Mean time to the first (false) signal on in-control streams.

    Runs that never signal are counted at ``horizon`` (default 20 x the plan's
    target ATS) and reported in ``censored``; this biases the mean low when
    censoring is common.
    """
    if reps < 1:
        raise ZeroReps("reps must be >= 1")
    horizon = int(HORIZON_FACTOR * plan.target_ats) if horizon is None else int(horizon)
    if horizon < 1:
        raise InvalidHorizon("horizon must be >= 1")
    offset = _uses_offset(plan)
    h = 0.0 if offset else plan.threshold
    if h is None:
        raise ValidationError("plan has no threshold")
    paths = InControlPaths(plan, generator, reps, seed, horizon, offset=offset)
    return paths.report(h)


@dataclass
class CalibrationResult:
    h: float
    report: AtsReport
    probes: list[tuple[float, float]] = field(default_factory=list)


def calibrate_threshold(plan: SurveillancePlan, generator: Scenario, target_ats: float | None = None,
                        tol_frac: float = 0.05, reps: int = DEFAULT_PROBE_REPS, seed: int = 0,
                        horizon: int | None = None, h_start: float = 0.1,
                        max_probes: int = 80) -> CalibrationResult:
    """Find a constant threshold h giving the target in-control ATS.

    Secant bracketing from ``h_start`` followed by bisection.  All probes
    share the same replications.  For the adaptive scans h is the threshold
    adjustment.
    """
    target = plan.target_ats if target_ats is None else float(target_ats)
    if not target >= 2:
        raise ValidationError("target ATS must be >= 2")
    if not 0 < tol_frac <= 0.5:
        raise ValidationError("tol_frac must lie in (0, 0.5]")
    horizon = int(HORIZON_FACTOR * target) if horizon is None else int(horizon)
    if horizon < target:
        raise InvalidHorizon("horizon must be at least the target ATS")
    probe_plan = replace(plan, surrogate=plan.surrogate if plan.statistic.adaptive else None,
                         threshold=0.0)
    paths = InControlPaths(probe_plan, generator, reps, seed, horizon)
    lo_band, hi_band = target * (1 - tol_frac), target * (1 + tol_frac)
    probes = []

    def ats(h):
        rep = paths.report(h)
        probes.append((h, rep.mean_tts))
        if len(probes) > max_probes:
            raise BudgetExhausted(f"no threshold within tolerance after {max_probes} probes")
        return rep

    r0 = ats(0.0)
    if r0.mean_tts > hi_band:
        raise NoBracket(f"ATS at h=0 is already {r0.mean_tts:.1f} > target {target}")
    if lo_band <= r0.mean_tts:
        return CalibrationResult(0.0, r0, probes)
    # Bracket from below.  Overshooting is what costs (every stream must run
    # until its maximum passes h), so steps follow a secant on log ATS aimed at
    # the target, growing h by a factor between 1.1 and 2.
    lo, ats_lo, hi = 0.0, r0.mean_tts, max(h_start, 1e-6)
    while True:
        rep = ats(hi)
        if rep.mean_tts >= lo_band:
            break
        slope = (math.log(rep.mean_tts) - math.log(ats_lo)) / (hi - lo)
        step_to = hi + (math.log(target) - math.log(rep.mean_tts)) / slope if slope > 0 else 2 * hi
        lo, ats_lo, hi = hi, rep.mean_tts, min(max(step_to, 1.1 * hi), 2 * hi)
    while not (lo_band <= rep.mean_tts <= hi_band):
        mid = 0.5 * (lo + hi)
        rep_mid = ats(mid)
        if rep_mid.mean_tts < lo_band:
            lo = mid
        else:
            hi, rep = mid, rep_mid
        if hi - lo < 1e-9 * max(1.0, hi):
            break
    if not (lo_band <= rep.mean_tts <= hi_band):
        raise BudgetExhausted(
            f"ATS jumps across the tolerance band near h={hi:.6g}; increase reps or tol_frac"
        )
    log.debug("calibrated h=%.5f ATS=%.2f after %d probes", hi, rep.mean_tts, len(probes))
    return CalibrationResult(hi, rep, probes)


# ---------------------------------------------------------------------------
# surrogates


@dataclass
class CalibrationGrid:
    n_values: Sequence[int]
    lam_values: Sequence[float]
    alpha: float = 0.10
    target_ats: float = 100.0
    reps: int = DEFAULT_PROBE_REPS
    horizon: int | None = None
    tol_frac: float = 0.03

    def __post_init__(self):
        if self.reps < 1:
            raise ZeroReps("reps per cell must be >= 1")
        if self.horizon is not None and self.horizon < self.target_ats:
            raise InvalidHorizon("horizon must be at least the target ATS")
        if any(lam <= 0 for lam in self.lam_values):
            raise ValidationError("grid lambda values must be positive")

    def cells(self):
        return [(int(n), float(lam)) for n in self.n_values for lam in self.lam_values]

    def to_dict(self):
        d = asdict(self)
        d["n_values"] = [int(n) for n in self.n_values]
        d["lam_values"] = [float(x) for x in self.lam_values]
        return d


def calibrate_grid(grid: CalibrationGrid, plan: SurveillancePlan, seed: int = 0,
                   progress=None) -> list[tuple[int, float, float]]:
    """Calibrated h for each (n, lambda) cell on homogeneous in-control networks."""
    plan = replace(plan, alpha=grid.alpha, target_ats=grid.target_ats, surrogate=None)
    samples = []
    for idx, (n, lam) in enumerate(grid.cells()):
        sc = Scenario("homogeneous", n=n, lam=lam)
        res = calibrate_threshold(plan, sc, grid.target_ats, grid.tol_frac, grid.reps,
                                  seed=int(np.random.SeedSequence([seed, idx]).generate_state(1)[0]),
                                  horizon=grid.horizon)
        samples.append((n, lam, res.h))
        if progress is not None:
            progress(n, lam, res)
    return samples


def _fit(kind: str, samples: Iterable[tuple[float, float, float]]) -> SurrogateModel:
    arr = np.asarray(list(samples), dtype=float).reshape(-1, 3)
    n, lam, h = arr[:, 0], arr[:, 1], arr[:, 2]
    p = len(BASES[kind][1])
    if len(arr) < p:
        raise TooFewSamples(f"{kind} needs at least {p} samples, got {len(arr)}")
    if np.any(h <= 0) or np.any(lam <= 0) or np.any(n <= 0):
        raise ValidationError("samples need positive n, lambda and h")
    X = design_matrix(kind, lam, n)
    y = np.log(h) if kind == "HD_LOG" else 1.0 / h
    # equilibrate columns; raw powers of n span many orders of magnitude
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    Xs = X / norms
    rank = np.linalg.matrix_rank(Xs)
    if rank < p:
        raise RankDeficient(f"{kind} design has rank {rank} < {p}; widen the (n, lambda) grid")
    beta_s, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    beta = beta_s / norms
    resid = y - X @ beta
    dof = len(y) - p
    se = float(np.sqrt(resid @ resid / dof)) if dof > 0 else 0.0
    fitted = np.exp(X @ beta) if kind == "HD_LOG" else 1.0 / (X @ beta)
    corr = float(np.corrcoef(fitted, h)[0, 1]) if len(h) > 1 and np.ptp(h) > 0 else float("nan")
    return SurrogateModel(kind, beta, residual_se=se, correlation=corr)


def fit_hd_surrogate(samples) -> SurrogateModel:
    """Least squares fit of log(h) on the 12-term dominant-leader basis."""
    return _fit("HD_LOG", samples)


def fit_hg_surrogate(samples) -> SurrogateModel:
    """Least squares fit of 1/h on the 20-term collaborative basis."""
    return _fit("HG_RECIP", samples)


def predict_threshold(model: SurrogateModel, lam, n) -> float | np.ndarray:
    hull = model.grid or {}
    ns, ls = hull.get("n_values"), hull.get("lam_values")
    if ns and ls:
        lam_a, n_a = np.asarray(lam), np.asarray(n)
        if (np.any(n_a < min(ns)) or np.any(n_a > max(ns)) or np.any(lam_a < min(ls))
                or np.any(lam_a > max(ls))):
            warnings.warn("surrogate queried outside its fitted (n, lambda) range", stacklevel=2)
    h = model.predict(lam, n)
    return float(h) if np.ndim(h) == 0 else h


def save_surrogate(model: SurrogateModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_surrogate(path) -> SurrogateModel:
    return SurrogateModel.from_dict(json.loads(Path(path).read_text()))
