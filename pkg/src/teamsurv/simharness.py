"""Scenario generators, outbreak injection and the ATS experiment driver.

Counts are independent Poisson per ordered pair (i != j).  They are drawn by
Poisson splitting: one Poisson total for the whole matrix, then each event is
assigned to a pair with probability proportional to its mean.  This has
exactly the same distribution as per-pair draws and is much cheaper for
sparse networks.  Outbreak traffic is superposed the same way, since
Poisson((1+d)l) = Poisson(l) + Poisson(d*l).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .engine import ExcessRunner
from .errors import BadSimId, NoChangePoint, NonPositiveMean, ValidationError, ZeroReps
from .types import (
    AtsReport,
    DistanceLinear,
    Homogeneous,
    MeanModel,
    NetworkSeries,
    NetworkSnapshot,
    SurveillancePlan,
)

KINDS = ("homogeneous", "collaborative", "dominant_leader", "heterogeneous")

# Fig. 1 outbreak edges, 1-based (src, dst); each simulation extends the previous one
_LEADER_EDGES = {
    1: [(2, 5), (4, 1), (6, 1), (6, 2), (6, 3), (6, 4), (6, 5)],
    2: [(7, 5), (4, 7), (6, 7)],
    3: [(6, 8), (7, 8), (4, 8), (1, 8)],
    4: [(6, 9), (3, 9), (9, 2), (8, 9)],
}


def dominant_leader_edges(sim_id: int) -> set[tuple[int, int]]:
    """Directed outbreak edges (0-based) of dominant-leader simulation 1-4.

    Node 6 (index 5) is the leader in every simulation.
    """
    if sim_id not in _LEADER_EDGES:
        raise BadSimId(f"sim_id must be 1..4, got {sim_id}")
    edges = set()
    for s in range(1, sim_id + 1):
        edges.update((a - 1, b - 1) for a, b in _LEADER_EDGES[s])
    return edges


@dataclass(frozen=True)
class Scenario:
    """A simulated network stream.

    ``kind`` is one of ``homogeneous``, ``collaborative``, ``dominant_leader``
    or ``heterogeneous``.  Outbreak kinds scale the affected pair means by
    ``1 + delta`` for t > ``change_t``.  ``heterogeneous`` draws the active
    size uniformly from [m_L, m_H] each step and uses a*|i-j| + b.
    """

    kind: str = "homogeneous"
    n: int = 100
    lam: float = 0.2
    team: tuple[int, ...] = ()
    delta: float = 0.0
    change_t: int | None = None
    sim_id: int = 1
    a: float = -0.003
    b: float = 0.90
    m_L: int | None = None
    m_H: int | None = None
    T: int = 600
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        object.__setattr__(self, "team", tuple(int(i) for i in self.team))
        if self.kind == "heterogeneous":
            lo = self.n if self.m_L is None else self.m_L
            hi = self.n if self.m_H is None else self.m_H
            if lo > hi:
                raise ValidationError("m_L must not exceed m_H")
            if lo < 2:
                raise ValidationError("network needs at least 2 nodes")
            object.__setattr__(self, "m_L", int(lo))
            object.__setattr__(self, "m_H", int(hi))
            object.__setattr__(self, "n", int(hi))
            DistanceLinear(self.a, self.b).check(hi)
        elif not self.lam > 0:
            raise NonPositiveMean(f"lambda must be positive, got {self.lam}")
        if self.kind in ("collaborative", "dominant_leader"):
            if not self.delta > 0:
                raise ValidationError("outbreak scenarios need delta > 0")
            if self.change_t is None or self.change_t < 1:
                raise ValidationError("outbreak scenarios need change_t >= 1")
        if self.delta < 0:
            raise ValidationError("delta must be >= 0")
        if self.kind == "collaborative":
            if len(self.team) < 2 or max(self.team) >= self.n or min(self.team) < 0:
                raise ValidationError("collaborative team must hold >= 2 nodes inside the network")
        if self.kind == "dominant_leader":
            dominant_leader_edges(self.sim_id)
            if self.n < 9:
                raise ValidationError("dominant-leader scenarios need n >= 9")

    # -- structure --------------------------------------------------------

    @property
    def n_max(self) -> int:
        return self.n

    @property
    def means(self) -> MeanModel:
        if self.kind == "heterogeneous":
            return DistanceLinear(self.a, self.b)
        return Homogeneous(self.lam)

    def mean_matrix(self, n: int | None = None) -> np.ndarray:
        return self.means.matrix(1, self.n if n is None else n)

    def outbreak_pairs(self) -> np.ndarray:
        """Array of shape (p, 2) with the 0-based (src, dst) outbreak pairs."""
        if self.kind == "collaborative":
            pairs = [(i, j) for i in sorted(self.team) for j in sorted(self.team) if i != j]
        elif self.kind == "dominant_leader":
            pairs = sorted(dominant_leader_edges(self.sim_id))
        else:
            pairs = []
        return np.array(pairs, dtype=np.intp).reshape(-1, 2)

    def has_outbreak(self) -> bool:
        return self.kind in ("collaborative", "dominant_leader") and self.delta > 0

    def in_control(self) -> "Scenario":
        """Same network with the outbreak removed."""
        if self.kind in ("collaborative", "dominant_leader"):
            return replace(self, kind="homogeneous", delta=0.0, change_t=None, team=())
        return self

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["team"] = [i + 1 for i in self.team]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        if "team" in d:
            d["team"] = tuple(int(i) - 1 for i in d["team"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent substream for replication ``rep``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(rep),)))


class _Sampler:
    """Poisson-splitting sampler for a fixed set of pairs and weights."""

    def __init__(self, flat_index: np.ndarray, weights: np.ndarray):
        self.flat = flat_index
        self.cum = np.cumsum(weights)
        self.total = float(self.cum[-1]) if len(self.cum) else 0.0
        self.uniform = len(weights) > 0 and np.ptp(weights) == 0

    def add_into(self, out_flat: np.ndarray, rng: np.random.Generator, scale: float = 1.0):
        total = self.total * scale
        if total <= 0:
            return
        k = rng.poisson(total)
        if k == 0:
            return
        if self.uniform:
            pick = rng.integers(0, len(self.flat), size=k)
        else:
            pick = np.searchsorted(self.cum, rng.random(k) * self.total, side="right")
            np.minimum(pick, len(self.flat) - 1, out=pick)
        out_flat += np.bincount(self.flat[pick], minlength=len(out_flat))


def _offdiag_sampler(lam: np.ndarray) -> _Sampler:
    m = lam.shape[0]
    mask = ~np.eye(m, dtype=bool)
    flat = np.flatnonzero(mask.ravel())
    return _Sampler(flat, lam.ravel()[flat])


class ScenarioStream:
    """Generates (counts, mean matrix, active size) for t = 1, 2, ...

    ``counts`` is always n_max x n_max with zeros outside the active prefix.
    """

    def __init__(self, scenario: Scenario, rng: np.random.Generator):
        self.sc = scenario
        self.rng = rng
        self.t = 0
        self.lam_full = scenario.mean_matrix(scenario.n_max)
        self._samplers: dict[int, _Sampler] = {}
        pairs = scenario.outbreak_pairs()
        if len(pairs):
            flat = pairs[:, 0] * scenario.n_max + pairs[:, 1]
            self._outbreak = _Sampler(flat, self.lam_full.ravel()[flat])
        else:
            self._outbreak = None

    def _sampler(self, m: int) -> _Sampler:
        s = self._samplers.get(m)
        if s is None:
            lam = self.lam_full.copy()
            lam[m:, :] = 0.0
            lam[:, m:] = 0.0
            np.fill_diagonal(lam, 0.0)
            flat = np.flatnonzero(lam.ravel() > 0)
            s = _Sampler(flat, lam.ravel()[flat])
            self._samplers[m] = s
        return s

    def next(self):
        sc = self.sc
        self.t += 1
        if sc.kind == "heterogeneous":
            m = int(self.rng.integers(sc.m_L, sc.m_H + 1))
        else:
            m = sc.n_max
        out = np.zeros(sc.n_max * sc.n_max, dtype=np.int64)
        self._sampler(m).add_into(out, self.rng)
        if self._outbreak is not None and sc.delta > 0 and self.t > sc.change_t:
            self._outbreak.add_into(out, self.rng, scale=sc.delta)
        return out.reshape(sc.n_max, sc.n_max), self.lam_full, m


def gen_step(scenario: Scenario, t: int, rng: np.random.Generator) -> NetworkSnapshot:
    """Draw the snapshot at time ``t`` (1 <= t <= T)."""
    if not 1 <= t <= scenario.T:
        raise ValidationError(f"t must lie in [1, {scenario.T}], got {t}")
    stream = ScenarioStream(scenario, rng)
    stream.t = t - 1
    y, _, m = stream.next()
    return NetworkSnapshot(t, y[:m, :m])


def generate_series(scenario: Scenario, seed: int | None = None, T: int | None = None) -> NetworkSeries:
    """Whole series for a scenario; deterministic given (scenario, seed)."""
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    stream = ScenarioStream(scenario, rng)
    snaps = []
    for t in range(1, (scenario.T if T is None else T) + 1):
        y, _, m = stream.next()
        snaps.append(NetworkSnapshot(t, y[:m, :m]))
    return NetworkSeries(tuple(snaps))


def poisson_counts(mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Poisson counts for each off-diagonal pair of ``mean``."""
    mean = np.asarray(mean, dtype=float)
    out = np.zeros(mean.size, dtype=np.int64)
    _offdiag_sampler(mean).add_into(out, rng)
    return out.reshape(mean.shape)


# ---------------------------------------------------------------------------
# ATS experiment


def run_ats_experiment(scenario: Scenario, plan: SurveillancePlan, reps: int, seed: int,
                       horizon: int = 500) -> AtsReport:
    """Average time to signal after the change point.

    Each replication streams ``change_t`` in-control networks and then up to
    ``horizon`` outbreak networks.  Signals at or before the change are
    counted as false alarms (``false_alarms`` = number of replications with at
    least one) and do not stop or reset the run.  The time to signal is the
    first flagged t after the change minus ``change_t``; runs without a
    signal are censored at ``horizon``.
    """
    if reps < 1:
        raise ZeroReps("reps must be >= 1")
    if scenario.change_t is None or not scenario.has_outbreak():
        raise NoChangePoint("scenario has no change point")
    change = scenario.change_t
    times = np.empty(reps)
    censored = 0
    false_alarms = 0
    for r in range(reps):
        stream = ScenarioStream(scenario, rep_rng(seed, r))
        y, lam, m = stream.next()
        runner = ExcessRunner(plan, lam, means_constant=True)
        alarmed = False
        tts = None
        t = 1
        while True:
            e = runner.step(y, lam, m)
            if e > runner.threshold(m):
                if t <= change:
                    alarmed = True
                else:
                    tts = t - change
                    break
            if t - change >= horizon:
                break
            y, lam, m = stream.next()
            t += 1
        if tts is None:
            tts = horizon
            censored += 1
        times[r] = tts
        false_alarms += alarmed
    return AtsReport.from_times(times, horizon, censored, false_alarms)
