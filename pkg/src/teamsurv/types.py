"""Domain types shared across the package.

Node indices are 0-based everywhere in memory.  File formats and CLI output
use 1-based ids; the conversion happens at the serialisation boundary
(``to_dict``/``from_dict`` and :mod:`teamsurv.io`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadAlpha,
    BadK,
    DimensionMismatch,
    NonContiguousTime,
    NonPositiveMean,
    ValidationError,
)


class StatKind(str, Enum):
    GEWMA = "GEWMA"
    GEWMA_STAR = "GEWMA_STAR"
    DEWMA = "DEWMA"
    TEWMA = "TEWMA"
    TEWMA_STAR = "TEWMA_STAR"
    L_GEWMA = "L_GEWMA"
    AGEWMA = "AGEWMA"
    ADEWMA = "ADEWMA"

    @property
    def adaptive(self) -> bool:
        return self in (StatKind.AGEWMA, StatKind.ADEWMA)

    @property
    def dominant_leader(self) -> bool:
        return self in (StatKind.DEWMA, StatKind.ADEWMA)


# ---------------------------------------------------------------------------
# Networks


@dataclass(frozen=True, eq=False)
class NetworkSnapshot:
    """Directed count matrix for one time step; ``counts[i, j]`` is i -> j."""

    t: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"t={self.t}: counts must be square, got {c.shape}")
        if c.shape[0] < 2:
            raise DimensionMismatch(f"t={self.t}: need at least 2 nodes")
        if self.t < 1:
            raise NonContiguousTime(f"time index must be >= 1, got {self.t}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.equal(np.mod(c, 1), 0)):
                raise ValidationError(f"t={self.t}: counts must be integers")
            c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValidationError(f"t={self.t}: counts must be nonnegative")
        if np.any(np.diagonal(c) != 0):
            raise ValidationError(f"t={self.t}: self-pair counts must be 0")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    def __eq__(self, other):
        if not isinstance(other, NetworkSnapshot):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class NetworkSeries:
    """Snapshots at t = 1..T.

    Snapshots may differ in size.  A snapshot of size ``n_t`` means nodes
    ``0..n_t-1`` are active at ``t`` (prefix-active convention).
    """

    snapshots: tuple[NetworkSnapshot, ...]

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        object.__setattr__(self, "snapshots", snaps)
        for expected, s in enumerate(snaps, start=1):
            if s.t != expected:
                raise NonContiguousTime(f"expected t={expected}, found t={s.t}")

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def n_max(self) -> int:
        return max(s.n for s in self.snapshots)

    @property
    def n_min(self) -> int:
        return min(s.n for s in self.snapshots)

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray]) -> "NetworkSeries":
        return cls(tuple(NetworkSnapshot(t, a) for t, a in enumerate(arrays, start=1)))


# ---------------------------------------------------------------------------
# Mean models


class MeanModel:
    """Expected counts lambda[i, j, t]."""

    def matrix(self, t: int, n: int) -> np.ndarray:
        raise NotImplementedError

    def check(self, n: int, T: int | None = None) -> None:
        """Raise NonPositiveMean unless every implied mean is > 0."""
        raise NotImplementedError

    @property
    def constant_in_time(self) -> bool:
        return True


@dataclass(frozen=True)
class Homogeneous(MeanModel):
    lam: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise NonPositiveMean(f"homogeneous mean must be positive, got {self.lam}")

    def matrix(self, t, n):
        return np.full((n, n), float(self.lam))

    def check(self, n, T=None):
        pass


@dataclass(frozen=True, eq=False)
class PerEdgeSeries(MeanModel):
    """One mean matrix per time step (index 0 holds t=1)."""

    matrices: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=float) for m in self.matrices)
        if not mats:
            raise ValidationError("per-edge mean series is empty")
        object.__setattr__(self, "matrices", mats)

    @property
    def constant_in_time(self) -> bool:
        return False

    def matrix(self, t, n):
        if not 1 <= t <= len(self.matrices):
            raise DimensionMismatch(f"no mean matrix for t={t}")
        m = self.matrices[t - 1]
        if m.shape[0] < n or m.shape[1] < n:
            raise DimensionMismatch(f"t={t}: mean matrix {m.shape} smaller than n={n}")
        return m[:n, :n]

    def check(self, n, T=None):
        T = len(self.matrices) if T is None else T
        for t in range(1, T + 1):
            m = self.matrix(t, n)
            bad = np.argwhere(~(m > 0))
            if len(bad):
                i, j = (int(v) for v in bad[0])
                raise NonPositiveMean(
                    f"mean at (i={i + 1}, j={j + 1}, t={t}) is {m[i, j]}", index=(i, j, t)
                )


@dataclass(frozen=True)
class DistanceLinear(MeanModel):
    """lambda[i, j] = a * |i - j| + b, constant in time."""

    a: float
    b: float = 0.90

    def matrix(self, t, n):
        idx = np.arange(n)
        return self.a * np.abs(idx[:, None] - idx[None, :]) + self.b

    def check(self, n, T=None):
        # the extreme pair is |i-j| = n-1 when a < 0, the diagonal when a >= 0
        worst = min(self.b, self.a * (n - 1) + self.b)
        if not worst > 0:
            pair = (0, n - 1) if self.a * (n - 1) + self.b <= self.b else (0, 0)
            raise NonPositiveMean(
                f"a*|i-j|+b = {worst:.6g} <= 0 at (i={pair[0] + 1}, j={pair[1] + 1})",
                index=(pair[0], pair[1], 1),
            )


def validate_series(series: NetworkSeries, means: MeanModel):
    """Check a series against a mean model; return the pair unchanged."""
    if not isinstance(series, NetworkSeries):
        raise ValidationError("expected a NetworkSeries")
    for expected, s in enumerate(series.snapshots, start=1):
        if s.t != expected:
            raise NonContiguousTime(f"expected t={expected}, found t={s.t}")
    if isinstance(means, PerEdgeSeries):
        if len(means.matrices) < series.T:
            raise DimensionMismatch(
                f"mean series covers {len(means.matrices)} steps, series has {series.T}"
            )
        for s in series.snapshots:
            m = means.matrices[s.t - 1]
            if m.shape[0] != m.shape[1] or m.shape[0] < s.n:
                raise DimensionMismatch(f"t={s.t}: mean matrix {m.shape} vs counts n={s.n}")
            sub = m[: s.n, : s.n]
            bad = np.argwhere(~(sub > 0))
            if len(bad):
                i, j = (int(v) for v in bad[0])
                raise NonPositiveMean(
                    f"mean at (i={i + 1}, j={j + 1}, t={s.t}) is {sub[i, j]}",
                    index=(i, j, s.t),
                )
    else:
        means.check(series.n_max)
    return series, means


# ---------------------------------------------------------------------------
# Teams and plans


@dataclass(frozen=True)
class Team:
    """A set of nodes, optionally with a dominant leader kept outside ``members``."""

    members: frozenset[int] = frozenset()
    leader: int | None = None

    def __init__(self, members: Iterable[int] = (), leader: int | None = None):
        object.__setattr__(self, "members", frozenset(int(m) for m in members))
        object.__setattr__(self, "leader", None if leader is None else int(leader))
        if any(m < 0 for m in self.members):
            raise ValidationError("team members must be nonnegative node indices")
        if self.leader is not None and self.leader in self.members:
            from .errors import LeaderInTeam

            raise LeaderInTeam(f"leader {self.leader} is also listed as a member")

    @property
    def size(self) -> int:
        return len(self.members) + (1 if self.leader is not None else 0)

    def sorted(self) -> list[int]:
        return sorted(self.members)

    def check_within(self, n: int) -> None:
        hi = max(self.members | ({self.leader} if self.leader is not None else set()), default=-1)
        if hi >= n:
            raise ValidationError(f"team refers to node {hi + 1} but network has {n} nodes")


DEFAULT_K_COLLAB = 0.5
DEFAULT_K_LEADER = 0.45
DEFAULT_ALPHA = 0.075


@dataclass
class SurveillancePlan:
    """Configuration of one monitoring chart.

    ``threshold`` is the flag level h on the square-root scale.  For the
    adaptive scans (AGEWMA, ADEWMA) it is the threshold adjustment, default 1.
    Non-adaptive plans may instead carry a ``surrogate`` and have h predicted
    from (mean lambda, network size).

    ``score_scale`` selects how team-search scores are scaled: ``"raw"`` uses
    sqrt(y*) - sqrt(lambda~) as is; ``"memory"`` divides by sqrt(alpha), i.e.
    expresses the smoothed values as counts accumulated over the EWMA memory.
    """

    statistic: StatKind
    alpha: float = DEFAULT_ALPHA
    k: float | None = None
    threshold: float | None = None
    surrogate: "SurrogateModel | None" = None
    team: Team | None = None
    target_ats: float = 100.0
    exclude_self_pairs: bool = False
    score_scale: str = "raw"

    def __post_init__(self):
        self.statistic = StatKind(self.statistic)
        if self.k is None:
            self.k = DEFAULT_K_LEADER if self.statistic.dominant_leader else DEFAULT_K_COLLAB
        if not (0.0 <= self.alpha <= 1.0):
            raise BadAlpha(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.k < 0:
            raise BadK(f"k must be >= 0, got {self.k}")
        if self.threshold is None and self.statistic.adaptive:
            self.threshold = 1.0
        if self.threshold is not None and not self.threshold >= 0:
            raise ValidationError(f"threshold must be >= 0, got {self.threshold}")
        if not self.target_ats > 0:
            raise ValidationError("target_ats must be positive")
        if self.score_scale not in ("raw", "memory"):
            raise ValidationError(f"unknown score_scale {self.score_scale!r}")
        kind = self.statistic
        if kind in (StatKind.GEWMA, StatKind.L_GEWMA):
            if self.team is None or not self.team.members:
                raise ValidationError(f"{kind.value} needs a known team")
        if kind.adaptive or kind in (StatKind.TEWMA, StatKind.TEWMA_STAR):
            if self.team is not None:
                raise ValidationError(f"{kind.value} does not take a team")
        if kind is StatKind.DEWMA and self.team is not None and self.team.leader is None:
            raise ValidationError("a known DEWMA team needs a leader")
        if kind.adaptive and self.surrogate is not None:
            want = "HD_LOG" if kind is StatKind.ADEWMA else "HG_RECIP"
            if self.surrogate.kind != want:
                from .errors import SurrogateKindMismatch

                raise SurrogateKindMismatch(
                    f"{kind.value} needs a {want} surrogate, got {self.surrogate.kind}"
                )

    @property
    def is_scan(self) -> bool:
        """True when candidate teams are searched rather than given."""
        if self.statistic.adaptive:
            return True
        return self.statistic in (StatKind.GEWMA_STAR, StatKind.DEWMA) and self.team is None

    @property
    def score_divisor(self) -> float:
        if self.score_scale == "raw":
            return 1.0
        return math.sqrt(self.alpha)

    def to_dict(self) -> dict:
        d = {
            "statistic": self.statistic.value,
            "alpha": self.alpha,
            "k": self.k,
            "threshold": self.threshold,
            "target_ats": self.target_ats,
            "exclude_self_pairs": self.exclude_self_pairs,
            "score_scale": self.score_scale,
        }
        if self.team is not None:
            # 1-based, like every other file format
            d["team"] = [i + 1 for i in self.team.sorted()]
            d["leader"] = None if self.team.leader is None else self.team.leader + 1
        if self.surrogate is not None:
            d["surrogate"] = self.surrogate.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SurveillancePlan":
        d = dict(d)
        team = None
        members = d.pop("team", None)
        leader = d.pop("leader", None)
        if members is not None or leader is not None:
            team = Team([int(i) - 1 for i in members or ()],
                        None if leader is None else int(leader) - 1)
        sur = d.pop("surrogate", None)
        if sur is not None:
            sur = SurrogateModel.from_dict(sur)
        allowed = {
            "statistic", "alpha", "k", "threshold", "target_ats",
            "exclude_self_pairs", "score_scale",
        }
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown plan fields: {sorted(unknown)}")
        return cls(team=team, surrogate=sur, **d)


# ---------------------------------------------------------------------------
# Threshold surrogate


def _hd_log_basis(lam: np.ndarray, n: np.ndarray) -> list[np.ndarray]:
    ind = (lam < 0.95).astype(float)
    ll = np.log(lam)
    return [
        np.ones_like(lam), n, n**2, n**3, lam, lam**2, ind, ind * lam,
        ll, n * ll, n * lam, n * lam**2,
    ]


def _hg_recip_basis(lam: np.ndarray, n: np.ndarray) -> list[np.ndarray]:
    ll = np.log(lam)
    ln = np.log(n)
    return [
        np.ones_like(lam), ll, n, n**2, n**3, lam, lam**2, lam**3, ln,
        ll * n, ll * n**2, ll * n**3, n * lam, n**2 * lam, n**3 * lam,
        lam**4, lam * ln, lam**5, lam**2 * ln, lam**3 * ln,
    ]


BASES = {
    "HD_LOG": (
        _hd_log_basis,
        ["1", "n", "n^2", "n^3", "lam", "lam^2", "I(lam<0.95)", "I(lam<0.95)*lam",
         "log(lam)", "n*log(lam)", "n*lam", "n*lam^2"],
    ),
    "HG_RECIP": (
        _hg_recip_basis,
        ["1", "log(lam)", "n", "n^2", "n^3", "lam", "lam^2", "lam^3", "log(n)",
         "n*log(lam)", "n^2*log(lam)", "n^3*log(lam)", "n*lam", "n^2*lam", "n^3*lam",
         "lam^4", "lam*log(n)", "lam^5", "lam^2*log(n)", "lam^3*log(n)"],
    ),
}


def design_matrix(kind: str, lam, n) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    n = np.atleast_1d(np.asarray(n, dtype=float))
    lam, n = np.broadcast_arrays(lam, n)
    fn, _ = BASES[kind]
    return np.stack([np.broadcast_to(c, lam.shape) for c in fn(lam, n)], axis=-1)


@dataclass
class SurrogateModel:
    """Regression model for the threshold h as a function of (lambda, n).

    HD_LOG models log(h); HG_RECIP models 1/h.  ``n`` is the number of active
    nodes in the network.
    """

    kind: str
    coefficients: np.ndarray
    residual_se: float = float("nan")
    correlation: float = float("nan")
    grid: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in BASES:
            raise ValidationError(f"unknown surrogate kind {self.kind!r}")
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        size = len(BASES[self.kind][1])
        if self.coefficients.shape != (size,):
            raise ValidationError(
                f"{self.kind} needs {size} coefficients, got {self.coefficients.shape}"
            )

    @property
    def basis(self) -> list[str]:
        return list(BASES[self.kind][1])

    def linear_predictor(self, lam, n) -> np.ndarray:
        return design_matrix(self.kind, lam, n) @ self.coefficients

    def predict(self, lam, n) -> np.ndarray:
        """Threshold h at (lam, n); broadcasts over array inputs."""
        eta = self.linear_predictor(lam, n)
        if self.kind == "HD_LOG":
            h = np.exp(eta)
        else:
            if np.any(eta <= 0):
                from .errors import NonPositivePrediction

                raise NonPositivePrediction(
                    "HG_RECIP linear predictor <= 0; the surrogate is outside its valid range"
                )
            h = 1.0 / eta
        return h.reshape(np.broadcast(np.asarray(lam), np.asarray(n)).shape)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "basis": self.basis,
            "coefficients": [float(c) for c in self.coefficients],
            "grid": self.grid,
            "diagnostics": {
                "residual_se": _json_float(self.residual_se),
                "correlation": _json_float(self.correlation),
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        diag = d.get("diagnostics", {}) or {}
        if "basis" in d and list(d["basis"]) != BASES[d["kind"]][1]:
            raise ValidationError("surrogate basis does not match its kind")
        return cls(
            kind=d["kind"],
            coefficients=d["coefficients"],
            residual_se=_float_or_nan(diag.get("residual_se")),
            correlation=_float_or_nan(diag.get("correlation")),
            grid=d.get("grid", {}) or {},
            seed=d.get("seed"),
        )


def _json_float(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _float_or_nan(x):
    return float("nan") if x is None else float(x)


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class FlagEvent:
    """One evaluation of a flag rule.

    ``value`` is the signal-to-noise excess (e.g. sqrt(GEWMA) - sqrt(mu)) and
    ``boundary`` the threshold it is compared against; ``flagged`` is
    ``value > boundary``.
    """

    t: int
    statistic: str
    team: tuple[int, ...]
    value: float
    boundary: float
    flagged: bool
    leader: int | None = None
    team_size: int | None = None


@dataclass(frozen=True)
class AtsReport:
    reps: int
    mean_tts: float
    std_error: float
    censored: int
    false_alarms: int = 0
    horizon: int | None = None
    times: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.censored > self.reps:
            raise ValidationError("censored count exceeds reps")

    @classmethod
    def from_times(cls, times: Sequence[float], horizon: int, censored: int,
                   false_alarms: int = 0) -> "AtsReport":
        arr = np.asarray(times, dtype=float)
        reps = len(arr)
        mean = float(arr.mean())
        se = float(arr.std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
        return cls(reps, mean, se, int(censored), int(false_alarms), horizon, arr)

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "mean_tts": self.mean_tts,
            "std_error": _json_float(self.std_error),
            "censored": self.censored,
            "false_alarms": self.false_alarms,
            "horizon": self.horizon,
        }
