"""Fast streaming evaluation of one plan for Monte Carlo work.

:class:`ExcessRunner` keeps the smoother matrices in preallocated buffers and,
per step, returns the plan's flag excess: the left-hand side of its flag
inequality, maximised over candidate teams for the scans.  A plan flags at
step t when ``excess > threshold``.  The excess stream never depends on the
threshold, which is what lets calibration reuse simulated paths.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .errors import SurrogateMissing, ValidationError
from .types import StatKind, SurveillancePlan

NO_SIGNAL = -math.inf


class ExcessRunner:
    def __init__(self, plan: SurveillancePlan, lambda_1: np.ndarray, means_constant: bool = True):
        lam = np.array(lambda_1, dtype=float)
        self.plan = plan
        self.n_max = lam.shape[0]
        self.alpha = float(plan.alpha)
        self.yt = lam.copy()
        self.lt = lam.copy()
        self.ys = lam.copy()
        self.t = 0
        self.value = None
        self.means_constant = means_constant
        n = self.n_max
        self._S = np.empty((n, n))
        self._members = np.empty(n, dtype=np.int64)
        self._inner = np.empty(n, dtype=np.int64)
        self._excess = np.empty(n)
        self._sizes = np.empty(n, dtype=np.int64)
        self._ones = np.ones((1, 1))
        self._div_cache: dict[int, np.ndarray] = {}
        self._k = float(plan.k)
        self._scale = float(plan.score_divisor)
        self._excl = bool(plan.exclude_self_pairs)
        kind = plan.statistic
        self.kind = kind
        if plan.team is not None:
            nodes = set(plan.team.members)
            if plan.team.leader is not None and kind is not StatKind.DEWMA:
                nodes.add(plan.team.leader)
            self._nodes = np.array(sorted(nodes), dtype=np.int64)
            if len(self._nodes) and self._nodes[-1] >= n:
                raise ValidationError("team refers to nodes outside the network")
        else:
            self._nodes = None
        if kind.adaptive and plan.surrogate is None:
            raise SurrogateMissing(f"{kind.value} needs a surrogate")

    # -- thresholds ---------------------------------------------------------

    def threshold(self, m: int | None = None) -> float:
        """Flag level for the current step."""
        plan = self.plan
        if plan.statistic.adaptive or plan.surrogate is None:
            if plan.threshold is None:
                raise ValidationError("plan has neither a threshold nor a surrogate")
            return float(plan.threshold)
        m = self.n_max if m is None else m
        lt = self.lt[:m, :m]
        off = (lt.sum() - np.trace(lt)) / (m * m - m)
        return float(plan.surrogate.predict(off, m))

    def _divisor(self, m: int) -> np.ndarray:
        if self.means_constant and m in self._div_cache:
            return self._div_cache[m]
        h = self.plan.surrogate.predict(self.lt[:m, :m], m)
        D = np.ascontiguousarray(h * h)
        if self.means_constant:
            self._div_cache[m] = D
        return D

    # -- stepping -----------------------------------------------------------

    def step(self, y: np.ndarray, lam: np.ndarray, m: int | None = None) -> float:
        m = y.shape[0] if m is None else m
        K.smooth_inplace(self.yt, self.lt, self.ys, y, lam, m, self.alpha)
        self.t += 1
        kind = self.kind
        if kind in (StatKind.GEWMA, StatKind.L_GEWMA, StatKind.TEWMA):
            nodes = self._nodes if kind is not StatKind.TEWMA else np.arange(m, dtype=np.int64)
            s = K.team_sums(self.yt, nodes, self._excl)
            mu = K.team_sums(self.lt, nodes, self._excl)
            raw = s if self.value is None else self.alpha * s + (1 - self.alpha) * self.value
            if kind is StatKind.L_GEWMA:
                self.value = min(raw, mu)
                return math.sqrt(mu) - math.sqrt(self.value)
            self.value = max(raw, mu)
            return math.sqrt(self.value) - math.sqrt(mu)
        if kind is StatKind.TEWMA_STAR or (kind is StatKind.GEWMA_STAR and self._nodes is not None):
            nodes = self._nodes if kind is StatKind.GEWMA_STAR else np.arange(m, dtype=np.int64)
            s = K.team_sums(self.ys, nodes, self._excl)
            mu = K.team_sums(self.lt, nodes, self._excl)
            return math.sqrt(s) - math.sqrt(mu)
        if kind in (StatKind.GEWMA_STAR, StatKind.AGEWMA):
            if kind is StatKind.AGEWMA:
                D, use_d = self._divisor(m), True
            else:
                D, use_d = self._ones, False
            return K.collab_scan(self.ys, self.lt, m, self._k, self._scale, self._excl, D, use_d,
                                 self._S, self._members, self._excess, self._sizes)
        if kind in (StatKind.DEWMA, StatKind.ADEWMA):
            if kind is StatKind.ADEWMA:
                D, use_d = self._divisor(m), True
            else:
                D, use_d = self._ones, False
            allowed = np.ones(m, dtype=np.bool_)
            if self.plan.team is not None:
                leaders = np.array([self.plan.team.leader], dtype=np.int64)
                if self.plan.team.members:
                    allowed[:] = False
                    allowed[[i for i in self.plan.team.members if i < m]] = True
            else:
                leaders = np.arange(m, dtype=np.int64)
            return K.leader_scan(self.ys, self.lt, m, self._k, self._scale, self._excl, D, use_d,
                                 self._S, self._members, self._inner, self._excess, self._sizes,
                                 leaders, allowed)
        raise ValidationError(f"unsupported statistic {kind}")
