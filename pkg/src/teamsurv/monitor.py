"""Streaming monitor: feed snapshots in time order, get FlagEvents back.

This path uses the reference implementations in :mod:`teamsurv.smoothing`,
:mod:`teamsurv.statistics` and :mod:`teamsurv.search`, so every evaluated
team is reported with its members.  The Monte Carlo code uses the compiled
:class:`teamsurv.engine.ExcessRunner` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import search
from . import statistics as st
from .errors import TimeSkew, ValidationError
from .smoothing import init_state, step
from .types import FlagEvent, MeanModel, NetworkSeries, NetworkSnapshot, StatKind, SurveillancePlan


@dataclass
class ChartPoint:
    """Largest excess of each chart at one time step (None when absent)."""

    t: int
    upper: float | None
    lower: float | None
    upper_limit: float | None
    lower_limit: float | None


class Monitor:
    """Runs one or more plans over a shared smoother.

    All plans must share alpha.  A typical two-sided setup is a GEWMA plan
    and an L_GEWMA plan on the same team.
    """

    def __init__(self, plans, means: MeanModel, n_max: int | None = None):
        self.plans = [plans] if isinstance(plans, SurveillancePlan) else list(plans)
        if not self.plans:
            raise ValidationError("at least one plan is required")
        alphas = {p.alpha for p in self.plans}
        if len(alphas) != 1:
            raise ValidationError("all plans in a monitor must share alpha")
        self.alpha = alphas.pop()
        self.means = means
        self.n_max = n_max
        self.state = None
        self._stats: list[st.StatState | None] = [None] * len(self.plans)
        self.chart: list[ChartPoint] = []

    def _threshold(self, plan: SurveillancePlan) -> float:
        if plan.statistic.adaptive or plan.surrogate is None:
            return float(plan.threshold)
        lt = self.state.active()[1]
        m = lt.shape[0]
        off = (lt.sum() - np.trace(lt)) / (m * m - m)
        return float(plan.surrogate.predict(off, m))

    def update(self, snap: NetworkSnapshot) -> list[FlagEvent]:
        """Advance one step; returns every evaluated team, flagged or not."""
        if self.n_max is None:
            self.n_max = snap.n
        if snap.n > self.n_max:
            raise ValidationError(f"snapshot has {snap.n} nodes, monitor was sized for {self.n_max}")
        lam = self.means.matrix(snap.t, self.n_max)
        if self.state is None:
            if snap.t != 1:
                raise TimeSkew(f"first snapshot must have t=1, got {snap.t}")
            self.state = init_state(lam, self.alpha)
        self.state = step(self.state, snap, lam)
        events = []
        upper = lower = up_lim = lo_lim = None
        for idx, plan in enumerate(self.plans):
            evs = self._evaluate(idx, plan)
            events.extend(evs)
            if not evs:
                continue
            best = max(evs, key=lambda e: e.value)
            if plan.statistic is StatKind.L_GEWMA:
                lower, lo_lim = -best.value, -best.boundary
            elif upper is None or best.value > upper:
                upper, up_lim = best.value, best.boundary
        self.chart.append(ChartPoint(snap.t, upper, lower, up_lim, lo_lim))
        return events

    def _evaluate(self, idx: int, plan: SurveillancePlan) -> list[FlagEvent]:
        s = self.state
        kind = plan.statistic
        excl = plan.exclude_self_pairs
        scale = plan.score_divisor
        name = kind.value
        if kind.adaptive:
            fn = search.agewma_scan if kind is StatKind.AGEWMA else search.adewma_scan
            return fn(s, plan.k, plan.surrogate, plan.threshold, scale=scale,
                      exclude_self_pairs=excl)
        h = self._threshold(plan)
        if kind in (StatKind.GEWMA, StatKind.L_GEWMA, StatKind.TEWMA):
            prev = self._stats[idx]
            if kind is StatKind.GEWMA:
                new = st.gewma_step(prev, s, plan.team, excl)
                value = math.sqrt(new.value) - math.sqrt(new.mu)
            elif kind is StatKind.L_GEWMA:
                new = st.l_gewma_step(prev, s, plan.team, excl)
                value = math.sqrt(new.mu) - math.sqrt(new.value)
            else:
                new = st.tewma_step(prev, s, excl)
                value = math.sqrt(new.value) - math.sqrt(new.mu)
            self._stats[idx] = new
            team = tuple(plan.team.sorted()) if plan.team is not None else ()
            return [FlagEvent(s.t, name, team, value, h, value > h, None, len(team) or s.n_active)]
        if kind is StatKind.TEWMA_STAR:
            v = st.tewma_star(s, excl)
            b = st.team_sum(s.ltilde, np.arange(s.n_active), excl)
            value = math.sqrt(v) - math.sqrt(b)
            return [FlagEvent(s.t, name, (), value, h, value > h, None, s.n_active)]
        if kind is StatKind.GEWMA_STAR and plan.team is not None:
            v = st.gewma_star(s, plan.team, excl)
            b = st.gewma_star_boundary(s, plan.team, excl)
            value = math.sqrt(v) - math.sqrt(b)
            team = tuple(plan.team.sorted())
            return [FlagEvent(s.t, name, team, value, h, value > h, None, len(team))]
        if kind is StatKind.GEWMA_STAR:
            return search.collab_scan(s, plan.k, h, scale=scale, exclude_self_pairs=excl,
                                      statistic=name)
        if kind is StatKind.DEWMA:
            if plan.team is not None:
                restrict = plan.team.members or None
                return search.leader_scan(s, plan.k, h, scale=scale, exclude_self_pairs=excl,
                                          leaders=[plan.team.leader], restrict_to=restrict,
                                          statistic=name)
            return search.leader_scan(s, plan.k, h, scale=scale, exclude_self_pairs=excl,
                                      statistic=name)
        raise ValidationError(f"unsupported statistic {name}")

    def run(self, series: NetworkSeries) -> list[FlagEvent]:
        if self.n_max is None:
            self.n_max = series.n_max
        events = []
        for snap in series:
            events.extend(self.update(snap))
        return events


def two_sided_plans(team, h_upper: float, h_lower: float, alpha: float = 0.075,
                    exclude_self_pairs: bool = False, target_ats: float = 200.0):
    """GEWMA and L-GEWMA plans on the same team with separate thresholds."""
    up = SurveillancePlan(StatKind.GEWMA, alpha=alpha, team=team, threshold=h_upper,
                          exclude_self_pairs=exclude_self_pairs, target_ats=target_ats)
    lo = SurveillancePlan(StatKind.L_GEWMA, alpha=alpha, team=team, threshold=h_lower,
                          exclude_self_pairs=exclude_self_pairs, target_ats=target_ats)
    return [up, lo]
