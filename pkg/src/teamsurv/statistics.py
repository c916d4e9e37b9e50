"""Known-team and whole-network statistics and their flag rules.

Team sums run over all ordered pairs of members, self-pairs included, so the
in-control mean of a homogeneous team of size m is m^2 * lambda.  Pass
``exclude_self_pairs=True`` to drop the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyTeam, LeaderInTeam, NegativeInput, OmegaNotSubset
from .smoothing import SmootherState
from .types import Team

WHOLE_NETWORK = "*"


@dataclass(frozen=True)
class StatState:
    """Running value of a recursive statistic; ``value`` is None before t=1."""

    kind: str
    value: float | None = None
    mu: float | None = None
    team: object = None
    t: int = 0


def _nodes(team) -> np.ndarray:
    if isinstance(team, Team):
        nodes = set(team.members)
        if team.leader is not None:
            nodes.add(team.leader)
    else:
        nodes = set(int(i) for i in team)
    return np.array(sorted(nodes), dtype=np.intp)


def team_sum(mat: np.ndarray, nodes: np.ndarray, exclude_self_pairs: bool = False) -> float:
    sub = mat[np.ix_(nodes, nodes)]
    total = float(sub.sum())
    if exclude_self_pairs:
        total -= float(np.trace(sub))
    return total


def _team_nodes(team, smoother: SmootherState) -> np.ndarray:
    nodes = _nodes(team)
    if len(nodes) == 0:
        raise EmptyTeam("team is empty")
    if nodes[-1] >= smoother.n_active:
        raise EmptyTeam(f"team member {nodes[-1] + 1} is not an active node")
    return nodes


def _recursive_step(stat, smoother, nodes, exclude_self_pairs, kind, reflect):
    a = smoother.alpha
    s_t = team_sum(smoother.ytilde, nodes, exclude_self_pairs)
    mu = team_sum(smoother.ltilde, nodes, exclude_self_pairs)
    prev = None if stat is None else stat.value
    raw = s_t if prev is None else a * s_t + (1 - a) * prev
    value = reflect(raw, mu)
    t = smoother.t
    return StatState(kind=kind, value=value, mu=mu, team=stat.team if stat else None, t=t)


def gewma_step(stat: StatState | None, smoother: SmootherState, team,
               exclude_self_pairs: bool = False) -> StatState:
    """GEWMA_t = max(a * S_t + (1-a) * GEWMA_{t-1}, mu_t).

    S_t is the team sum of ytilde and mu_t the team sum of ltilde.  On the
    first call (``stat`` None or without a value) the statistic starts at S_1,
    reflected at mu_1.
    """
    nodes = _team_nodes(team, smoother)
    out = _recursive_step(stat, smoother, nodes, exclude_self_pairs, "GEWMA", max)
    return StatState(out.kind, out.value, out.mu, team, out.t)


def l_gewma_step(stat: StatState | None, smoother: SmootherState, team,
                 exclude_self_pairs: bool = False) -> StatState:
    """Lower chart: min(a * S_t + (1-a) * prev, mu_t)."""
    nodes = _team_nodes(team, smoother)
    out = _recursive_step(stat, smoother, nodes, exclude_self_pairs, "L_GEWMA", min)
    return StatState(out.kind, out.value, out.mu, team, out.t)


def tewma_step(stat: StatState | None, smoother: SmootherState,
               exclude_self_pairs: bool = False) -> StatState:
    nodes = np.arange(smoother.n_active)
    out = _recursive_step(stat, smoother, nodes, exclude_self_pairs, "TEWMA", max)
    return StatState(out.kind, out.value, out.mu, WHOLE_NETWORK, out.t)


def gewma_star(smoother: SmootherState, team, exclude_self_pairs: bool = False) -> float:
    """Team sum of the reflected smoothed counts y*."""
    return team_sum(smoother.ystar, _team_nodes(team, smoother), exclude_self_pairs)


def gewma_star_boundary(smoother: SmootherState, team, exclude_self_pairs: bool = False) -> float:
    return team_sum(smoother.ltilde, _team_nodes(team, smoother), exclude_self_pairs)


def tewma_star(smoother: SmootherState, exclude_self_pairs: bool = False) -> float:
    return team_sum(smoother.ystar, np.arange(smoother.n_active), exclude_self_pairs)


def _check_nonneg(*xs):
    for x in xs:
        if not x >= 0:
            raise NegativeInput(f"flag inputs must be >= 0, got {x}")


def gewma_flag(stat_value: float, mu: float, h: float) -> bool:
    """sqrt(value) - sqrt(mu) > h.

    With a homogeneous mean, sqrt(mu) equals m * sqrt(lambda), so the same
    predicate covers both the homogeneous and heterogeneous plans.
    """
    _check_nonneg(stat_value, mu, h)
    return math.sqrt(stat_value) - math.sqrt(mu) > h


def l_gewma_flag(stat_value: float, mu: float, h: float) -> bool:
    """sqrt(mu) - sqrt(value) > h; mirror image of :func:`gewma_flag`."""
    _check_nonneg(stat_value, mu, h)
    return math.sqrt(mu) - math.sqrt(stat_value) > h


def dewma_flag(stat_value: float, boundary_sum: float, h: float) -> bool:
    _check_nonneg(stat_value, boundary_sum, h)
    return math.sqrt(stat_value) - math.sqrt(boundary_sum) > h


tewma_flag = gewma_flag


def _leader_sums(mat, leader, W, Omega, exclude_self_pairs):
    w = np.array(sorted(W), dtype=np.intp)
    o = np.array(sorted(Omega), dtype=np.intp)
    total = 0.0
    if len(w):
        total += float(mat[w, leader].sum() + mat[leader, w].sum())
    if len(o):
        total += team_sum(mat, o, exclude_self_pairs)
    return total


def _check_leader_sets(leader, W, Omega):
    W = set(_as_set(W))
    Omega = set(_as_set(Omega))
    if leader in W:
        raise LeaderInTeam(f"leader {leader} is a member of its own neighbourhood")
    if not Omega <= W:
        raise OmegaNotSubset("refined team must be a subset of the leader neighbourhood")
    return W, Omega


def _as_set(x) -> Iterable[int]:
    if isinstance(x, Team):
        return x.members
    return (int(i) for i in x)


def dewma(smoother: SmootherState, leader: int, W, Omega,
          exclude_self_pairs: bool = False) -> float:
    """Leader-to-neighbourhood traffic plus within-team traffic, on y*."""
    W, Omega = _check_leader_sets(leader, W, Omega)
    return _leader_sums(smoother.ystar, leader, W, Omega, exclude_self_pairs)


def dewma_boundary(smoother: SmootherState, leader: int, W, Omega,
                   exclude_self_pairs: bool = False) -> float:
    """Same sums as :func:`dewma` taken over the smoothed means."""
    W, Omega = _check_leader_sets(leader, W, Omega)
    return _leader_sums(smoother.ltilde, leader, W, Omega, exclude_self_pairs)
