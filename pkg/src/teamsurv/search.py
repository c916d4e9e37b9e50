"""Neighbourhood search for unknown teams and the adaptive scans.

Scores are signal-to-noise differences sqrt(y*) - sqrt(lambda~), optionally
divided by ``scale`` (see ``SurveillancePlan.score_scale``).  A node joins a
candidate team when its score exceeds ``k``.

Every function that evaluates pair scores accepts an optional ``counter``
(a ``collections.Counter``); the key ``"pairs"`` is incremented by the number
of pair scores evaluated, so scan cost can be audited.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import BadK, SurrogateKindMismatch, SurrogateMissing
from .smoothing import SmootherState
from .statistics import dewma, dewma_boundary
from .types import FlagEvent, SurrogateModel, Team


def _check_k(k):
    if not k >= 0:
        raise BadK(f"k must be >= 0, got {k}")


def _tally(counter, n):
    if counter is not None:
        counter["pairs"] += n


def collab_candidate(smoother: SmootherState, center: int, k: float, scale: float = 1.0,
                     counter=None) -> Team:
    """Hub team around ``center``: the centre plus every node whose traffic to
    or from it has a score above ``k``."""
    _check_k(k)
    _, lt, ys = smoother.active()
    col = (np.sqrt(ys[:, center]) - np.sqrt(lt[:, center])) / scale
    row = (np.sqrt(ys[center, :]) - np.sqrt(lt[center, :])) / scale
    _tally(counter, 2 * len(col))
    hit = (col > k) | (row > k)
    hit[center] = True
    return Team(np.flatnonzero(hit))


def leader_neighborhood(smoother: SmootherState, leader: int, k: float, scale: float = 1.0,
                        counter=None) -> Team:
    """Nodes whose combined two-way traffic with ``leader`` is significant."""
    _check_k(k)
    _, lt, ys = smoother.active()
    d = (np.sqrt(ys[leader, :] + ys[:, leader]) - np.sqrt(lt[leader, :] + lt[:, leader])) / scale
    _tally(counter, len(d))
    hit = d > k
    hit[leader] = False
    return Team(np.flatnonzero(hit), leader=leader)


def refine_leader_team(smoother: SmootherState, W, k: float, scale: float = 1.0,
                       counter=None) -> Team:
    """Members of ``W`` that take part in at least one significant pair
    (either direction) with another member of ``W``."""
    _check_k(k)
    w = np.array(sorted(W.members if isinstance(W, Team) else W), dtype=np.intp)
    if len(w) < 2:
        return Team()
    _, lt, ys = smoother.active()
    sub = (np.sqrt(ys[np.ix_(w, w)]) - np.sqrt(lt[np.ix_(w, w)])) / scale
    _tally(counter, len(w) * len(w))
    sig = (sub > k) | (sub.T > k)
    np.fill_diagonal(sig, False)
    return Team(w[sig.any(axis=1)])


def local_gewma_star(smoother: SmootherState, center: int, k: float, scale: float = 1.0,
                     exclude_self_pairs: bool = False, counter=None):
    """(candidate team, team sum of y*) for the hub around ``center``."""
    team = collab_candidate(smoother, center, k, scale, counter)
    nodes = np.array(team.sorted(), dtype=np.intp)
    ys = smoother.active()[2]
    sub = ys[np.ix_(nodes, nodes)]
    value = float(sub.sum() - (np.trace(sub) if exclude_self_pairs else 0.0))
    return team, value


def local_dewma_star(smoother: SmootherState, leader: int, k: float, scale: float = 1.0,
                     exclude_self_pairs: bool = False, counter=None):
    """(W, refined team, DEWMA*) for a candidate leader."""
    W = leader_neighborhood(smoother, leader, k, scale, counter)
    omega = refine_leader_team(smoother, W, k, scale, counter)
    value = dewma(smoother, leader, W.members, omega.members, exclude_self_pairs)
    return W, omega, value


# ---------------------------------------------------------------------------
# scans


def _weighted_team_sums(ys, lt, nodes, D, exclude_self_pairs):
    ix = np.ix_(nodes, nodes)
    wy = ys[ix] / D[ix]
    wl = lt[ix] / D[ix]
    if exclude_self_pairs:
        return wy.sum() - np.trace(wy), wl.sum() - np.trace(wl)
    return wy.sum(), wl.sum()


def collab_scan(smoother: SmootherState, k: float, h: float, *, divisor=None,
                scale: float = 1.0, exclude_self_pairs: bool = False, statistic="GEWMA_STAR",
                counter=None) -> list[FlagEvent]:
    """Evaluate the hub team of every node; teams of fewer than 2 nodes are skipped.

    ``divisor`` is an optional per-edge matrix each term is divided by before
    summing (the adaptive plan); ``h`` is the flag level on the excess.
    """
    yt_, lt, ys = smoother.active()
    m = smoother.n_active
    D = np.ones((m, m)) if divisor is None else np.asarray(divisor)[:m, :m]
    events = []
    for c in range(m):
        team = collab_candidate(smoother, c, k, scale, counter)
        if len(team.members) < 2:
            continue
        nodes = np.array(team.sorted(), dtype=np.intp)
        stat, bnd = _weighted_team_sums(ys, lt, nodes, D, exclude_self_pairs)
        value = math.sqrt(stat) - math.sqrt(bnd)
        events.append(FlagEvent(smoother.t, statistic, tuple(int(i) for i in nodes), value,
                                float(h), value > h, None, len(nodes)))
    return events


def leader_scan(smoother: SmootherState, k: float, h: float, *, divisor=None,
                scale: float = 1.0, exclude_self_pairs: bool = False, statistic="DEWMA",
                leaders: Sequence[int] | None = None, restrict_to=None,
                counter=None) -> list[FlagEvent]:
    """Evaluate the dominant-leader statistic for each candidate leader.

    Leaders with an empty neighbourhood are skipped.  ``restrict_to`` limits
    the neighbourhood to a known member set.
    """
    _, lt, ys = smoother.active()
    m = smoother.n_active
    D = np.ones((m, m)) if divisor is None else np.asarray(divisor)[:m, :m]
    events = []
    for v in (range(m) if leaders is None else leaders):
        W = leader_neighborhood(smoother, v, k, scale, counter)
        if restrict_to is not None:
            W = Team(W.members & frozenset(restrict_to), leader=v)
        if not W.members:
            continue
        omega = refine_leader_team(smoother, W, k, scale, counter)
        w = np.array(sorted(W.members), dtype=np.intp)
        stat = float(np.sum(ys[w, v] / D[w, v] + ys[v, w] / D[v, w]))
        bnd = float(np.sum(lt[w, v] / D[w, v] + lt[v, w] / D[v, w]))
        if omega.members:
            o = np.array(omega.sorted(), dtype=np.intp)
            s2, b2 = _weighted_team_sums(ys, lt, o, D, exclude_self_pairs)
            stat += s2
            bnd += b2
        value = math.sqrt(stat) - math.sqrt(bnd)
        events.append(FlagEvent(smoother.t, statistic, tuple(int(i) for i in w), value,
                                float(h), value > h, int(v), len(w) + 1))
    return events


def adaptive_divisor(smoother: SmootherState, surrogate: SurrogateModel, n: int | None = None):
    """Per-edge squared threshold h(lambda~_ij, n)^2 used by the adaptive scans.

    ``n`` defaults to the number of active nodes.
    """
    _, lt, _ = smoother.active()
    n = smoother.n_active if n is None else n
    h = surrogate.predict(lt, n)
    return h * h


def _need(surrogate, kind):
    if surrogate is None:
        raise SurrogateMissing(f"adaptive scan needs a fitted {kind} surrogate")
    if surrogate.kind != kind:
        raise SurrogateKindMismatch(f"expected a {kind} surrogate, got {surrogate.kind}")


def agewma_scan(smoother: SmootherState, k: float, surrogate: SurrogateModel,
                threshold_adjustment: float = 1.0, *, scale: float = 1.0,
                exclude_self_pairs: bool = False, counter=None) -> list[FlagEvent]:
    """Adaptive collaborative scan: every edge term divided by h_G(lambda~_ij, n)^2."""
    _need(surrogate, "HG_RECIP")
    D = adaptive_divisor(smoother, surrogate)
    return collab_scan(smoother, k, threshold_adjustment, divisor=D, scale=scale,
                       exclude_self_pairs=exclude_self_pairs, statistic="AGEWMA",
                       counter=counter)


def adewma_scan(smoother: SmootherState, k: float, surrogate: SurrogateModel,
                threshold_adjustment: float = 1.0, *, scale: float = 1.0,
                exclude_self_pairs: bool = False, counter=None) -> list[FlagEvent]:
    """Adaptive dominant-leader scan, normalised like :func:`agewma_scan`."""
    _need(surrogate, "HD_LOG")
    D = adaptive_divisor(smoother, surrogate)
    return leader_scan(smoother, k, threshold_adjustment, divisor=D, scale=scale,
                       exclude_self_pairs=exclude_self_pairs, statistic="ADEWMA",
                       counter=counter)
