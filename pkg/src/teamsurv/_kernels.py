"""Compiled inner loops for the Monte Carlo engine.

These mirror :mod:`teamsurv.smoothing`, :mod:`teamsurv.statistics` and
:mod:`teamsurv.search` but work in place on preallocated buffers and return
only the largest flag excess per step.  The reference modules are the
definition; ``tests/test_engine.py`` checks the two agree.
"""

import math

import numpy as np
from numba import njit

NO_TEAM = -np.inf


@njit(cache=True)
def smooth_inplace(yt, lt, ys, y, lam, m, a):
    b = 1.0 - a
    for i in range(m):
        for j in range(m):
            yt[i, j] = a * y[i, j] + b * yt[i, j]
            lt[i, j] = a * lam[i, j] + b * lt[i, j]
            v = a * yt[i, j] + b * ys[i, j]
            ys[i, j] = v if v > lt[i, j] else lt[i, j]


@njit(cache=True)
def _scores(ys, lt, m, scale, S):
    for i in range(m):
        for j in range(m):
            S[i, j] = (math.sqrt(ys[i, j]) - math.sqrt(lt[i, j])) / scale


@njit(cache=True)
def collab_scan(ys, lt, m, k, scale, exclude_self, D, use_d, S, members, excess, sizes):
    """Per-centre excess sqrt(sum y*/d) - sqrt(sum lt/d) over hub teams.

    Centres whose team has fewer than two nodes get -inf.  Returns the max.
    """
    _scores(ys, lt, m, scale, S)
    best = NO_TEAM
    for c in range(m):
        cnt = 0
        members[cnt] = c
        cnt += 1
        for i in range(m):
            if i != c and (S[i, c] > k or S[c, i] > k):
                members[cnt] = i
                cnt += 1
        sizes[c] = cnt
        if cnt < 2:
            excess[c] = NO_TEAM
            continue
        stat = 0.0
        bnd = 0.0
        for p in range(cnt):
            i = members[p]
            for q in range(cnt):
                j = members[q]
                if exclude_self and i == j:
                    continue
                if use_d:
                    stat += ys[i, j] / D[i, j]
                    bnd += lt[i, j] / D[i, j]
                else:
                    stat += ys[i, j]
                    bnd += lt[i, j]
        e = math.sqrt(stat) - math.sqrt(bnd)
        excess[c] = e
        if e > best:
            best = e
    return best


@njit(cache=True)
def leader_scan(ys, lt, m, k, scale, exclude_self, D, use_d, S, members, inner, excess, sizes,
                leaders, allowed):
    """Per-leader excess of the dominant-leader statistic over its bound.

    Only nodes in ``leaders`` are tried as leaders and only nodes with
    ``allowed[i]`` may join a neighbourhood.
    """
    _scores(ys, lt, m, scale, S)
    best = NO_TEAM
    for li in range(leaders.shape[0]):
        v = leaders[li]
        cnt = 0
        for i in range(m):
            if i == v or not allowed[i]:
                continue
            d = (math.sqrt(ys[v, i] + ys[i, v]) - math.sqrt(lt[v, i] + lt[i, v])) / scale
            if d > k:
                members[cnt] = i
                cnt += 1
        if cnt == 0:
            excess[v] = NO_TEAM
            sizes[v] = 0
            continue
        stat = 0.0
        bnd = 0.0
        for p in range(cnt):
            i = members[p]
            if use_d:
                stat += ys[i, v] / D[i, v] + ys[v, i] / D[v, i]
                bnd += lt[i, v] / D[i, v] + lt[v, i] / D[v, i]
            else:
                stat += ys[i, v] + ys[v, i]
                bnd += lt[i, v] + lt[v, i]
        # refined team: members with a significant pair inside the neighbourhood
        n_in = 0
        for p in range(cnt):
            i = members[p]
            for q in range(cnt):
                j = members[q]
                if i != j and (S[i, j] > k or S[j, i] > k):
                    inner[n_in] = i
                    n_in += 1
                    break
        for p in range(n_in):
            i = inner[p]
            for q in range(n_in):
                j = inner[q]
                if exclude_self and i == j:
                    continue
                if use_d:
                    stat += ys[i, j] / D[i, j]
                    bnd += lt[i, j] / D[i, j]
                else:
                    stat += ys[i, j]
                    bnd += lt[i, j]
        sizes[v] = cnt
        e = math.sqrt(stat) - math.sqrt(bnd)
        excess[v] = e
        if e > best:
            best = e
    return best


@njit(cache=True)
def team_sums(mat, nodes, exclude_self):
    total = 0.0
    for p in range(nodes.shape[0]):
        i = nodes[p]
        for q in range(nodes.shape[0]):
            j = nodes[q]
            if exclude_self and i == j:
                continue
            total += mat[i, j]
    return total
