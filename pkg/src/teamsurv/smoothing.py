"""Temporal EWMA smoothing of pairwise counts.

Three matrices are carried from step to step:

* ``ytilde``  EWMA of the raw counts,
* ``ltilde``  the same recursion applied to the expected counts,
* ``ystar``   a second EWMA of ``ytilde``, reflected from below at ``ltilde``.

All three are seeded with the first mean matrix.  When a snapshot is smaller
than the state (variable network size), only the active prefix is updated and
the inactive entries keep their previous values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadAlpha, DimensionMismatch, NonPositiveMean, TimeSkew
from .types import NetworkSnapshot


@dataclass(frozen=True, eq=False)
class SmootherState:
    ytilde: np.ndarray
    ltilde: np.ndarray
    ystar: np.ndarray
    t: int
    alpha: float
    n_active: int

    @property
    def n(self) -> int:
        return self.ytilde.shape[0]

    def active(self):
        """Views of (ytilde, ltilde, ystar) restricted to the active nodes."""
        m = self.n_active
        return self.ytilde[:m, :m], self.ltilde[:m, :m], self.ystar[:m, :m]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def init_state(lambda_1, alpha: float) -> SmootherState:
    if not 0.0 <= alpha <= 1.0:
        raise BadAlpha(f"alpha must lie in [0, 1], got {alpha}")
    lam = np.array(lambda_1, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise DimensionMismatch(f"mean matrix must be square, got {lam.shape}")
    bad = np.argwhere(~(lam > 0))
    if len(bad):
        i, j = (int(v) for v in bad[0])
        raise NonPositiveMean(f"mean at (i={i + 1}, j={j + 1}, t=1) is {lam[i, j]}",
                              index=(i, j, 1))
    return SmootherState(
        ytilde=_frozen(lam.copy()),
        ltilde=_frozen(lam.copy()),
        ystar=_frozen(lam.copy()),
        t=0,
        alpha=float(alpha),
        n_active=lam.shape[0],
    )


def step(state: SmootherState, Y_t, lambda_t) -> SmootherState:
    """Advance the smoother by one time step (pure; returns a new state)."""
    if isinstance(Y_t, NetworkSnapshot):
        t_new, y = Y_t.t, Y_t.counts
        if t_new != state.t + 1:
            raise TimeSkew(f"state is at t={state.t}, snapshot is t={t_new}")
    else:
        y = np.asarray(Y_t)
    m = y.shape[0]
    if y.shape != (m, m) or m > state.n:
        raise DimensionMismatch(f"counts {y.shape} do not fit state of size {state.n}")
    lam = np.asarray(lambda_t, dtype=float)
    if lam.shape[0] < m or lam.shape[1] < m:
        raise DimensionMismatch(f"mean matrix {lam.shape} smaller than counts {y.shape}")
    lam = lam[:m, :m]
    if not np.all(lam > 0):
        i, j = (int(v) for v in np.argwhere(~(lam > 0))[0])
        raise NonPositiveMean(f"mean at (i={i + 1}, j={j + 1}, t={state.t + 1}) is {lam[i, j]}",
                              index=(i, j, state.t + 1))

    a = state.alpha
    yt = state.ytilde.copy()
    lt = state.ltilde.copy()
    ys = state.ystar.copy()
    yt[:m, :m] = a * y + (1 - a) * yt[:m, :m]
    lt[:m, :m] = a * lam + (1 - a) * lt[:m, :m]
    ys[:m, :m] = np.maximum(a * yt[:m, :m] + (1 - a) * ys[:m, :m], lt[:m, :m])
    return SmootherState(_frozen(yt), _frozen(lt), _frozen(ys), state.t + 1, a, m)


def closed_form_ytilde(lambda_1, counts, alpha: float) -> np.ndarray:
    """Non-recursive expression of ytilde after len(counts) steps.

    ytilde_t = (1-a)^t * lambda_1 + a * sum_s (1-a)^(t-s) * y_s
    """
    counts = np.asarray(counts, dtype=float)
    T = counts.shape[0]
    w = alpha * (1 - alpha) ** np.arange(T - 1, -1, -1)
    return (1 - alpha) ** T * np.asarray(lambda_1, dtype=float) + np.tensordot(w, counts, axes=1)
