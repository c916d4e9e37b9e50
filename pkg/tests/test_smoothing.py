import numpy as np
import pytest

from teamsurv.errors import BadAlpha, DimensionMismatch, NonPositiveMean, TimeSkew
from teamsurv.smoothing import closed_form_ytilde, init_state, step
from teamsurv.types import NetworkSnapshot


def _snap(t, mat):
    return NetworkSnapshot(t, np.asarray(mat, dtype=np.int64))


def test_init_forced_values():
    s = init_state(np.ones((3, 3)), 0.5)
    assert s.t == 0
    for m in (s.ytilde, s.ltilde, s.ystar):
        assert np.all(m == 1.0)


def test_init_errors():
    with pytest.raises(BadAlpha):
        init_state(np.ones((2, 2)), 1.2)
    lam = np.ones((2, 2))
    lam[0, 1] = 0
    with pytest.raises(NonPositiveMean):
        init_state(lam, 0.5)


def test_two_step_hand_example():
    # alpha 0.5, lambda 1 everywhere; watch entry (0, 1)
    lam = np.ones((2, 2))
    s = init_state(lam, 0.5)
    s = step(s, _snap(1, [[0, 2], [0, 0]]), lam)
    assert s.ytilde[0, 1] == pytest.approx(1.5)
    assert s.ystar[0, 1] == pytest.approx(1.25)
    s = step(s, _snap(2, [[0, 0], [0, 0]]), lam)
    assert s.ytilde[0, 1] == pytest.approx(0.75)
    assert s.ystar[0, 1] == pytest.approx(1.0)


def test_fixed_point():
    c = 3.0
    lam = np.full((3, 3), c)
    s = init_state(lam, 0.3)
    y = np.full((3, 3), 3)
    for t in range(1, 6):
        s = step(s, y, lam)
        for m in s.active():
            assert np.allclose(m, c)


def test_time_skew():
    lam = np.ones((2, 2))
    s = init_state(lam, 0.5)
    with pytest.raises(TimeSkew):
        step(s, _snap(2, np.zeros((2, 2))), lam)


def test_dimension_mismatch():
    s = init_state(np.ones((2, 2)), 0.5)
    with pytest.raises(DimensionMismatch):
        step(s, np.zeros((3, 3)), np.ones((3, 3)))


def test_step_is_pure():
    lam = np.ones((2, 2))
    s0 = init_state(lam, 0.5)
    before = s0.ytilde.copy()
    step(s0, np.array([[0, 4], [1, 0]]), lam)
    assert np.array_equal(s0.ytilde, before)
    assert s0.t == 0


def test_closed_form_matches_recursion():
    rng = np.random.default_rng(1)
    lam = rng.uniform(0.1, 2, size=(4, 4))
    ys = rng.poisson(1.0, size=(30, 4, 4))
    s = init_state(lam, 0.075)
    for y in ys:
        s = step(s, y, lam)
    cf = closed_form_ytilde(lam, ys, 0.075)
    assert np.allclose(s.ytilde, cf, rtol=1e-12, atol=0)


def test_smaller_snapshot_freezes_inactive_nodes():
    lam = np.ones((4, 4))
    s = init_state(lam, 0.5)
    s = step(s, np.full((4, 4), 2), lam)
    frozen = s.ytilde[3, 0]
    s = step(s, np.zeros((3, 3)), lam)
    assert s.n_active == 3
    assert s.ytilde[3, 0] == frozen
    assert s.active()[0].shape == (3, 3)
