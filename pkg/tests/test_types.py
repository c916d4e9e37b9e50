import numpy as np
import pytest

from teamsurv.errors import (
    DimensionMismatch,
    LeaderInTeam,
    NegativeInput,
    NonContiguousTime,
    NonPositiveMean,
    NonPositivePrediction,
    SurrogateKindMismatch,
    ValidationError,
)
from teamsurv.types import (
    AtsReport,
    DistanceLinear,
    Homogeneous,
    NetworkSeries,
    NetworkSnapshot,
    PerEdgeSeries,
    StatKind,
    SurrogateModel,
    SurveillancePlan,
    Team,
    design_matrix,
    validate_series,
)


def _series(T=3, n=4, seed=0):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(T):
        m = rng.poisson(0.5, size=(n, n))
        np.fill_diagonal(m, 0)
        mats.append(m)
    return NetworkSeries.from_arrays(mats)


def test_snapshot_rejects_negative_and_diagonal():
    with pytest.raises(ValidationError):
        NetworkSnapshot(1, np.array([[0, -1], [0, 0]]))
    with pytest.raises(ValidationError):
        NetworkSnapshot(1, np.array([[1, 0], [0, 0]]))
    with pytest.raises(ValidationError):
        NetworkSnapshot(0, np.zeros((2, 2), dtype=int))


def test_snapshot_is_read_only():
    s = NetworkSnapshot(1, np.zeros((3, 3), dtype=int))
    with pytest.raises(ValueError):
        s.counts[0, 1] = 5


def test_series_needs_contiguous_time():
    a = NetworkSnapshot(1, np.zeros((2, 2), dtype=int))
    b = NetworkSnapshot(3, np.zeros((2, 2), dtype=int))
    with pytest.raises(NonContiguousTime):
        NetworkSeries((a, b))


def test_validate_homogeneous_accepts():
    s = _series()
    assert validate_series(s, Homogeneous(0.2)) == (s, Homogeneous(0.2))


def test_distance_linear_at_135_accepted():
    m = DistanceLinear(-0.003, 0.90)
    m.check(135)
    lam = m.matrix(1, 135)
    assert lam.min() == pytest.approx(0.498)


def test_distance_linear_at_350_rejected():
    with pytest.raises(NonPositiveMean) as exc:
        DistanceLinear(-0.003, 0.90).check(350)
    assert exc.value.index[:2] == (0, 349)


def test_validate_names_offending_pair():
    mats = [np.full((3, 3), 0.5) for _ in range(2)]
    mats[1][2, 0] = 0.0
    with pytest.raises(NonPositiveMean) as exc:
        validate_series(_series(T=2, n=3), PerEdgeSeries(tuple(mats)))
    assert exc.value.index == (2, 0, 2)


def test_validate_dimension_mismatch():
    mats = [np.full((2, 2), 0.5) for _ in range(3)]
    with pytest.raises(DimensionMismatch):
        validate_series(_series(T=3, n=4), PerEdgeSeries(tuple(mats)))


def test_team_leader_not_member():
    with pytest.raises(LeaderInTeam):
        Team([1, 2], leader=2)
    t = Team([3, 1], leader=0)
    assert t.sorted() == [1, 3]
    assert t.size == 3


def test_plan_defaults_by_kind():
    assert SurveillancePlan(StatKind.GEWMA_STAR).k == 0.5
    assert SurveillancePlan(StatKind.DEWMA).k == 0.45
    assert SurveillancePlan(StatKind.ADEWMA).threshold == 1.0


def test_plan_team_rules():
    with pytest.raises(ValidationError):
        SurveillancePlan(StatKind.GEWMA)
    with pytest.raises(ValidationError):
        SurveillancePlan(StatKind.AGEWMA, team=Team([1, 2]))
    with pytest.raises(ValidationError):
        SurveillancePlan(StatKind.GEWMA_STAR, k=-0.1)


def test_plan_dict_round_trip_is_one_based():
    p = SurveillancePlan(StatKind.DEWMA, k=0.4, threshold=0.7, team=Team([0, 2], leader=5))
    d = p.to_dict()
    assert d["team"] == [1, 3] and d["leader"] == 6
    q = SurveillancePlan.from_dict(d)
    assert q.team == p.team and q.k == 0.4 and q.threshold == 0.7


def test_plan_surrogate_kind_checked():
    sm = SurrogateModel("HG_RECIP", np.zeros(20))
    with pytest.raises(SurrogateKindMismatch):
        SurveillancePlan(StatKind.ADEWMA, surrogate=sm)


def test_surrogate_coefficient_count():
    with pytest.raises(ValidationError):
        SurrogateModel("HD_LOG", np.zeros(11))
    assert design_matrix("HD_LOG", [0.5], [100]).shape == (1, 12)
    assert design_matrix("HG_RECIP", [0.5], [100]).shape == (1, 20)


def test_hd_basis_indicator_terms():
    X = design_matrix("HD_LOG", [0.5, 0.95], [100, 100])
    names = SurrogateModel("HD_LOG", np.zeros(12)).basis
    ind = names.index("I(lam<0.95)")
    assert X[0, ind] == 1.0 and X[1, ind] == 0.0


def test_hg_nonpositive_prediction():
    beta = np.zeros(20)
    beta[0] = -1.0
    with pytest.raises(NonPositivePrediction):
        SurrogateModel("HG_RECIP", beta).predict(0.5, 100)


def test_surrogate_dict_round_trip():
    beta = np.linspace(-1, 1, 12)
    sm = SurrogateModel("HD_LOG", beta, residual_se=0.01, correlation=0.99, seed=3)
    back = SurrogateModel.from_dict(sm.to_dict())
    assert np.array_equal(back.coefficients, beta)
    assert set(sm.to_dict()) == {"kind", "basis", "coefficients", "grid", "diagnostics", "seed"}


def test_ats_report_from_times():
    r = AtsReport.from_times([1, 2, 3, 10], horizon=10, censored=1)
    assert r.mean_tts == 4.0 and r.censored == 1 and r.reps == 4
    with pytest.raises(ValidationError):
        AtsReport(2, 1.0, 0.0, censored=3)
