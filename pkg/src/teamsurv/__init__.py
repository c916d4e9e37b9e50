"""Team-level surveillance of communication outbreaks in dynamic networks."""

from .errors import TeamSurvError, ValidationError
from .types import (
    AtsReport,
    DistanceLinear,
    FlagEvent,
    Homogeneous,
    MeanModel,
    NetworkSeries,
    NetworkSnapshot,
    PerEdgeSeries,
    StatKind,
    SurrogateModel,
    SurveillancePlan,
    Team,
    validate_series,
)
from .smoothing import SmootherState, init_state, step
from .simharness import Scenario, generate_series, run_ats_experiment
from .calibration import (
    CalibrationGrid,
    calibrate_threshold,
    estimate_in_control_ats,
    fit_hd_surrogate,
    fit_hg_surrogate,
    predict_threshold,
)

__version__ = "0.1.0"
