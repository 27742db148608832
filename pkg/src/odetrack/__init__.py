"""Tracking local minimizers of time-varying constrained programs with ODE integrators."""

from .catalog import CATALOG, catalog_get
from .errors import OdetrackError
from .linalg import op_counter
from .problem import TimeVaryingProblem, check_derivatives, slack_augment, slack_lift_point
from .tracker import TrackerConfig, TrajectoryRecord, track

__all__ = ["CATALOG", "catalog_get", "OdetrackError", "op_counter", "TimeVaryingProblem",
           "check_derivatives", "slack_augment", "slack_lift_point", "TrackerConfig",
           "TrajectoryRecord", "track"]
__version__ = "0.1.0"
