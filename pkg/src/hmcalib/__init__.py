"""History-matching calibration of time-series simulators with GP surrogates."""

from .design import DesignSet, fixed_dps, latin_hypercube, lhd_maximin, variable_dps
from .histmatch import HmConfig, HmResult, implausibility, run
from .metrics import FitReport
from .simulator import (CachedSimulator, InputBounds, SimulatorError, SimulatorSpec, TimeGrid,
                        TimeSeries)
from .surrogate import FitOptions, SurrogateModel, fit, predict

__version__ = "0.1.0"
