"""Discrete-time lag/lead compensator design by fading-memory least squares."""

from .freq_analysis import MarginReport, bode_table, freq_response, margins
from .glm_design import (
    DesignError,
    DesignResult,
    IllConditionedError,
    PolyBasisSpec,
    SinBasisSpec,
    design_poly,
    design_sin,
    to_highpass,
)
from .loop_sim import LoopConfig, SignalSpec, simulate, step_metrics
from .plant_tools import ContinuousTF, lss_design, motor_model, zoh_discretize
from .ratfun import Poly, RationalTF

__all__ = [
    "ContinuousTF", "DesignError", "DesignResult", "IllConditionedError", "LoopConfig",
    "MarginReport", "Poly", "PolyBasisSpec", "RationalTF", "SignalSpec", "SinBasisSpec",
    "bode_table", "design_poly", "design_sin", "freq_response", "lss_design", "margins",
    "motor_model", "simulate", "step_metrics", "to_highpass", "zoh_discretize",
]
__version__ = "0.1.0"
