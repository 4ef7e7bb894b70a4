"""Risk-sensitive (LEQG) tracking controllers for groups of identical pursuers."""

__version__ = "0.1.0"

from .errors import (AssumptionViolated, DestabilizingController, EpsilonNotZero, EstimatorOverflow, IllConditioned,
                     LeqgError, ModelAssumptionViolated, NoSolution, NonDiagonalizable,
                     NumericalBlowup, SigmaExceedsY, SpecError, ThetaAboveCritical)
from .kron import (KronSum, MultiAgentSystem, StructuredSpectrum, SystemSpec, assemble, basic_spec,
                   kron, struct_eigs)
from .riccati import GareSolution, is_stabilizing, solve_care, solve_filter_care
from .synthesis import (FullInfoController, InitialCondition, OutputFeedbackController,
                        full_info_cost, full_info_synthesis, output_feedback_cost,
                        output_feedback_synthesis, theta_star_full, theta_star_output)
from .structured import (asymptotic_lqg_cost, lqg_structured_X, rs_structured_filter_Y,
                         rs_structured_X, spectral_radius_condition, structured_output_cost,
                         theta_I_star_asymptotic)
from .simulator import CostReport, SimConfig, Trajectory, mc_cost, simulate
