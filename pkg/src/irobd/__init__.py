"""Online optimization with feedback delay and nonlinear multi-step switching costs."""

from .algorithms import (DelaySweep, IROBD, ROBD, DelayedM2M, Stay, delay_sweep, play,
                         run_delayed_m2m, run_irobd, run_robd, run_stay)
from .bounds import (bound_cor1, bound_cor1_opt, bound_thm1, bound_thm2, lower_bound_thm3,
                     robd_linear_ratio_prior)
from .core import (CostReport, HittingCost, Instance, Trajectory, competitive_ratio,
                   evaluate_hitting, evaluate_switching, evaluate_total, validate_lipschitz)
from .delta import CallbackDelta, DroneDelta, LinearDelta, LinearSineDelta, BumpDelta
from .errors import (InvalidArgument, ProtocolViolation, SolverFailure, UnboundedRatio,
                     Unsupported, VerificationFailure)
from .offline import (GridSpec, offline_optimum, solve_offline_convex, solve_offline_dp,
                      solve_offline_multistart)
from .prox import SolverConfig, estimate_minimizer, min_over_y_value, robd_minimize

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
