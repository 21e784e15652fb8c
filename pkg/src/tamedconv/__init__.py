"""Simulation laboratory for tamed-truncated exponential Euler approximations
of stochastic convolutions, with exact coupled sampling and closed-form
bound evaluators."""

from .bounds import (BoundInputs, ParameterRangeError, error_bound,
                     exp_moment_bound, exp_moment_eps_max, holder_constant,
                     moment_bound, spectral_tail_bound, spectral_tail_hs)
from .config import ConfigError, ExperimentConfig
from .estimators import (ExpMomentSupCollector, HolderPairsCollector,
                         LpErrorSupCollector, McEstimate, MomentSupCollector,
                         RateFit, empirical_exp_moment, empirical_moment,
                         exact_spatial_error, fit_rate, holder_quotient,
                         lp_error_sup, run_collectors)
from .noise import (CovarianceBuildError, IncrementCovariance, NoiseOperator,
                    brute_force_convolution_oracle, hs_norm,
                    increment_covariance, sample_coupled_increment)
from .scheme import (CoupledTrajectory, SchemeState, TruncationPolicy,
                     chi_eval, iter_coupled_batch, mild_ito_gap, scheme_step,
                     simulate_coupled, truncation_defect)
from .spectral import (ProjectionIndex, SpectralOperator, StateVector,
                       fractional_norm, neg_power_operator_norm, project,
                       semigroup_apply)
from .taming import (ito_diffusion_apply, ito_drift, psi,
                     psi_double_prime_apply, psi_prime_apply)
from .timegrid import TimeGrid, uniform_grid

__version__ = "0.1.0"
