"""Exact MCMC for Markov jump processes by uniformization and blocked Gibbs sampling."""
from . import kernels
from .bayes import (InitialDistMode, RatePrior, full_bayes_chain, mh_rate_update,
                    sample_rate_posterior, stationary_distribution)
from .core import (SufficientStats, TimeInterval, Trajectory, as_generator,
                   from_row_convention, gillespie_sample, path_log_density,
                   sufficient_stats)
from .ctbn import (CtbnGibbsConfig, CtbnModel, CtbnTrajectory, amalgamate, chain_model,
                   ctbn_gibbs_sweep, ctbn_simulate, lotka_volterra_model, node_gibbs_kernel)
from .diagnostics import (average_relative_error, effective_sample_size,
                          exact_smoothed_marginals, matrix_exponential)
from .errors import ImpossibleObservationsError, MJPError, ModelError, NumericalError
from .ffbs import HmmProblem, HmmSample, ffbs_sample, forward_marginals
from .gibbs import (DiscreteObservations, GibbsConfig, NoObservations, ObservationModel,
                    gibbs_kernel, initial_trajectory, run_chain)
from .mmpp import MmppModel, PoissonObservations, mmpp_simulate, sample_emission_posterior
from .models import MjpModel, load_model
from .uniformization import (augment, dominating_rate, sample_uniformized,
                             sample_virtual_jumps, subordinated_transition_matrix, thin)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
