"""Exact simulation and change-of-measure tools for interacting particle systems.

Trajectories are built by thinning per-vertex driving Poisson streams, so
freezing vertices to unit-rate reference dynamics leaves every other
vertex's randomness untouched.  The package also provides Girsanov weights,
an exact uniformization oracle for small Markov models and an empirical
alpha-MRF test suite.
"""
from .batch import TrajectoryBatch, simulate_batch
from .exceptions import (CapacityError, InputError, InsufficientDataError, IPSError,
                         ModelContractError, NumericError, PreconditionError, PropernessError,
                         UnsupportedModelError)
from .girsanov import (LikelihoodWeight, direct_estimate, importance_estimate,
                       martingale_diagnostic, weight, weight_monolithic)
from .graph import (MarkedGraph, alpha_separates, ball, closure, load_graph, neighborhood,
                    path_graph, save_graph)
from .marks import IndependentMarks
from .model import (PIECEWISE_CONSTANT, History, LocalContext, MarkovModel, Model,
                    TimeVarying, load_model, make_builtin, make_counterexample_model,
                    model_from_config, validate_model)
from .mrftest import (CITestReport, GridStates, JumpSignature, PermutationCITest,
                      TrajectorySummarizer, ci_test, mrf_suite, summarize)
from .oracle import (ConfigurationChain, FinitePMF, check_factorization_ci,
                     conditional_mutual_information, grid_path_law, tilted_cmi,
                     transient_distribution)
from .sim import (DualPointProcess, Event, PoissonStreams, Trajectory, dual,
                  jump_characteristics, load_trajectory, replicate, save_trajectory, simulate)

__version__ = "0.1.0"
