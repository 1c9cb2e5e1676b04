"""Automatic LQR tuning of a simulated pole balancer via entropy-based
Bayesian optimization."""

from .entropy import (AcquisitionChoice, AcquisitionConfig, PminDistribution,
                      RepresenterSet, approximate_pmin, baseline_acquisition,
                      build_representers, ei_value, expected_entropy_change,
                      pi_value, relative_entropy, score_candidates,
                      select_next, ucb_value)
from .gp import (Dataset, GammaPrior, GpSurrogate, HyperPriors, Hyperparams,
                 IllConditioned, ard_relevance, fit_map, kernel_se_ard,
                 log_marginal_likelihood, posterior, posterior_batch)
from .lqr import (ControllerGain, NominalModel, NonConvergence, WeightPair,
                  closed_loop_spectral_radius, lqr_gain, solve_dare)
from .plant import (LONG_POLE, SHORT_POLE, CostEvaluation, EpisodeConfig,
                    PlantState, PoleParams, SafetyLimits, Trajectory,
                    check_safety, linearize_and_discretize, pole_derivatives,
                    run_episode, write_trajectory_csv)
from .presets import ExperimentPreset, get_preset, make_config
from .tuner import (DesignWeightMap, IterationRecord, OutOfDomain, TunerConfig,
                    TuningResult, ValidationResult, cost_evaluation,
                    design_weights, run_tuning, validate_controller)

__version__ = "0.1.0"
