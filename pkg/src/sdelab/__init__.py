"""sdelab: modified Euler-Maruyama schemes, reflection couplings, and
convergence diagnostics for SDEs whose drifts satisfy only a Lyapunov
condition rather than dissipativity at infinity."""

from .model import (ConfigError, DomainError, DriftModel, KineticModel, LyapunovSpec,
                    double_well_grad, double_well_model, eval_drift, eval_lyapunov,
                    kinetic_double_well, quadratic_model)
from .schemes import PathState, SchemeParams, em_step, kinetic_em_step, simulate_path
from .coupling import CoupledState, CutoffParams, cutoff_h, cutoff_h_star, reflect
from .metrics import DistanceSpec, RateFit, fit_loglog_slope, rho_V, w1_empirical_1d
from .constants import (ContractionConstants, DegenerateConstants,
                        NondegenerateAssumptions, degenerate_constants,
                        nondegenerate_constants, sublevel_l0_for_Vp)
from .simkit import NoiseStream, gaussian_increment, run_ensemble
from .harness import (ExperimentConfig, ExperimentReport, contraction_study,
                      convergence_study, moment_study)

__version__ = "0.1.0"
