"""Simulation and analysis toolkit for strongly coupled adaptive frequency
phase oscillators: exact signal evaluation with zero-crossing localization,
an adaptive RK5(4) integrator robust across extreme coupling, closed-form
slow-fast event maps and invariant-manifold formulas, and experiment-level
analyses that cross-validate the closed forms against simulation."""

from .errors import (AfosimError, AlignmentError, ConfigurationError,
                     DomainError, SingularManifoldError, StiffnessError)
from .signals import (Constant, Cosine, CrossingList, FmGaussian, FmSine,
                      LinearChirp, QuadraticChirp, SampledTrace, SignalSpec,
                      lorenz_trace, remove_mean, zero_crossings)
from .models import (AfoParams, AfoState, PoolParams, PoolState,
                     TransformedState, afo_rhs, afo_system, pool_rhs,
                     pool_system, transformed_rhs, transformed_system)
from .integrator import IntegratorOptions, Trajectory, integrate
from .slowfast_maps import (FixedPoints, MapPrediction, envelope,
                            fixed_points_cosine, fixed_points_periodic,
                            limit_frequency, predict_sequence, step_event)
from .manifolds import (Family, Stability, classify_single,
                        feedback_MF_flow, feedback_manifolds, pool_manifold,
                        reconstruction_error, residual, single_manifold_omega,
                        slow_flow)
from .analysis import (ConvergenceReport, FreqResponsePoint, MapComparison,
                       SpectroFrame, compare_maps, fit_convergence,
                       frequency_response, spectrogram, sync_region_sweep)

__version__ = "0.1.0"
