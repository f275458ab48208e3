"""Stochastic subgradient methods on nonsmooth problems with active manifolds.

The package bundles a zoo of analytically tractable test problems, three
perturbed gradient-type iterations, sample-based checkers for the
manifold-compatibility conditions that govern their behavior, and the
diagnostics (manifold shadow, distance-decay rates, escape statistics) used
to study saddle-point avoidance at desk scale.
"""

__version__ = "0.1.0"

from .problems import (Classification, ManifoldOracle, ObjectiveOracle,
                       ProblemInstance, covariant_consistency,
                       epigraph_instance, get_problem, make_zoo, spectral_lift,
                       tilt, zoo_labels)
from .regularity import (Condition, RegularityReport, SampleLadder, Verdict,
                         check_a, check_b, check_strong_a, cone_gap,
                         estimate_aiming, fit_sqrt_gap)
from .solvers import (DomainEscapeError, GradientMapping, IterateTrace,
                      MappingKind, NoiseModel, StepSchedule, make_mapping,
                      run, stopping_time)
from .diagnostics import (EscapeStats, RateFit, ShadowRecord,
                          convergence_statistics, distance_rate_fit,
                          escape_statistics, lyapunov_eta,
                          sequence_lemma_oracle, shadow_sequence)
from .harness import ExperimentConfig, RunManifest, acceptance_suite, run_experiment
