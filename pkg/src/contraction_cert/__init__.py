"""Designed Kantorovich metrics and contraction certificates for Markov kernels."""
from ._backend import backend
from .builders import BuildResult, LyapunovSpec, build_thm1, build_thm2, build_thm3
from .errors import (BudgetViolation, CertError, ConfigError, InvalidParameter, NoCertificate,
                     ProfileInvalid, StepSizeError, VerificationFailed)
from .euler import (EulerCoupling, EulerModel, OneStepLaw, coupled_step, lemma6_profile, onestep_law_1d,
                    rate_thm7, rate_thm8, rate_thm8a, rate_thm8b, universal_constants)
from .mala import (PerturbationBound, TargetSpec, coupled_mala_step, log_accept, mala_pipeline, perturb_rate,
                   propose, rejection_scaling)
from .metric import ConcaveDistance, Metric, RateProfile, Thm1Geometry, Thm3Geometry
from .verify import contraction_sweep, decay_fit, discrete_wasserstein, empirical_moments

__version__ = "0.1.0"
