"""Shadowing for nonautonomous difference equations with exponential trichotomies."""

__version__ = "0.1.0"

from .errors import (DichotomyRequired, HyperbolicityError, InversionFailure, NonConvergence,
                     NoSolution, ShadowingError, SingularRestriction, SmallGainViolated,
                     StepSizeUnderflow)
from .seqspace import C0, LInfty, Lp, SeqSpaceKind, WindowSequence, norm_b
from .linsys import LinearCocycle, TrichotomyData, constant_dichotomy, verify_trichotomy
from .green import GreenKernel, apply_green, green_norm_estimate
from .shadow import (Perturbation, ShadowResult, shadow_one_sided, shadow_two_sided)
