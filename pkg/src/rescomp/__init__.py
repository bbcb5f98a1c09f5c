"""Resolvent calculus for monotone operators on small Euclidean spaces."""
from .errors import *  # noqa: F401,F403
from .linalg import InnerProduct, LinearMap, operator_norm, pseudo_inverse, solve, sqrt_psd, weighted_dot
from .operators import (AffineSubspace, Ball, Box, ConstantShift, Halfspace, LinearMonotone,
                        NormalCone, ScaledIdentity, Singleton, SubdiffL1, Zero, atom_resolvent,
                        inclusion_residual, project)
from .calculus import (AddScaledId, Average, Chain, Cocompose, Comixture, Compose, DirectSum,
                       DouglasRachford, DRProduct, Inverse, Leaf, Mixture, Opaque, Parallel,
                       PsiLift, ReparamOptions, ScaleLeft, ScaleRight, StandardComposition,
                       TranslateIn, TranslateOut, WeightedCompose, Yosida, coisometry_collapse,
                       dr_via_composition, lift_mixture, parallel_composition_check,
                       reparam_resolvent, resolvent, yosida_value)

__version__ = "0.1.0"
