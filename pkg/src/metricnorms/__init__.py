"""Smoothness-space norms on finite metric measure spaces."""

__version__ = "0.1.0"

from .space import (MetricMeasureSpace, ScaleWindow, DoublingReport,
                    MetricValidationError, ResourceError as SpaceResourceError,
                    build_periodic_grid, build_point_cloud, scale_of_pair,
                    ball_average, estimate_doubling)
from .fields import (ScalarField, FunctionFamilySpec, ConfigError,
                     generate_family, lipschitz_constant)
from .gradients import (GradientSequence, GradientClassSpec, FeasibilityReport,
                        base_class, shifted_class, lower_tail_class,
                        upper_tail_class, check_membership, transform_to_base,
                        transform_from_base, difference_gradient,
                        grand_maximal_gradient)
from .norms import (NormParams, aggregate, norm_infinity_q, bourdon_pajot_norm,
                    check_poincare, median, rearrangement, check_median_bound)
from .optimize import (HajlaszProgram, OptimizationResult, SolveConfig,
                       build_program, build_sobolev_program, solve,
                       brute_force_norm, feasibility_repair)
from .atoms import AtomDictionary, default_dictionary
from .lp_bands import (FilterBank, BandCoefficients, build_band_filters,
                       band_decompose, tl_norm, besov_norm, grand_norm)
from .qcmap import (MapSample, analyze_distortion, volume_derivative,
                    reverse_holder_scan, compose, change_of_variables_check,
                    invariance_experiment, build_map, identity_map,
                    linear_map, radial_power_map, interior_mask)
from .backends import compute_norm, BackendOptions
