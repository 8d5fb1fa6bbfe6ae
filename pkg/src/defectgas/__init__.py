"""Free path statistics for Lorentz gases on randomly defected affine lattices."""

from ._kernels import BACKEND
from .errors import (
    AntipodalDirection,
    ConfigError,
    DefectGasError,
    GridMismatch,
    InsufficientSamples,
    InvalidDimension,
    InvalidLaunch,
    InvalidOffset,
    NotUnimodular,
    UnboundedRegion,
)
from .free_path import BetaFunction, DirectionLaw, PathSample, empirical_F_averaged, empirical_F_fixed_field, free_path
from .geometry import (
    Annulus,
    Ball,
    Box,
    ConvexRegion,
    Cylinder,
    DefectScene,
    PointSet,
    count_marked,
    count_theta,
    defect_points_physical,
    defect_points_rotated,
    enumerate_points,
    project_J,
)
from .haar import (
    LatticeSample,
    MarkedLatticeSample,
    sample_affine,
    sample_marked_limit,
    sample_unimodular_2d,
    sample_unimodular_siegel,
)
from .lattice import (
    AffineLattice,
    FlowTime,
    OffsetClass,
    UnimodularMatrix,
    flow_matrix,
    lattice_point,
    rotation_to_direction,
)
from .limit_process import (
    CheckReport,
    ComparisonReport,
    LimitLawSpec,
    TailReport,
    comparison_lemma_check,
    estimate_F,
    estimate_Fbar,
    siegel_check,
    siegel_veech_check,
    tail_bound_check,
    tail_constant,
)
from .random_field import (
    Displacement,
    FieldSpec,
    Mark,
    MarkLaw,
    MarkPredicate,
    MixingEstimate,
    estimate_beta_xi,
    estimate_theta_k,
    mark_at,
    marks,
)
from .stats import EmpiricalCDF, RandomnessHandle, ks_distance, wilson_band

__version__ = "0.1.0"
