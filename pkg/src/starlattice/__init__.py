"""Weighted lattice-point counts in star bodies and their error terms."""

__version__ = "0.1.0"

from .analysis import (
    EnvelopeExponentRegressor,
    ExponentFit,
    ResidualRecord,
    ResidualSeries,
    RotationAverage,
    TheoryExponents,
    fit_envelope_exponent,
    residual_series,
    rho_grid,
    rotation_average,
    theory_exponents,
)
from .fourier import DecayProfile, decay_sweep, shell_transform, surface_transform
from .geometry import (
    Ball,
    DensityBody,
    Ellipsoid,
    HomogeneousExtension,
    Polygon,
    Rotation,
    SphereField,
    StarBody,
    Superellipsoid,
    body_from_density,
    gauge,
    haar_rotations,
    homogeneous_extension,
    positive_decomposition,
    radon_nikodym,
)
from .lattice import BudgetError, CountRequest, CountResult, weighted_count
from .quadrature import (
    body_integral,
    sphere_integral,
    sphere_rule,
    target_integral,
    verify_volume_identity,
)
from .reporting import ExperimentConfig, RunRecord, emit_plot_data, run

__all__ = [name for name in dir() if not name.startswith("_")]
