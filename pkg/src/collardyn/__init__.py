"""Discretized covariant Hamiltonian gauge dynamics on a boundary collar."""

from .algebra import LieAlgebraSpec, MinkowskiMetric, build_algebra, bracket, pair
from .mesh import CollarMesh, d_a, d_a_star, pairing
from .fields import (
    BoundaryState,
    BulkField,
    VierbeinField,
    metric_from_vierbein,
    palatini_map,
    restrict_to_boundary,
    vierbein_determinant,
)

__all__ = [
    "LieAlgebraSpec",
    "MinkowskiMetric",
    "build_algebra",
    "bracket",
    "pair",
    "CollarMesh",
    "d_a",
    "d_a_star",
    "pairing",
    "BoundaryState",
    "BulkField",
    "VierbeinField",
    "metric_from_vierbein",
    "palatini_map",
    "restrict_to_boundary",
    "vierbein_determinant",
]

__version__ = "0.1.0"
