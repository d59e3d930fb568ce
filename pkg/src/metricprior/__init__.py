"""Metric-preserving generative model for deformable triangle meshes.

Differentiable heat-method geodesics, a small reverse-mode autodiff engine,
a point-cloud VAE with an intrinsic/extrinsic latent split, metric losses,
a staged trainer and latent-space applications.
"""
from .errors import NumericalError, ValidationError
from .geodesics import (
    DistanceMatrix,
    GeodesicConfig,
    MetricDistortionReport,
    bounded_distortion,
    heat_distance_all,
    heat_distance_single,
    heat_distance_vjp,
    interp_metric,
)
from .mesh import NeighborhoodMask, TriMesh, load_off, neighborhood_mask, save_off, shape_diameter
from .operators import MeshOperators, apply_divergence, apply_gradient, assemble_operators

__version__ = "0.1.0"
