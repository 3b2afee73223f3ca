"""Random geometric graph Laplacian spectra versus their homogenized continuum limit."""

from .continuum import ContinuumSpectrum, EigenfunctionEvaluator, continuum_spectrum
from .eigen import EigenSet, dense_eigendecomposition, jacobi_eigh, smallest_eigenpairs
from .errors import (CapacityError, ClusterError, ConfigError, DegenerateAlignmentFailure,
                     DimensionMismatch, InsufficientDepth, NoBoundaryLayerError,
                     NoInteriorError, NonConvergence, RggSpecError)
from .geometry import (Cluster, GeometricGraph, PointCloud, build_graph, extract_cluster,
                       sample_poisson, well_connectedness)
from .operators import ClusterFunction, DirichletOperator, assemble, solve_dirichlet
from .seeding import mix64, split_seed

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "Cluster", "ClusterError", "ClusterFunction", "ConfigError",
    "ContinuumSpectrum", "DegenerateAlignmentFailure", "DimensionMismatch",
    "DirichletOperator", "EigenSet", "EigenfunctionEvaluator", "GeometricGraph",
    "InsufficientDepth", "NoBoundaryLayerError", "NoInteriorError", "NonConvergence",
    "PointCloud", "RggSpecError", "assemble", "build_graph", "continuum_spectrum",
    "dense_eigendecomposition", "extract_cluster", "jacobi_eigh", "mix64", "sample_poisson",
    "smallest_eigenpairs", "solve_dirichlet", "split_seed", "well_connectedness",
]
