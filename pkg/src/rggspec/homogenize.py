"""Effective coefficient, first-order correctors and two-scale edge residuals.

The coefficient estimate is the Dirichlet energy per cluster vertex of the
graph-harmonic function with affine boundary data ``x -> e . x``. With the
ordered-pair sum halved, this is the same per-vertex normalization under
which ``-L`` approximates ``-sigma_bar * Laplacian``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .continuum import EigenfunctionEvaluator
from .errors import RggSpecError
from .geometry import Cluster, build_graph, extract_cluster, sample_poisson, well_connectedness
from .operators import DEFAULT_TOL, assemble, avsum, conjugate_gradient, _preconditioner
from .seeding import split_seed

log = logging.getLogger(__name__)

AMG_THRESHOLD = 5000


@dataclass(frozen=True)
class CoefficientEstimate:
    direction: tuple
    sigma_hat: float
    box_side: float
    alpha: float
    trials: int
    stderr: float
    samples: tuple = ()


@dataclass(frozen=True, eq=False)
class CorrectorField:
    cluster: Cluster
    direction: tuple
    values: np.ndarray


def _auto_precond(op, kind):
    if kind == "auto":
        kind = "amg" if op.interior_count > AMG_THRESHOLD else None
    return _preconditioner(op, kind)


def affine_harmonic(cluster: Cluster, direction, tol: float = DEFAULT_TOL,
                    offset: float = 0.0, preconditioner="auto", op=None) -> np.ndarray:
    """Graph-harmonic extension of ``x -> direction . x + offset`` from the layer.

    Returns values on every cluster vertex: the affine data on the boundary
    layer and the solution of ``-L u = 0`` on the interior.
    """
    e = np.asarray(direction, dtype=np.float64)
    if e.shape != (cluster.dim,):
        raise ValueError(f"direction must have {cluster.dim} components")
    if op is None:
        op = assemble(cluster)
    ell = cluster.points @ e + offset
    bnd = np.where(cluster.interior_mask, 0.0, ell)
    # moving the known layer values to the right-hand side
    rhs = op.restrict(cluster.adjacency() @ bnd)
    u_int, _ = conjugate_gradient(op.matrix, rhs, tol=tol,
                                  precond=_auto_precond(op, preconditioner))
    u = ell.copy()
    u[op.interior_index] = u_int
    return u


def dirichlet_energy(cluster: Cluster, u) -> float:
    """``(1/N) * (1/2) * sum over ordered adjacent pairs of (u(x) - u(y))^2``."""
    rows, cols = cluster.edge_arrays()
    d = np.asarray(u)[rows] - np.asarray(u)[cols]
    return float(0.5 * np.sum(d * d) / cluster.size)


def sigma_from_cluster(cluster: Cluster, direction, tol: float = DEFAULT_TOL,
                       offset: float = 0.0, preconditioner="auto") -> float:
    u = affine_harmonic(cluster, direction, tol=tol, offset=offset,
                        preconditioner=preconditioner)
    return dirichlet_energy(cluster, u)


def estimate_sigma(dim: int, alpha: float, box_side: float, direction, trials: int,
                   seed: int, tol: float = DEFAULT_TOL, offset: float = 0.0,
                   check_connectedness: bool = True, preconditioner="auto") -> CoefficientEstimate:
    """Mean and standard error of the affine-energy estimator over fresh clouds.

    Trial ``t`` samples with ``split_seed(seed, 0, t)``.
    """
    e = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    vals = []
    for t in range(trials):
        cloud = sample_poisson(dim, box_side, alpha, split_seed(seed, 0, t))
        graph = build_graph(cloud)
        if check_connectedness:
            rep = well_connectedness(graph)
            if not rep.passes:
                warnings.warn(f"trial {t}: box fails the well-connectedness diagnostics "
                              f"({rep})", RuntimeWarning, stacklevel=2)
        cluster = extract_cluster(graph)
        vals.append(sigma_from_cluster(cluster, e, tol=tol, offset=offset,
                                       preconditioner=preconditioner))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return CoefficientEstimate(direction=tuple(float(v) for v in e), sigma_hat=float(vals.mean()),
                               box_side=float(box_side), alpha=float(alpha), trials=trials,
                               stderr=se, samples=tuple(float(v) for v in vals))


def approximate_corrector(cluster: Cluster, direction, tol: float = DEFAULT_TOL,
                          preconditioner="auto", op=None) -> CorrectorField:
    """``u - e . x`` for the affine-data harmonic ``u``, shifted to avsum zero."""
    e = np.asarray(direction, dtype=np.float64)
    u = affine_harmonic(cluster, e, tol=tol, preconditioner=preconditioner, op=op)
    phi = u - cluster.points @ e
    phi -= avsum(cluster, phi)
    return CorrectorField(cluster=cluster, direction=tuple(float(v) for v in e), values=phi)


def two_scale_ansatz(cluster: Cluster, evaluator: EigenfunctionEvaluator, correctors, m: int):
    """``phi_0 + sum_i d_i phi_0 * corrector_i`` at every cluster vertex."""
    ev = evaluator.evaluate(cluster.points, m)
    v = ev["value"].copy()
    for i, c in enumerate(correctors):
        v += ev["gradient"][:, i] * c.values
    return v


def bulk_mask(points: np.ndarray, box_side: float, margin: float = 0.25) -> np.ndarray:
    """Points at least ``margin * box_side`` away from every face."""
    return np.all((points >= margin * box_side) & (points <= (1 - margin) * box_side), axis=1)


def two_scale_residual(cluster: Cluster, eigvec, evaluator: EigenfunctionEvaluator,
                       correctors, m: int, margin: float = 0.25) -> dict:
    """Quantiles of ``|d phi_m - d v|`` over bulk edges with interior endpoints.

    ``eigvec`` holds the aligned discrete eigenvector on every cluster vertex.
    """
    if correctors is None or len(correctors) != cluster.dim:
        raise RggSpecError(f"need {cluster.dim} correctors, got "
                           f"{0 if correctors is None else len(correctors)}")
    v = two_scale_ansatz(cluster, evaluator, correctors, m)
    phi = np.asarray(eigvec, dtype=np.float64)
    ok = cluster.interior_mask & bulk_mask(cluster.points, cluster.box_side, margin)
    rows, cols = cluster.edge_arrays()
    sel = ok[rows] & ok[cols] & (rows < cols)
    r, c = rows[sel], cols[sel]
    res = np.abs((phi[r] - phi[c]) - (v[r] - v[c]))
    if res.size == 0:
        return {"edge_residual_median": float("nan"), "edge_residual_p95": float("nan"),
                "edges": 0}
    return {"edge_residual_median": float(np.median(res)),
            "edge_residual_p95": float(np.quantile(res, 0.95)), "edges": int(res.size)}
