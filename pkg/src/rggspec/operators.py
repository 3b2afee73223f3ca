"""Dirichlet-masked graph Laplacian, Poisson solves and the discrete norms.

Functions on a cluster are pinned to zero on the boundary layer (cluster
vertices within distance 2 of the box faces); the operator acts on the
remaining interior vertices only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch, NoBoundaryLayerError, NoInteriorError, NonConvergence
from .geometry import Cluster

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DirichletOperator:
    """``-L`` restricted to interior vertices, as a CSR matrix.

    ``interior_index`` maps row ``r`` of ``matrix`` to the local cluster index
    of the corresponding vertex.
    """

    cluster: Cluster
    matrix: sparse.csr_matrix
    interior_index: np.ndarray

    @property
    def interior_count(self) -> int:
        return int(self.interior_index.size)

    def extend(self, u) -> np.ndarray:
        """Zero-extend an interior vector to the whole cluster."""
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros(self.cluster.size, dtype=np.float64)
        out[self.interior_index] = u
        return out

    def restrict(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64)[self.interior_index]

    def structural_hash(self) -> int:
        """64-bit digest of the sparsity pattern and values."""
        h = hashlib.blake2b(digest_size=8)
        for arr in (self.matrix.indptr, self.matrix.indices, self.matrix.data):
            h.update(np.ascontiguousarray(arr).tobytes())
        return int.from_bytes(h.digest(), "little")

    def to_coordinate_text(self) -> str:
        """One ``row col value`` line per stored entry, 0-based, row-major sorted."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{r} {c} {v!r}" for r, c, v in
                 zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist())]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True, eq=False)
class ClusterFunction:
    cluster: Cluster
    values: np.ndarray
    dirichlet: bool = False

    def __post_init__(self):
        if self.values.shape != (self.cluster.size,):
            raise DimensionMismatch(
                f"expected {self.cluster.size} values, got {self.values.shape}")
        if self.dirichlet and np.any(self.values[~self.cluster.interior_mask] != 0):
            raise ValueError("Dirichlet function must vanish on the boundary layer")


def assemble(cluster: Cluster) -> DirichletOperator:
    """Assemble the interior block of ``-L``.

    Diagonal entries count all cluster neighbours (interior or boundary),
    off-diagonals are -1 for interior neighbours.
    """
    interior = np.flatnonzero(cluster.interior_mask)
    if interior.size == 0:
        raise NoInteriorError("cluster has no interior vertices")
    if interior.size == cluster.size:
        raise NoBoundaryLayerError("cluster has no boundary-layer vertices")
    adj = cluster.adjacency()
    deg = cluster.degrees().astype(np.float64)
    sub = adj[interior][:, interior]
    a = (sparse.diags(deg[interior]) - sub).tocsr()
    a.sort_indices()
    return DirichletOperator(cluster=cluster, matrix=a, interior_index=interior)


def unmasked_laplacian(cluster: Cluster) -> sparse.csr_matrix:
    """Full ``-L`` on every cluster vertex (singular; kept for checks)."""
    adj = cluster.adjacency()
    return (sparse.diags(cluster.degrees().astype(np.float64)) - adj).tocsr()


def apply(op: DirichletOperator, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != op.interior_count:
        raise DimensionMismatch(f"vector of length {u.shape[0]} for operator of size "
                                f"{op.interior_count}")
    return op.matrix @ u


def _preconditioner(op: DirichletOperator, kind):
    if kind is None:
        return None
    if kind == "diagonal":
        inv = 1.0 / op.matrix.diagonal()
        return lambda r: inv * r
    if kind == "amg":
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(op.matrix, symmetry="symmetric",
                                               max_coarse=500)
        m = ml.aspreconditioner(cycle="V")
        return lambda r: m @ r
    raise ValueError(f"unknown preconditioner {kind!r}")


def conjugate_gradient(a, b, tol=DEFAULT_TOL, max_iter=None, precond=None, x0=None):
    """Preconditioned CG for SPD ``a``; stops on ``||b - a x|| <= tol ||b||``."""
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - a @ x
    z = precond(r) if precond else r
    p = z.copy()
    rz = r @ z
    target = tol * bnorm
    for it in range(1, max_iter + 1):
        ap = a @ p
        step = rz / (p @ ap)
        x += step * p
        r -= step * ap
        if np.linalg.norm(r) <= target:
            # the recursive residual drifts; confirm against the true one
            r = b - a @ x
            if np.linalg.norm(r) <= target:
                return x, it
        z = precond(r) if precond else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergence(
        f"CG did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {np.linalg.norm(b - a @ x) / bnorm:.3g})", partial=x)


def solve_dirichlet(op: DirichletOperator, f, tol: float = DEFAULT_TOL, max_iter=None,
                    preconditioner=None) -> np.ndarray:
    """Solve ``-L u = f`` on interior vertices with ``u = 0`` on the layer."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != op.interior_count:
        raise DimensionMismatch("right-hand side does not match operator size")
    x, _ = conjugate_gradient(op.matrix, f, tol=tol, max_iter=max_iter,
                              precond=_preconditioner(op, preconditioner))
    return x


def avsum(cluster: Cluster, values) -> float:
    return float(np.sum(values) / cluster.size)


def norms(u: ClusterFunction) -> dict:
    """``l2_avsum`` and ``h1_avsum`` normalized by the cluster cardinality.

    The H1 sum runs over ordered adjacent pairs, so every edge counts twice.
    """
    c = u.cluster
    v = u.values
    rows, cols = c.edge_arrays()
    diff = v[rows] - v[cols]
    return {"l2_avsum": float(np.sqrt(np.sum(v * v) / c.size)),
            "h1_avsum": float(np.sqrt(np.sum(diff * diff) / c.size))}


def dual_norm(op: DirichletOperator, f, tol: float = DEFAULT_TOL, preconditioner=None) -> float:
    """Dual norm of ``f`` against Dirichlet functions under the avsum pairing.

    ``sup_g avsum(f g) / ||g||_H1`` equals ``sqrt(avsum(f w))`` where ``w``
    solves the Dirichlet problem with datum ``f / 2``; the factor 1/2 comes
    from the ordered-pair convention in the H1 seminorm.
    """
    f = np.asarray(f, dtype=np.float64)
    if not np.any(f):
        return 0.0
    w = solve_dirichlet(op, 0.5 * f, tol=tol, preconditioner=preconditioner)
    return float(np.sqrt(max(f @ w, 0.0) / op.cluster.size))
