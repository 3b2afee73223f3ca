"""Poisson point clouds, unit-distance graphs and their percolation clusters.

All coordinates live in the cube ``[0, box_side)**dim``; the connection radius
is 1 in the same length units.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import CapacityError, ClusterError, NoInteriorError

DEFAULT_POINT_CAP = 10**8
BOUNDARY_LAYER = 2.0

_PPC_HEADER = struct.Struct("<4sBddQQ")
_PPC_MAGIC = b"PPC1"


@dataclass(frozen=True, eq=False)
class PointCloud:
    dim: int
    box_side: float
    points: np.ndarray
    alpha: float
    seed: int

    def __post_init__(self):
        self.points.setflags(write=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def volume(self) -> float:
        return float(self.box_side) ** self.dim


@dataclass(frozen=True, eq=False)
class GeometricGraph:
    """Unit-radius graph stored as CSR neighbor lists (sorted ascending)."""

    cloud: PointCloud
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.cloud)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self) -> sparse.csr_matrix:
        n = self.n_vertices
        data = np.ones(self.indices.size, dtype=np.float64)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(n, n))


@dataclass(frozen=True, eq=False)
class Cluster:
    """Largest component of a geometric graph, re-indexed locally.

    ``vertex_ids`` are global vertex indices into ``graph.cloud.points``;
    ``indptr``/``indices`` describe the induced subgraph over positions
    ``0..size-1`` of ``vertex_ids``.
    """

    graph: GeometricGraph
    vertex_ids: np.ndarray
    interior_mask: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.vertex_ids.size)

    @property
    def dim(self) -> int:
        return self.graph.cloud.dim

    @property
    def box_side(self) -> float:
        return self.graph.cloud.box_side

    @property
    def points(self) -> np.ndarray:
        return self.graph.cloud.points[self.vertex_ids]

    @property
    def interior_count(self) -> int:
        return int(np.count_nonzero(self.interior_mask))

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_arrays(self):
        """Ordered edge list ``(rows, cols)`` in local indices (both directions)."""
        rows = np.repeat(np.arange(self.size), np.diff(self.indptr))
        return rows, self.indices

    def adjacency(self) -> sparse.csr_matrix:
        n = self.size
        data = np.ones(self.indices.size, dtype=np.float64)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(n, n))


@dataclass(frozen=True)
class WellConnectednessReport:
    component_diameter_lower: int
    component_diameter_lower_ok: bool
    point_count_ratio: float
    max_dist_to_cluster: float
    passes: bool
    diameter_is_lower_bound: bool = field(default=True)


def sample_poisson(dim: int, box_side: float, alpha: float, seed: int,
                   point_cap: int = DEFAULT_POINT_CAP) -> PointCloud:
    """Sample a Poisson process of intensity ``alpha`` on ``[0, box_side)^dim``."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if not box_side > 0:
        raise ValueError(f"box_side must be positive, got {box_side}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    mean = alpha * float(box_side) ** dim
    if mean > point_cap:
        raise CapacityError(f"expected {mean:.3g} points exceeds cap {point_cap:.3g}")
    rng = np.random.default_rng(int(seed))
    n = int(rng.poisson(mean))
    pts = rng.random((n, dim)) * box_side
    # guard the open upper face against rounding up to box_side
    np.minimum(pts, np.nextafter(box_side, 0.0), out=pts)
    return PointCloud(dim=dim, box_side=float(box_side), points=pts,
                      alpha=float(alpha), seed=int(seed))


def sample_coupled(dim: int, box_side: float, alphas, seed: int,
                   point_cap: int = DEFAULT_POINT_CAP) -> list[PointCloud]:
    """Monotonically coupled Poisson clouds at several intensities.

    One cloud is drawn at ``max(alphas)`` and every point carries a uniform
    mark; the cloud at ``a`` keeps the points whose mark is below
    ``a / max(alphas)``, so the returned clouds are nested.
    """
    alphas = [float(a) for a in alphas]
    top = sample_poisson(dim, box_side, max(alphas), seed, point_cap)
    marks = np.random.default_rng([int(seed), 1]).random(len(top))
    out = []
    for a in alphas:
        keep = marks < a / max(alphas)
        out.append(PointCloud(dim=dim, box_side=top.box_side,
                              points=top.points[keep].copy(), alpha=a, seed=top.seed))
    return out


def build_graph(cloud: PointCloud) -> GeometricGraph:
    """Connect every pair of points at Euclidean distance at most 1.

    Points are bucketed into a grid of unit cells; each point only compares
    against the 3**dim cells around its own.
    """
    pts = cloud.points
    n = pts.shape[0]
    if n < 2:
        return GeometricGraph(cloud, np.zeros(n + 1, dtype=np.int64),
                              np.zeros(0, dtype=np.int32))
    dim = cloud.dim
    ncell = max(int(np.ceil(cloud.box_side)), 1)
    cell = np.minimum(np.floor(pts).astype(np.int64), ncell - 1)
    strides = ncell ** np.arange(dim - 1, -1, -1, dtype=np.int64)
    cell_id = cell @ strides
    order = np.argsort(cell_id, kind="stable")
    sorted_ids = cell_id[order]
    sorted_pts = pts[order]
    sorted_cell = cell[order]
    starts = np.searchsorted(sorted_ids, np.arange(ncell ** dim), side="left")
    ends = np.searchsorted(sorted_ids, np.arange(ncell ** dim), side="right")

    # half of the neighbouring offsets (lexicographically positive) plus the
    # own cell, so each unordered pair is visited exactly once
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=dim) if o > (0,) * dim]
    rows, cols = [], []
    idx = np.arange(n, dtype=np.int64)

    # same cell: pairs i < j within the cell
    cnt = ends[sorted_ids] - idx - 1
    _collect(sorted_pts, idx, idx + 1, cnt, rows, cols)

    for off in offsets:
        nb = sorted_cell + np.asarray(off, dtype=np.int64)
        valid = np.all((nb >= 0) & (nb < ncell), axis=1)
        src = idx[valid]
        nb_id = nb[valid] @ strides
        _collect(sorted_pts, src, starts[nb_id], ends[nb_id] - starts[nb_id], rows, cols)

    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    # back to original point labels
    r, c = order[r], order[c]
    both_r = np.concatenate([r, c]).astype(np.int32)
    both_c = np.concatenate([c, r]).astype(np.int32)
    adj = sparse.csr_matrix((np.ones(both_r.size, dtype=np.int8), (both_r, both_c)),
                            shape=(n, n))
    adj.sort_indices()
    return GeometricGraph(cloud, adj.indptr.astype(np.int64), adj.indices.astype(np.int32))


def _collect(pts, src, start, count, rows, cols, chunk=4_000_000):
    """Append candidate pairs (src[i], start[i] + t), t < count[i], within distance 1."""
    count = np.maximum(count, 0)
    if count.sum() == 0:
        return
    # process in chunks of candidate pairs to bound memory
    csum = np.cumsum(count)
    lo = 0
    while lo < src.size:
        base = csum[lo - 1] if lo > 0 else 0
        hi = int(np.searchsorted(csum, base + chunk, side="right"))
        hi = max(hi, lo + 1)
        cnt = count[lo:hi]
        tot = int(cnt.sum())
        if tot:
            s = np.repeat(src[lo:hi], cnt)
            first = np.repeat(np.cumsum(cnt) - cnt, cnt)
            t = np.repeat(start[lo:hi], cnt) + (np.arange(tot) - first)
            d2 = np.sum((pts[s] - pts[t]) ** 2, axis=1)
            keep = d2 <= 1.0
            rows.append(s[keep])
            cols.append(t[keep])
        lo = hi


def boundary_distance(points: np.ndarray, box_side: float) -> np.ndarray:
    """Distance from each point to the faces of the cube ``[0, box_side]^dim``."""
    return np.minimum(points, box_side - points).min(axis=1)


def largest_component(graph: GeometricGraph) -> np.ndarray:
    """Sorted vertex ids of the largest connected component.

    Ties go to the component whose minimum vertex index is smallest.
    """
    n = graph.n_vertices
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    _, labels = csgraph.connected_components(graph.adjacency(), directed=False)
    sizes = np.bincount(labels)
    # first occurrence of each label is its minimum vertex index
    _, first = np.unique(labels, return_index=True)
    best = min(np.flatnonzero(sizes == sizes.max()), key=lambda lab: first[lab])
    return np.flatnonzero(labels == best)


def extract_cluster(graph: GeometricGraph) -> Cluster:
    """Largest component with its interior/boundary-layer partition."""
    if graph.n_vertices == 0:
        raise ClusterError("graph is empty")
    ids = largest_component(graph)
    if ids.size < 2:
        raise ClusterError("largest component has fewer than 2 vertices")
    pts = graph.cloud.points[ids]
    interior = boundary_distance(pts, graph.cloud.box_side) > BOUNDARY_LAYER
    if not interior.any():
        raise NoInteriorError("no cluster vertex lies farther than 2 from the boundary")
    sub = graph.adjacency()[ids][:, ids].tocsr()
    sub.sort_indices()
    return Cluster(graph=graph, vertex_ids=ids, interior_mask=interior,
                   indptr=sub.indptr.astype(np.int64), indices=sub.indices.astype(np.int32))


def cluster_from_points(points, box_side: float, alpha: float = 1.0, seed: int = 0) -> Cluster:
    """Convenience wrapper: hand-placed points -> graph -> cluster."""
    pts = np.asarray(points, dtype=np.float64)
    cloud = PointCloud(dim=pts.shape[1], box_side=float(box_side), points=pts,
                       alpha=alpha, seed=seed)
    return extract_cluster(build_graph(cloud))


def _bfs_far(adj: sparse.csr_matrix, src: int):
    dist = csgraph.shortest_path(adj, method="D", unweighted=True, indices=src)
    dist[~np.isfinite(dist)] = -1
    far = int(np.argmax(dist))
    return far, int(dist[far])


def well_connectedness(graph: GeometricGraph) -> WellConnectednessReport:
    """Diagnostics of the well-connected cube criteria for the whole box."""
    cloud = graph.cloud
    size = cloud.box_side
    n = graph.n_vertices
    ratio = n / (cloud.alpha * cloud.volume)
    if n == 0:
        return WellConnectednessReport(0, False, ratio, float("inf"), False)
    ids = largest_component(graph)
    sub = graph.adjacency()[ids][:, ids].tocsr()
    # double sweep: the eccentricity of a farthest vertex bounds the diameter below
    u, _ = _bfs_far(sub, 0)
    _, diam = _bfs_far(sub, u)
    diam_ok = diam >= size / 100.0
    tree = cKDTree(cloud.points[ids])
    dist, _ = tree.query(cloud.points, k=1)
    max_dist = float(dist.max())
    passes = bool(diam_ok and 0.5 <= ratio <= 2.0 and max_dist <= size / 100.0)
    return WellConnectednessReport(diam, bool(diam_ok), float(ratio), max_dist, passes)


def spans(cluster_points: np.ndarray, box_side: float) -> bool:
    """True if the points come within distance 1 of two opposite faces."""
    lo = (cluster_points <= 1.0).any(axis=0)
    hi = (cluster_points >= box_side - 1.0).any(axis=0)
    return bool(np.any(lo & hi))


def percolation_probe(dim: int, alpha_grid, side: float, trials: int, seed: int):
    """Fraction of trials whose largest component spans the box, per intensity.

    Trials use nested (thinned) clouds across ``alpha_grid`` so the estimate is
    monotone in ``alpha`` up to the rare case where an added point makes a
    different component the largest.
    """
    from .seeding import split_seed

    if trials < 1:
        raise ValueError("trials must be >= 1")
    alphas = [float(a) for a in alpha_grid]
    hits = np.zeros(len(alphas), dtype=np.int64)
    for t in range(trials):
        clouds = sample_coupled(dim, side, alphas, split_seed(seed, 0, t))
        for i, cloud in enumerate(clouds):
            g = build_graph(cloud)
            if g.n_vertices == 0:
                continue
            ids = largest_component(g)
            if ids.size and spans(cloud.points[ids], side):
                hits[i] += 1
    return [(a, hits[i] / trials) for i, a in enumerate(alphas)]


def write_cloud(cloud: PointCloud, path) -> None:
    """Write a cloud in the flat little-endian PPC1 binary format."""
    header = _PPC_HEADER.pack(_PPC_MAGIC, cloud.dim, cloud.alpha, cloud.box_side,
                              cloud.seed, len(cloud))
    body = np.ascontiguousarray(cloud.points, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def read_cloud(path) -> PointCloud:
    raw = Path(path).read_bytes()
    magic, dim, alpha, box_side, seed, count = _PPC_HEADER.unpack_from(raw, 0)
    if magic != _PPC_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    expected = _PPC_HEADER.size + 8 * dim * count
    if len(raw) != expected:
        raise ValueError(f"truncated file: {len(raw)} bytes, expected {expected}")
    pts = np.frombuffer(raw, dtype="<f8", offset=_PPC_HEADER.size).reshape(count, dim)
    return PointCloud(dim=dim, box_side=box_side, points=pts.astype(np.float64),
                      alpha=alpha, seed=seed)
