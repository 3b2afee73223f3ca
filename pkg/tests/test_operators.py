import numpy as np
import pytest
import scipy.linalg
import scipy.optimize
from scipy.spatial.distance import pdist, squareform

from conftest import random_cluster
from rggspec import geometry, operators
from rggspec.errors import DimensionMismatch, NoBoundaryLayerError, NonConvergence
from rggspec.operators import ClusterFunction, assemble


def dense_minus_laplacian(cluster):
    adj = (squareform(pdist(cluster.points)) <= 1.0).astype(float)
    np.fill_diagonal(adj, 0.0)
    return np.diag(adj.sum(axis=1)) - adj


@pytest.fixture(scope="module")
def cluster300():
    cl = random_cluster(8.7, seed=21)
    assert 250 <= cl.size <= 330
    return cl


class TestAssemble:
    def test_star(self, star_cluster):
        op = assemble(star_cluster)
        assert op.matrix.toarray().tolist() == [[3.0]]
        assert star_cluster.size == 4

    def test_pair(self, pair_cluster):
        op = assemble(pair_cluster)
        assert op.matrix.toarray().tolist() == [[2.0, -1.0], [-1.0, 2.0]]
        assert np.allclose(np.linalg.eigvalsh(op.matrix.toarray()), [1.0, 3.0])

    def test_dense_oracle(self, cluster300):
        op = assemble(cluster300)
        full = dense_minus_laplacian(cluster300)
        idx = np.flatnonzero(cluster300.interior_mask)
        assert np.array_equal(op.matrix.toarray(), full[np.ix_(idx, idx)])

    def test_symmetric_positive_definite(self, small_cluster):
        a = assemble(small_cluster).matrix
        assert (a != a.T).nnz == 0
        assert np.linalg.eigvalsh(a.toarray())[0] > 0

    def test_row_sums_count_layer_neighbours(self, small_cluster):
        op = assemble(small_cluster)
        adj = small_cluster.adjacency()
        layer = (~small_cluster.interior_mask).astype(float)
        expected = (adj @ layer)[op.interior_index]
        assert np.allclose(np.asarray(op.matrix.sum(axis=1)).ravel(), expected)
        assert np.all(expected >= 0)

    def test_matches_graph_laplacian_pointwise(self, small_cluster, rng):
        op = assemble(small_cluster)
        u = rng.standard_normal(op.interior_count)
        ext = op.extend(u)
        rows, cols = small_cluster.edge_arrays()
        lap = np.zeros(small_cluster.size)
        for x, y in zip(rows, cols):
            lap[x] += ext[y] - ext[x]
        assert np.allclose(op.matrix @ u, -lap[op.interior_index], atol=1e-12)

    def test_unmasked_annihilates_constants(self, small_cluster):
        lap = operators.unmasked_laplacian(small_cluster)
        assert np.abs(lap @ np.ones(small_cluster.size)).max() == 0.0

    def test_no_boundary_layer(self):
        cl = geometry.cluster_from_points([(4.0, 4.0), (4.5, 4.0)], 9.0)
        with pytest.raises(NoBoundaryLayerError):
            assemble(cl)

    def test_coordinate_text(self, pair_cluster):
        text = assemble(pair_cluster).to_coordinate_text()
        assert text == "0 0 2.0\n0 1 -1.0\n1 0 -1.0\n1 1 2.0\n"

    def test_structural_hash_is_stable(self, small_cluster):
        assert assemble(small_cluster).structural_hash() == assemble(small_cluster).structural_hash()


class TestApply:
    def test_zero(self, small_cluster):
        op = assemble(small_cluster)
        assert not np.any(operators.apply(op, np.zeros(op.interior_count)))

    def test_symmetry_residual(self, small_cluster, rng):
        op = assemble(small_cluster)
        for _ in range(10):
            u, v = rng.standard_normal((2, op.interior_count))
            lhs = operators.apply(op, u) @ v
            rhs = u @ operators.apply(op, v)
            assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_dense_product(self, cluster300, rng):
        op = assemble(cluster300)
        u = rng.standard_normal(op.interior_count)
        d = op.matrix.toarray() @ u
        assert np.max(np.abs(operators.apply(op, u) - d)) <= 1e-12 * np.abs(d).max()

    def test_dimension_mismatch(self, star_cluster):
        with pytest.raises(DimensionMismatch):
            operators.apply(assemble(star_cluster), np.zeros(2))


class TestSolve:
    def test_zero_rhs(self, small_cluster):
        op = assemble(small_cluster)
        assert not np.any(operators.solve_dirichlet(op, np.zeros(op.interior_count)))

    def test_star(self, star_cluster):
        u = operators.solve_dirichlet(assemble(star_cluster), np.array([6.0]))
        assert np.allclose(u, [2.0])

    @pytest.mark.parametrize("precond", [None, "diagonal", "amg"])
    def test_dense_lu_oracle(self, cluster300, rng, precond):
        op = assemble(cluster300)
        f = rng.standard_normal(op.interior_count)
        ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(op.matrix.toarray()), f)
        u = operators.solve_dirichlet(op, f, tol=1e-12, preconditioner=precond)
        assert np.linalg.norm(u - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_nonconvergence_carries_partial(self, cluster300, rng):
        op = assemble(cluster300)
        f = rng.standard_normal(op.interior_count)
        with pytest.raises(NonConvergence) as exc:
            operators.solve_dirichlet(op, f, tol=1e-12, max_iter=2)
        assert exc.value.partial.shape == f.shape

    def test_bad_inputs(self, star_cluster):
        op = assemble(star_cluster)
        with pytest.raises(ValueError):
            operators.solve_dirichlet(op, np.ones(1), tol=0.0)
        with pytest.raises(DimensionMismatch):
            operators.solve_dirichlet(op, np.ones(3))


class TestNorms:
    def test_constant(self, small_cluster):
        r = operators.norms(ClusterFunction(small_cluster, np.full(small_cluster.size, -2.5)))
        assert r["l2_avsum"] == pytest.approx(2.5)
        assert r["h1_avsum"] == 0.0

    def test_two_vertices(self):
        cl = geometry.cluster_from_points([(4.0, 4.0), (4.5, 4.0)], 9.0)
        r = operators.norms(ClusterFunction(cl, np.array([0.0, 1.0])))
        assert r["h1_avsum"] == pytest.approx(1.0)
        assert r["l2_avsum"] == pytest.approx(np.sqrt(0.5))

    def test_double_loop_oracle(self, rng):
        cl = random_cluster(7.0, seed=3)
        v = rng.standard_normal(cl.size)
        pts = cl.points
        h1 = l2 = 0.0
        for i in range(cl.size):
            l2 += v[i] ** 2
            for j in range(cl.size):
                if i != j and np.linalg.norm(pts[i] - pts[j]) <= 1.0:
                    h1 += (v[i] - v[j]) ** 2
        r = operators.norms(ClusterFunction(cl, v))
        assert r["l2_avsum"] == pytest.approx(np.sqrt(l2 / cl.size), rel=1e-12)
        assert r["h1_avsum"] == pytest.approx(np.sqrt(h1 / cl.size), rel=1e-12)

    def test_energy_identity(self, small_cluster, rng):
        # for Dirichlet functions the ordered-pair seminorm is 2 u.Au / N
        op = assemble(small_cluster)
        u = rng.standard_normal(op.interior_count)
        h1 = operators.norms(ClusterFunction(small_cluster, op.extend(u), dirichlet=True))
        assert h1["h1_avsum"] ** 2 == pytest.approx(2 * u @ (op.matrix @ u) / small_cluster.size)

    def test_cluster_function_checks(self, star_cluster):
        with pytest.raises(DimensionMismatch):
            ClusterFunction(star_cluster, np.zeros(3))
        with pytest.raises(ValueError):
            ClusterFunction(star_cluster, np.ones(4), dirichlet=True)

    def test_avsum(self, star_cluster):
        assert operators.avsum(star_cluster, [1.0, 2.0, 3.0, 6.0]) == 3.0


def sup_form(cluster, op, f, rng, restarts=30):
    """Direct maximization of avsum(f g) / ||g||_H1 over Dirichlet g."""
    n = op.interior_count

    def neg_ratio(g):
        h1 = operators.norms(ClusterFunction(cluster, op.extend(g)))["h1_avsum"]
        return -(f @ g / cluster.size) / h1

    best = 0.0
    starts = rng.standard_normal((restarts, n))
    for g0 in starts:
        best = max(best, -neg_ratio(g0))
    for g0 in starts[:5]:
        res = scipy.optimize.minimize(neg_ratio, g0, method="BFGS")
        best = max(best, -res.fun)
    return best


class TestDualNorm:
    def test_zero(self, star_cluster):
        assert operators.dual_norm(assemble(star_cluster), np.zeros(1)) == 0.0

    def test_star_by_hand(self, star_cluster):
        # w = (1/2)/3, value sqrt(f w / N) = sqrt(1/24); the sup form gives
        # (g/4) / sqrt(6 g^2 / 4) for any g != 0, the same number
        op = assemble(star_cluster)
        val = operators.dual_norm(op, np.array([1.0]))
        assert val == pytest.approx(np.sqrt(1 / 24), rel=1e-12)
        assert val == pytest.approx(0.25 / np.sqrt(1.5), rel=1e-12)

    @pytest.mark.parametrize("seed", [1, 2, 5])
    def test_sup_form_agrees(self, seed, rng):
        cl = random_cluster(6.0, seed=seed)
        op = assemble(cl)
        f = rng.standard_normal(op.interior_count)
        assert sup_form(cl, op, f, rng) == pytest.approx(operators.dual_norm(op, f), rel=0.01)

    def test_cauchy_schwarz(self, small_cluster, rng):
        op = assemble(small_cluster)
        f = rng.standard_normal(op.interior_count)
        dn = operators.dual_norm(op, f)
        for _ in range(50):
            g = rng.standard_normal(op.interior_count)
            h1 = operators.norms(ClusterFunction(small_cluster, op.extend(g)))["h1_avsum"]
            assert abs(f @ g) / small_cluster.size <= dn * h1 * (1 + 1e-9)
