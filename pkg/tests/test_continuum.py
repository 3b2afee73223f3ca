import itertools
import json
import math

import numpy as np
import pytest

from rggspec import continuum
from rggspec.continuum import EigenfunctionEvaluator, continuum_spectrum
from rggspec.errors import InsufficientDepth

PI2 = math.pi ** 2


class TestSpectrum:
    def test_d2_values(self):
        spec = continuum_spectrum(2, 1.0, 6)
        assert [spec.lam(k) for k in range(1, 7)] == [c * PI2 for c in (2, 5, 5, 8, 10, 10)]
        assert spec.lam(1) == pytest.approx(19.7392088)

    def test_d3_principal(self):
        assert continuum_spectrum(3, 1.0, 1).lam(1) == 3 * PI2

    def test_tie_order_and_classes(self):
        spec = continuum_spectrum(2, 1.0, 6)
        idx = [e.multi_index for e in spec.entries]
        assert idx == [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]
        cls = [e.class_id for e in spec.entries]
        assert cls[1] == cls[2] and cls[4] == cls[5] and len(set(cls)) == 4
        assert spec.class_members(2) == [2, 3]
        assert spec.class_members(4) == [4]

    def test_class_can_extend_past_k_max(self):
        assert continuum_spectrum(2, 1.0, 2).class_members(2) == [2, 3]

    @pytest.mark.parametrize("dim", [2, 3])
    def test_brute_force_enumeration(self, dim):
        spec = continuum_spectrum(dim, 2.0, 60)
        brute = sorted(sum(v * v for v in n) for n in itertools.product(range(1, 12), repeat=dim))
        assert [e.lam for e in spec.entries] == [2.0 * PI2 * s for s in brute[:60]]

    def test_sigma_scaling(self):
        a, b = continuum_spectrum(2, 1.0, 10), continuum_spectrum(2, 1.7, 10)
        assert all(b.lam(k) == pytest.approx(1.7 * a.lam(k)) for k in range(1, 11))

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            continuum_spectrum(2, 0.0, 3)
        with pytest.raises(ValueError):
            continuum_spectrum(2, 1.0, 0)
        with pytest.raises(InsufficientDepth):
            continuum_spectrum(2, 1.0, 3).entry(4)

    def test_json(self):
        data = json.loads(continuum_spectrum(2, 1.0, 3).to_json())
        assert data[0] == {"lambda": 2 * PI2, "multi_index": [1, 1], "class_id": 0}

    @pytest.mark.slow
    def test_finite_difference_oracle(self):
        fd = continuum.fd_richardson(2, 6)
        exact = np.array([continuum_spectrum(2, 1.0, 6).lam(k) for k in range(1, 7)])
        assert np.max(np.abs(fd - exact) / exact) <= 2e-3

    def test_fd_stencil_small(self):
        # the 1-d second difference has closed-form eigenvalues
        n = 8
        vals = np.linalg.eigvalsh(continuum.fd_laplacian(1, n).toarray())
        k = np.arange(1, n)
        assert np.allclose(vals, 4 * n ** 2 * np.sin(k * np.pi / (2 * n)) ** 2)


class TestEvaluator:
    def test_center(self):
        ev = EigenfunctionEvaluator((1, 1))
        assert ev.evaluate([13.5, 13.5], 3)["value"][0] == pytest.approx(2.0)

    def test_faces(self):
        ev = EigenfunctionEvaluator((2, 3))
        pts = np.array([[0.0, 5.0], [27.0, 3.0], [7.0, 0.0], [11.0, 27.0]])
        assert np.allclose(ev.evaluate(pts, 3)["value"], 0.0, atol=1e-14)

    def test_gradient_central_differences(self, rng):
        m = 2
        side = 3.0 ** m
        ev = EigenfunctionEvaluator((2, 1))
        x = 0.05 * side + 0.9 * side * rng.random((100, 2))
        out = ev.evaluate(x, m)
        h = 1e-5 * side
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (ev.evaluate(x + e, m)["value"] - ev.evaluate(x - e, m)["value"]) / (2 * h)
            scale = np.abs(out["gradient"]).max()
            assert np.max(np.abs(fd - out["gradient"][:, i])) <= 1e-7 * scale

    def test_hessian_and_eigen_relation(self, rng):
        m = 1
        ev = EigenfunctionEvaluator((1, 2), sigma_bar=1.3)
        x = 3.0 * rng.random((20, 2))
        out = ev.evaluate(x, m)
        lap = out["hessian_diag"].sum(axis=1)
        # -sigma lap phi = lam 3^{-2m} phi on the dilated cube
        assert np.allclose(-1.3 * lap, ev.lam * 3.0 ** (-2 * m) * out["value"])

    def test_psi_matches_evaluate(self, rng):
        ev = EigenfunctionEvaluator((3, 1, 2))
        y = rng.random((10, 3))
        assert np.allclose(ev.psi(y), ev.evaluate(9.0 * y, 2)["value"])

    def test_domain_errors(self):
        ev = EigenfunctionEvaluator((1, 1))
        with pytest.raises(ValueError):
            ev.evaluate([28.0, 1.0], 3)
        with pytest.raises(ValueError):
            ev.evaluate([1.0, 1.0, 1.0], 3)

    @pytest.mark.parametrize("n", [(1, 1), (2, 3), (1, 2, 2)])
    def test_unit_mean_square(self, n):
        assert continuum.psi_moment(n, 2) == pytest.approx(1.0, abs=1e-13)

    def test_fourth_moment(self):
        assert continuum.psi_moment((1, 1), 4) == pytest.approx(2.25, abs=1e-13)
        assert continuum.psi_moment((1, 1, 1), 4) == pytest.approx(1.5 ** 3, abs=1e-13)


class TestGap:
    def test_d2_first_two(self):
        spec = continuum_spectrum(2, 1.0, 6)
        assert continuum.spectral_gap(spec, 1) == pytest.approx(3 * PI2)
        assert continuum.spectral_gap(spec, 2) == pytest.approx(3 * PI2)
        assert continuum.spectral_gap(spec, 3) == pytest.approx(3 * PI2)

    def test_brute_force(self):
        spec = continuum_spectrum(2, 1.0, 200)
        lams = np.array([e.lam for e in spec.entries])
        for k in range(1, 150):
            d = np.abs(lams - lams[k - 1])
            assert continuum.spectral_gap(spec, k) == pytest.approx(d[d > 1e-9].min())


class TestMoser:
    def test_d2_first(self):
        spec = continuum_spectrum(2, 1.0, 1)
        assert continuum.moser_ratio(spec, 1) == pytest.approx(2 / math.sqrt(2 * PI2))
        assert continuum.moser_ratio(spec, 1) == pytest.approx(0.4502, abs=1e-4)

    def test_d3_first(self):
        spec = continuum_spectrum(3, 1.0, 1)
        assert continuum.moser_ratio(spec, 1) == pytest.approx(2 ** 1.5 / (3 * PI2) ** 0.75)

    def test_sup_norm_is_attained(self):
        # ||psi||_inf = 2^{d/2}: checked on a grid through an extremum
        ev = EigenfunctionEvaluator((3, 2))
        y = np.array([[1 / 6, 1 / 4]])
        assert abs(ev.psi(y)[0]) == pytest.approx(2.0)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_bound_for_k_up_to_50(self, dim):
        spec = continuum_spectrum(dim, 1.0, 50)
        assert all(continuum.moser_check(spec, k)["bound_ok"] for k in range(1, 51))


class TestAdmissible:
    def test_values(self):
        spec = continuum_spectrum(2, 1.0, 6)
        q = math.sqrt(5) * 3.0 ** -5 * math.sqrt(2 * PI2)
        assert q == pytest.approx(0.0409, abs=1e-4)
        assert continuum.admissible(5, 1, spec, 1.0)
        assert not continuum.admissible(5, 1, spec, 30.0)

    def test_downward_closed(self):
        spec = continuum_spectrum(2, 1.0, 80)
        for m in (1, 2, 3, 4):
            flags = [continuum.admissible(m, k, spec) for k in range(1, 81)]
            first_false = flags.index(False) if False in flags else len(flags)
            assert not any(flags[first_false:])

    def test_bad_constant(self):
        with pytest.raises(ValueError):
            continuum.admissible(3, 1, continuum_spectrum(2, 1.0, 1), 0.0)


def test_quadrature_polynomial():
    # int_0^1 int_0^1 x^3 y^2 = 1/12
    val = continuum.gauss_legendre_average(lambda p: p[:, 0] ** 3 * p[:, 1] ** 2, 2, nodes=4)
    assert val == pytest.approx(1 / 12, rel=1e-14)
