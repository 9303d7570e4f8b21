import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qstlab import qcore
from qstlab.errors import NotPositive, ZeroTrace
from conftest import random_density


def fidelity_oracle(r1, r2):
    # textbook form with scipy's general matrix square root
    s = scipy.linalg.sqrtm(r1)
    return float(np.real(np.trace(scipy.linalg.sqrtm(s @ r2 @ s))) ** 2)


class TestAlphaToRho:
    @pytest.mark.parametrize("alpha, expected", [
        ([1, 0, 0, 0], np.diag([1.0, 0.0])),
        ([1, 1, 0, 0], np.diag([0.5, 0.5])),
        ([1, 0, 1, 0], np.array([[0.5, 0.5], [0.5, 0.5]])),
    ])
    def test_hand_examples(self, alpha, expected):
        np.testing.assert_allclose(qcore.alpha_to_rho(alpha), expected, atol=1e-15)

    def test_layout_imaginary_part(self):
        # L = [[1, 0], [i, 1]] -> L L† = [[1, -i], [i, 2]] / 3
        rho = qcore.alpha_to_rho([1, 1, 0, 1])
        np.testing.assert_allclose(rho, np.array([[1, -1j], [1j, 2]]) / 3, atol=1e-15)

    def test_layout_row_major_lower(self):
        d = 3
        L = np.zeros((d, d), complex)
        L[np.diag_indices(d)] = [1, 2, 3]
        L[1, 0], L[2, 0], L[2, 1] = 4 + 5j, 6 + 7j, 8 + 9j
        alpha = qcore.lower_to_alpha(L)
        np.testing.assert_array_equal(alpha, [1, 2, 3, 4, 5, 6, 7, 8, 9])
        np.testing.assert_array_equal(qcore.alpha_to_lower(alpha), L)

    def test_zero_alpha(self):
        with pytest.raises(ZeroTrace):
            qcore.alpha_to_rho(np.zeros(4))

    def test_batched_matches_loop(self, rng):
        a = rng.standard_normal((5, 16))
        batch = qcore.alpha_to_rho(a)
        for i in range(5):
            np.testing.assert_allclose(batch[i], qcore.alpha_to_rho(a[i]), atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.sampled_from([4, 16, 64]),
                  elements=st.floats(-1e150, 1e150, allow_nan=False, allow_infinity=False)))
    def test_output_is_density_matrix(self, alpha):
        if not np.any(alpha):
            return
        assert qcore.check_density_matrix(qcore.alpha_to_rho(alpha)) == []


class TestRhoToAlpha:
    def test_maximally_mixed(self):
        for d in (2, 4, 8):
            alpha = qcore.rho_to_alpha(np.eye(d) / d)
            np.testing.assert_allclose(alpha[:d], np.sqrt(1 / d), atol=1e-12)
            np.testing.assert_allclose(alpha[d:], 0.0, atol=1e-15)

    def test_pure_diag(self):
        delta = qcore.CHOLESKY_DELTA
        alpha = qcore.rho_to_alpha(np.diag([1.0, 0.0]))
        np.testing.assert_allclose(alpha, [np.sqrt(1 - delta / 2), np.sqrt(delta / 2), 0, 0],
                                   rtol=1e-9, atol=1e-15)

    def test_canonical_nonnegative_diagonal(self, rng):
        for d in (2, 4, 8):
            alpha = qcore.rho_to_alpha(random_density(d, rng))
            assert np.all(alpha[:d] >= 0)

    @pytest.mark.parametrize("d", [2, 4, 8, 16])
    def test_round_trip(self, d, rng):
        rhos = np.array([random_density(d, rng) for _ in range(50)])
        f = qcore.fidelity(qcore.alpha_to_rho(qcore.rho_to_alpha(rhos)), rhos)
        assert np.min(f) >= 1 - 1e-7

    def test_round_trip_pure(self, rng):
        rhos = np.array([random_density(4, rng, rank=1) for _ in range(50)])
        f = qcore.fidelity(qcore.alpha_to_rho(qcore.rho_to_alpha(rhos)), rhos)
        assert np.min(f) >= 1 - 1e-7

    def test_negative_input(self):
        with pytest.raises(NotPositive):
            qcore.rho_to_alpha(np.diag([1.5, -0.5]))


class TestFidelity:
    def test_examples(self):
        z0, z1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        assert qcore.fidelity(z0, z0) == pytest.approx(1.0, abs=1e-9)
        assert qcore.fidelity(z0, z1) == pytest.approx(0.0, abs=1e-12)
        assert qcore.fidelity(z0, np.eye(2) / 2) == pytest.approx(0.5, abs=1e-9)

    def test_against_scipy_oracle(self, rng):
        for d in (2, 4, 8):
            for _ in range(10):
                r1, r2 = random_density(d, rng), random_density(d, rng)
                assert qcore.fidelity(r1, r2) == pytest.approx(fidelity_oracle(r1, r2), abs=1e-9)

    def test_symmetric(self, rng):
        for _ in range(20):
            r1, r2 = random_density(4, rng), random_density(4, rng, rank=1)
            assert abs(qcore.fidelity(r1, r2) - qcore.fidelity(r2, r1)) <= 1e-9

    def test_bhattacharyya_for_diagonal(self, rng):
        for _ in range(20):
            p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
            expected = np.sum(np.sqrt(p * q)) ** 2
            assert qcore.fidelity(np.diag(p), np.diag(q)) == pytest.approx(expected, abs=1e-10)

    def test_pure_states_overlap(self, rng):
        a = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        b = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        f = qcore.fidelity(np.outer(a, a.conj()), np.outer(b, b.conj()))
        assert f == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=1e-9)

    def test_batched(self, rng):
        r1 = np.array([random_density(4, rng) for _ in range(6)])
        r2 = np.array([random_density(4, rng) for _ in range(6)])
        f = qcore.fidelity(r1, r2)
        assert f.shape == (6,)
        for i in range(6):
            assert f[i] == pytest.approx(qcore.fidelity(r1[i], r2[i]), abs=1e-14)


class TestDerivedMetrics:
    def test_bures(self):
        z0, z1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        assert qcore.bures_distance(z0, z0) == pytest.approx(0.0, abs=1e-8)
        assert qcore.bures_distance(z0, z1) == pytest.approx(2.0, abs=1e-8)
        # F = 0.25 for |0> vs cos(pi/3)|0> + sin(pi/3)|1>
        v = np.array([np.cos(np.pi / 3), np.sin(np.pi / 3)])
        assert qcore.bures_distance(z0, np.outer(v, v)) == pytest.approx(1.0, abs=1e-9)

    def test_angle(self):
        z0, z1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        assert qcore.angle_metric(z0, z0) == pytest.approx(0.0, abs=1e-7)
        assert qcore.angle_metric(z0, z1) == pytest.approx(np.pi / 2)
        assert qcore.angle_metric(z0, np.eye(2) / 2) == pytest.approx(np.pi / 4)

    def test_bures_angle_consistency(self, rng):
        for _ in range(20):
            r1, r2 = random_density(4, rng), random_density(4, rng)
            db, da = qcore.bures_distance(r1, r2), qcore.angle_metric(r1, r2)
            assert db == pytest.approx(2 * (1 - np.cos(da)), abs=1e-9)

    def test_infidelity_and_log(self):
        z0 = np.diag([1.0, 0.0])
        assert qcore.infidelity(z0, z0) == pytest.approx(0.0, abs=1e-12)
        assert qcore.log_infidelity(z0, z0) == -16.0
        assert qcore.log10_infidelity_from_fidelity(0.9) == pytest.approx(-1.0)

    def test_purity(self):
        assert qcore.purity(np.eye(4) / 4) == pytest.approx(0.25)


class TestDensityChecks:
    def test_detects_each_violation(self):
        assert qcore.check_density_matrix(np.eye(2) / 2) == []
        assert any("Hermitian" in p for p in qcore.check_density_matrix(np.array([[0.5, 1], [0, 0.5]])))
        assert any("trace" in p for p in qcore.check_density_matrix(np.eye(2)))
        assert any("negative" in p for p in qcore.check_density_matrix(np.diag([1.5, -0.5])))
