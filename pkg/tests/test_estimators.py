import numpy as np
import pytest

from qstlab import datagen, qcore
from qstlab.errors import DimensionMismatch, RankDeficient
from qstlab.estimators import (hermitian_basis, lre_design, lre_estimate, physical_projection,
                               project_to_simplex)
from qstlab.povm import MeasurementSet, born_probabilities, cube_measurement, make_rng, sample_frequencies

from conftest import ket, random_density


class TestBasis:
    @pytest.mark.parametrize("d", [2, 3, 4, 8])
    def test_trace_orthonormal(self, d):
        b = hermitian_basis(d)
        assert b.shape == (d * d, d, d)
        gram = np.einsum("aij,bji->ab", b, b)
        np.testing.assert_allclose(gram, np.eye(d * d), atol=1e-12)
        np.testing.assert_allclose(b, np.conj(np.swapaxes(b, -1, -2)), atol=0)

    def test_only_first_has_trace(self):
        tr = np.trace(hermitian_basis(4), axis1=-2, axis2=-1)
        assert tr[0] == pytest.approx(2.0)
        np.testing.assert_allclose(tr[1:], 0, atol=1e-14)


class TestProjection:
    def test_simplex_examples(self):
        np.testing.assert_allclose(project_to_simplex([1.2, -0.2]), [1.0, 0.0])
        np.testing.assert_allclose(project_to_simplex([0.5, 0.5]), [0.5, 0.5])
        np.testing.assert_allclose(project_to_simplex([0.0, 0.0, 0.0]), [1 / 3] * 3)
        np.testing.assert_allclose(project_to_simplex([2.0, 1.0, -5.0]), [1.0, 0.0, 0.0])

    def test_simplex_against_brute_force(self, rng):
        # for small inputs, the projection minimises distance among dense simplex points
        grid = np.array([(a, b, 1 - a - b) for a in np.linspace(0, 1, 201)
                         for b in np.linspace(0, 1, 201) if a + b <= 1 + 1e-12])
        for _ in range(10):
            v = rng.standard_normal(3)
            p = project_to_simplex(v)
            best = np.min(np.linalg.norm(grid - v, axis=1))
            assert np.linalg.norm(p - v) <= best + 1e-12
            assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)

    def test_diag_example(self):
        out = physical_projection(np.diag([1.2, -0.2]))
        np.testing.assert_allclose(out, np.diag([1.0, 0.0]), atol=1e-12)

    def test_physical_unchanged(self, rng):
        rho = random_density(4, rng)
        np.testing.assert_allclose(physical_projection(rho), rho, atol=1e-12)

    def test_idempotent_and_valid(self, rng):
        for _ in range(20):
            a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            once = physical_projection(a + a.conj().T)
            assert not qcore.check_density_matrix(once)
            np.testing.assert_allclose(physical_projection(once), once, atol=1e-12)


def noiseless(rho, ms):
    return born_probabilities(rho, ms)


class TestLre:
    def test_ket_zero(self):
        ms = cube_measurement(1)
        rho = np.outer(ket(2, 0), ket(2, 0).conj())
        assert qcore.fidelity(lre_estimate(noiseless(rho, ms), ms), rho) >= 1 - 1e-8

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("kind", ["pure", "mixed"])
    def test_exact_recovery(self, n, kind, rng):
        d = 2 ** n
        ms = cube_measurement(n)
        for _ in range(10):
            rho = datagen.haar_pure_state(d, rng) if kind == "pure" else datagen.ginibre_mixed_state(d, rng)
            assert qcore.fidelity(lre_estimate(noiseless(rho, ms), ms), rho) >= 1 - 1e-8

    def test_batched(self, rng):
        ms = cube_measurement(2)
        rhos = np.array([random_density(4, rng) for _ in range(5)])
        batch = lre_estimate(noiseless(rhos, ms), ms)
        for i in range(5):
            np.testing.assert_allclose(batch[i], lre_estimate(noiseless(rhos[i], ms), ms), atol=1e-12)

    def test_row_permutation_invariance(self, rng):
        ms = cube_measurement(2)
        rho = random_density(4, rng)
        f = sample_frequencies(noiseless(rho, ms), 1000, rng)
        perm = rng.permutation(9)
        est = lre_estimate(f, ms)
        est_p = lre_estimate(f[perm], ms.operators[perm])
        np.testing.assert_allclose(est_p, est, atol=1e-10)

    def test_srm(self, rng):
        ms = datagen.random_srm_measurement(2, 16, rng)
        rho = datagen.haar_pure_state(4, rng)
        assert qcore.fidelity(lre_estimate(noiseless(rho, ms), ms), rho) >= 1 - 1e-8

    def test_rank_deficient(self):
        z_only = cube_measurement(1).operators[:1]
        with pytest.raises(RankDeficient):
            lre_design(z_only)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            lre_estimate(np.full((8, 4), 0.25), cube_measurement(2))

    def test_design_cached(self):
        ms = cube_measurement(2)
        assert lre_design(ms) is lre_design(MeasurementSet.from_operators(ms.operators.copy()))

    def test_fewer_copies_worse(self):
        ms = cube_measurement(2)
        means = {}
        for nt in (100, 10000):
            rng = make_rng(3)
            inf = []
            for _ in range(200):
                rho = datagen.haar_pure_state(4, rng)
                est = lre_estimate(sample_frequencies(noiseless(rho, ms), nt, rng), ms)
                inf.append(1 - qcore.fidelity(est, rho))
            means[nt] = np.mean(inf)
        assert means[100] > means[10000]
