import numpy as np
import pytest

from tamedconv import (NoiseOperator, SpectralOperator,
                       brute_force_convolution_oracle, hs_norm,
                       increment_covariance, sample_coupled_increment)


@pytest.fixture
def ou_pair():
    """Single mode lambda = -1, b = 1."""
    return SpectralOperator(np.array([-1.0])), NoiseOperator(np.array([[1.0]]))


class TestHsNorm:
    def test_power_law_partial_sum(self):
        op = SpectralOperator.dirichlet_laplacian(50)
        B = NoiseOperator.power_law(50, 1.0, 2.0)
        expected = np.sqrt(np.sum(np.arange(1, 51.0) ** -4))
        assert hs_norm(B, op, 0.0) == pytest.approx(expected, rel=1e-14)
        # truncated value sits just below the full-series limit
        assert expected < np.sqrt(np.pi ** 4 / 90)

    def test_zero_operator(self):
        op = SpectralOperator(np.array([-1.0, -2.0]))
        assert hs_norm(NoiseOperator(np.zeros((2, 3))), op, 0.7) == 0.0

    def test_single_entry_half_power(self):
        op = SpectralOperator(np.array([-4.0]))
        B = NoiseOperator(np.array([[2.0]]))
        assert hs_norm(B, op, 0.5) == pytest.approx(4.0)

    def test_adjoint_pairing(self):
        rng = np.random.default_rng(0)
        B = NoiseOperator(rng.normal(size=(3, 4)))
        u = rng.normal(size=4)
        h = rng.normal(size=3)
        assert np.dot(B.apply(u), h) == pytest.approx(np.dot(u, B.adjoint @ h))


class TestIncrementCovariance:
    def test_ou_variance(self, ou_pair):
        cov = increment_covariance(*ou_pair, 1.0)
        assert cov.cov_yy[0, 0] == pytest.approx((1 - np.exp(-2)) / 2, rel=1e-12)

    def test_ou_cross_covariance(self, ou_pair):
        cov = increment_covariance(*ou_pair, 1.0)
        assert cov.cov_yw[0, 0] == pytest.approx(1 - np.exp(-1), rel=1e-12)

    def test_wiener_block(self, ou_pair):
        cov = increment_covariance(*ou_pair, 0.3)
        assert cov.cov_ww == pytest.approx(0.3 * np.eye(1))

    def test_cholesky_reproduces_blocks(self):
        op = SpectralOperator.dirichlet_laplacian(5)
        B = NoiseOperator.power_law(5, 1.0, 2.0)
        cov = increment_covariance(op, B, 0.1)
        full = cov.cholesky_factor @ cov.cholesky_factor.T
        assert np.allclose(full[:5, :5], cov.cov_yy, atol=1e-12)
        assert np.allclose(full[:5, 5:], cov.cov_yw, atol=1e-12)
        assert np.allclose(full[5:, 5:], cov.cov_ww, atol=1e-12)

    @pytest.mark.parametrize("h", [1e-2, 1e-3, 1e-4])
    def test_short_step_consistency(self, h):
        # cov_yy/h -> B B^T and cov_yw/h -> B at first order in h
        op = SpectralOperator(np.array([-1.0, -3.0]))
        B = NoiseOperator(np.array([[1.0, 0.5], [0.2, -0.7]]))
        cov = increment_covariance(op, B, h)
        bbt = B.coeffs @ B.coeffs.T
        assert np.allclose(cov.cov_yy / h, bbt, atol=6 * h)
        assert np.allclose(cov.cov_yw / h, B.coeffs, atol=4 * h)

    def test_rejects_nonpositive_step(self, ou_pair):
        with pytest.raises(ValueError):
            increment_covariance(*ou_pair, 0.0)


class TestSampling:
    def test_zero_noise_gives_zero_convolution(self):
        op = SpectralOperator(np.array([-1.0, -2.0]))
        cov = increment_covariance(op, NoiseOperator(np.zeros((2, 2))), 0.5)
        rng = np.random.default_rng(1)
        y, dw = sample_coupled_increment(cov, rng, size=100)
        assert np.all(y == 0.0)
        assert np.std(dw) == pytest.approx(np.sqrt(0.5), rel=0.2)

    def test_seed_determinism(self, ou_pair):
        cov = increment_covariance(*ou_pair, 1.0)
        a = sample_coupled_increment(cov, np.random.default_rng(9), size=10)
        b = sample_coupled_increment(cov, np.random.default_rng(9), size=10)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_empirical_covariance(self, ou_pair):
        cov = increment_covariance(*ou_pair, 1.0)
        rng = np.random.default_rng(5)
        reps = 100_000
        y, dw = sample_coupled_increment(cov, rng, size=reps)
        for samples, target in [(y[:, 0] ** 2, cov.cov_yy[0, 0]),
                                (y[:, 0] * dw[:, 0], cov.cov_yw[0, 0]),
                                (dw[:, 0] ** 2, cov.cov_ww[0, 0])]:
            se = samples.std(ddof=1) / np.sqrt(reps)
            assert abs(samples.mean() - target) <= 5 * se


class TestQuadratureOracle:
    def test_single_substep_is_damped_increment(self, ou_pair):
        op, B = ou_pair
        rng = np.random.default_rng(2)
        y, dw = brute_force_convolution_oracle(op, B, 1.0, 1, rng)
        assert y[0] == pytest.approx(np.exp(-1.0) * dw[0], rel=1e-14)

    def test_zero_noise(self):
        op = SpectralOperator(np.array([-1.0]))
        B = NoiseOperator(np.zeros((1, 1)))
        y, _ = brute_force_convolution_oracle(op, B, 1.0, 8, np.random.default_rng(0))
        assert y == pytest.approx([0.0])

    def test_matches_analytic_covariance(self, ou_pair):
        op, B = ou_pair
        rng = np.random.default_rng(12)
        reps = 20_000
        y, dw = brute_force_convolution_oracle(op, B, 1.0, 512, rng, size=reps)
        cov = increment_covariance(op, B, 1.0)
        for samples, target in [(y[:, 0] ** 2, cov.cov_yy[0, 0]),
                                (y[:, 0] * dw[:, 0], cov.cov_yw[0, 0])]:
            se = samples.std(ddof=1) / np.sqrt(reps)
            assert abs(samples.mean() - target) <= 5 * se

    def test_self_convergence_rate(self, ou_pair):
        # quadrature variance approaches the analytic variance ~ substeps^{-1}
        op, B = ou_pair
        cov = increment_covariance(op, B, 1.0)
        target = cov.cov_yy[0, 0]
        biases = []
        for s in (4, 16, 64):
            lam = -1.0
            grid = np.arange(s) / s
            var = np.sum(np.exp(2 * lam * (1 - grid)) / s)
            biases.append(abs(var - target))
        assert 3.0 < biases[0] / biases[1] < 5.0
        assert 3.0 < biases[1] / biases[2] < 5.0
