import numpy as np
import pytest

from tamedconv import (NoiseOperator, ProjectionIndex, SchemeState,
                       SpectralOperator, TimeGrid, TruncationPolicy, chi_eval,
                       mild_ito_gap, scheme_step, simulate_coupled,
                       truncation_defect)


@pytest.fixture
def op4():
    return SpectralOperator.dirichlet_laplacian(4)


@pytest.fixture
def noise4():
    return NoiseOperator.power_law(4, 1.0, 2.0)


@pytest.fixture
def full4():
    return ProjectionIndex.prefix(4)


def make_state(op, values):
    n = op.n_modes
    return SchemeState(0.0, np.asarray(values, dtype=float),
                       ProjectionIndex.prefix(n), ProjectionIndex.prefix(n))


class TestSchemeStep:
    def test_chi_zero_is_pure_decay(self, op4):
        state = make_state(op4, [1.0, 0.5, 0.0, -1.0])
        out = scheme_step(state, 0.1, np.ones(4), 0.0, op4)
        assert out.O == pytest.approx(op4.semigroup_factors(0.1) * state.O)

    def test_taming_at_unit_increment(self, op4):
        state = make_state(op4, np.zeros(4))
        x = np.array([1.0, 0.0, 0.0, 0.0])
        out = scheme_step(state, 0.25, x, 1.0, op4)
        assert out.O == pytest.approx(op4.semigroup_factors(0.25) * x / 2)

    def test_per_step_norm_bound(self, op4):
        rng = np.random.default_rng(4)
        h = 0.05
        factor = np.exp(h * op4.sup_eigenvalue)
        for _ in range(50):
            state = make_state(op4, rng.normal(size=4))
            out = scheme_step(state, h, rng.normal(size=4) * 3, 1.0, op4)
            bound = factor * (np.linalg.norm(state.O) + 0.5)
            assert np.linalg.norm(out.O) <= bound + 1e-12

    def test_rejects_zero_step(self, op4):
        with pytest.raises(ValueError):
            scheme_step(make_state(op4, np.zeros(4)), 0.0, np.zeros(4), 1.0, op4)


class TestTruncationPolicies:
    def test_identity_always_one(self, op4):
        state = make_state(op4, np.full(4, 100.0))
        assert chi_eval(TruncationPolicy(), state, 8, np.random.default_rng(0)) == 1.0

    def test_bernoulli_q_zero(self, op4):
        policy = TruncationPolicy(kind="bernoulli", q=0.0)
        state = make_state(op4, np.zeros(4))
        vals = {chi_eval(policy, state, 8, np.random.default_rng(s)) for s in range(20)}
        assert vals == {1.0}

    def test_bernoulli_drop_rate(self, op4):
        policy = TruncationPolicy(kind="bernoulli", q=0.3)
        rng = np.random.default_rng(2)
        vals = policy.init_paths(50_000, rng)
        assert np.mean(vals == 0.0) == pytest.approx(0.3, abs=0.02)

    def test_norm_threshold_generous(self, op4):
        policy = TruncationPolicy(kind="norm_threshold", c=1e6, exponent=0.0)
        state = make_state(op4, np.full(4, 10.0))
        assert chi_eval(policy, state, 8, np.random.default_rng(0)) == 1.0

    def test_norm_threshold_trips(self, op4):
        policy = TruncationPolicy(kind="norm_threshold", c=1.0, exponent=0.0)
        state = make_state(op4, np.full(4, 10.0))
        assert chi_eval(policy, state, 8, np.random.default_rng(0)) == 0.0

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            TruncationPolicy(kind="sometimes")


class TestSimulateCoupled:
    def test_zero_noise_both_paths_zero(self, op4, full4):
        B = NoiseOperator(np.zeros((4, 4)))
        traj = simulate_coupled(TimeGrid.uniform(1, 4), op4, B, full4, full4,
                                TruncationPolicy(), np.random.default_rng(0))
        assert np.all(traj.scheme_path == 0.0)
        assert np.all(traj.exact_path == 0.0)

    def test_empty_noise_projection_kills_scheme(self, op4, noise4, full4):
        traj = simulate_coupled(TimeGrid.uniform(1, 4), op4, noise4, full4,
                                ProjectionIndex.empty(), TruncationPolicy(),
                                np.random.default_rng(1))
        assert np.all(traj.scheme_path == 0.0)
        assert np.any(traj.exact_path != 0.0)

    def test_support_invariance(self, op4, noise4):
        I = ProjectionIndex(frozenset({1, 3}))
        traj = simulate_coupled(TimeGrid.uniform(1, 8), op4, noise4, I,
                                ProjectionIndex.prefix(4), TruncationPolicy(),
                                np.random.default_rng(2))
        assert np.all(traj.scheme_path[:, [1, 3]] == 0.0)

    def test_determinism(self, op4, noise4, full4):
        grid = TimeGrid.uniform(1, 8)
        a = simulate_coupled(grid, op4, noise4, full4, full4,
                             TruncationPolicy(), np.random.default_rng(42))
        b = simulate_coupled(grid, op4, noise4, full4, full4,
                             TruncationPolicy(), np.random.default_rng(42))
        assert np.array_equal(a.scheme_path, b.scheme_path)
        assert np.array_equal(a.exact_path, b.exact_path)
        assert np.array_equal(a.wiener_increments, b.wiener_increments)

    def test_starts_at_zero(self, op4, noise4, full4):
        traj = simulate_coupled(TimeGrid.uniform(1, 2), op4, noise4, full4,
                                full4, TruncationPolicy(), np.random.default_rng(3))
        assert np.all(traj.scheme_path[0] == 0.0)

    def test_pathwise_step_bound(self, op4, noise4, full4):
        grid = TimeGrid.uniform(1, 16)
        traj = simulate_coupled(grid, op4, noise4, full4, full4,
                                TruncationPolicy(), np.random.default_rng(8))
        factor = np.exp(float(grid.mesh()) * op4.sup_eigenvalue)
        norms = np.linalg.norm(traj.scheme_path, axis=1)
        assert np.all(norms[1:] <= factor * (norms[:-1] + 0.5) + 1e-12)


class TestTruncationDefect:
    def test_identity_policy_zero(self, op4):
        grid = TimeGrid.uniform(1, 16)
        assert truncation_defect(TruncationPolicy(), grid, 2, 0.4, 10,
                                 np.random.default_rng(0)) == 0.0

    @pytest.mark.parametrize("M", [2, 16, 128, 1024])
    def test_bernoulli_exact_value(self, M):
        p, rho, T, C = 2.0, 0.4, 1.0, 1.0
        q = min(1.0, C * (T / M) ** (p * rho))
        policy = TruncationPolicy(kind="bernoulli", q=q)
        grid = TimeGrid.uniform(T, M)
        val = truncation_defect(policy, grid, p, rho, 1, np.random.default_rng(0))
        assert val == pytest.approx(C * T ** (p * rho), rel=1e-12)

    def test_norm_threshold_generous_is_zero(self, op4, noise4, full4):
        policy = TruncationPolicy(kind="norm_threshold", c=1e9, exponent=0.0)
        grid = TimeGrid.uniform(1, 8)
        val = truncation_defect(policy, grid, 2, 0.4, 200,
                                np.random.default_rng(1), op=op4, B=noise4,
                                I=full4, J=full4)
        assert val == 0.0

    def test_norm_threshold_needs_context(self, op4):
        policy = TruncationPolicy(kind="norm_threshold", c=1.0, exponent=0.0)
        with pytest.raises(ValueError):
            truncation_defect(policy, TimeGrid.uniform(1, 4), 2, 0.4, 10,
                              np.random.default_rng(0))


class TestMildItoGap:
    def test_gap_decreases_with_substeps(self, op4, noise4, full4):
        grid = TimeGrid.uniform(1, 4)
        gaps = [mild_ito_gap(grid, op4, noise4, full4, full4,
                             TruncationPolicy(), s, 400,
                             np.random.default_rng(100 + s))
                for s in (8, 32, 128)]
        assert gaps[0] > gaps[1] > gaps[2]
