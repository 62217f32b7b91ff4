import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachkit.dynamics import (BoxBounds, ControlAffineModel, box_samples,
                               dissipation_bounds, euler_step, flow,
                               get_preset, hamiltonian, hamiltonian_values,
                               successor_table)
from reachkit.errors import BoundViolationError
from reachkit.grid import make_grid


def brute_force_hamiltonian(model, s, p, n=9):
    """Max over sampled actions of min over sampled disturbances of p . f.

    Evaluates the payoff on the full sample product; the payoff is affine
    in each input, so corner-containing samples hit the exact extremum.
    """
    actions = box_samples(model.action_bounds, n)
    disturbances = box_samples(model.disturbance_bounds, n)
    payoff = np.empty((len(actions), len(disturbances)))
    for i, a in enumerate(actions):
        for j, d in enumerate(disturbances):
            payoff[i, j] = np.dot(p, flow(model, s, a, d))
    return payoff.min(axis=1).max()


class TestFlow:
    def test_nominal_drift(self):
        f = flow(get_preset("agile"), (0, 0, 0), (0, 0), (0, 0))
        assert f == pytest.approx([0.6, 0.0, 0.0])

    def test_heading_aligned_with_y(self):
        f = flow(get_preset("agile"), (0, 0, np.pi / 2), (0.4, 0), (0, 0))
        assert f == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)

    def test_componentwise_sum_at_bounds(self):
        f = flow(get_preset("agile"), (0, 0, 0), (0, 1.5), (0.6, -0.6))
        assert f == pytest.approx([1.2, -0.6, 1.5])

    def test_bound_violation_raises(self):
        model = get_preset("non_agile")
        with pytest.raises(BoundViolationError):
            flow(model, (0, 0, 0), (1.5, 0), (0, 0))
        with pytest.raises(BoundViolationError):
            flow(model, (0, 0, 0), (0, 0), (0.7, 0))

    @given(seed=st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_affine_in_action(self, seed):
        rng = np.random.default_rng(seed)
        model = get_preset("agile")
        s = rng.uniform(-2, 2, size=3)
        a1 = rng.uniform(-0.7, 0.7, size=2)
        a2 = rng.uniform(-0.7, 0.7, size=2)
        d = rng.uniform(-0.5, 0.5, size=2)
        lhs = flow(model, s, a1 + a2, d) - flow(model, s, a1, d)
        gu_a2 = flow(model, s, a2, (0, 0)) - flow(model, s, (0, 0), (0, 0))
        assert lhs == pytest.approx(gu_a2, abs=1e-12)


class TestHamiltonian:
    def test_zero_costate_ties_to_midpoint(self):
        result = hamiltonian(get_preset("agile"), (0, 0, 0), (0, 0, 0))
        assert result["value"] == 0.0
        assert result["a_star"] == (0.0, 0.0)
        assert result["d_star"] == (0.0, 0.0)

    def test_agile_example_against_dense_sampling(self):
        model = get_preset("agile")
        result = hamiltonian(model, (0, 0, 0), (1, 0, 0))
        assert result["value"] == pytest.approx(1.5)
        assert result["a_star"][0] == 1.5
        assert result["d_star"] == pytest.approx((-0.6, 0.0))
        oracle = brute_force_hamiltonian(model, (0, 0, 0), (1, 0, 0), n=41)
        assert abs(result["value"] - oracle) <= 1e-9

    def test_non_agile_example(self):
        model = get_preset("non_agile")
        result = hamiltonian(model, (0, 0, 0), (1, 0, 0))
        assert result["value"] == pytest.approx(0.7)
        oracle = brute_force_hamiltonian(model, (0, 0, 0), (1, 0, 0), n=41)
        assert abs(result["value"] - oracle) <= 1e-9

    @given(seed=st.integers(0, 2000))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_on_random_probes(self, seed):
        rng = np.random.default_rng(seed)
        model = get_preset(rng.choice(["agile", "non_agile", "ultra_agile"]))
        s = rng.uniform(-3, 3, size=3)
        p = rng.uniform(-2, 2, size=3)
        assert abs(hamiltonian(model, s, p)["value"]
                   - brute_force_hamiltonian(model, s, p)) <= 1e-9

    @given(seed=st.integers(0, 500), lam=st.floats(0.1, 5.0))
    @settings(max_examples=30, deadline=None)
    def test_positive_homogeneity_without_drift(self, seed, lam):
        model = ControlAffineModel(
            v_nominal=0.0,
            action_bounds=BoxBounds.symmetric(1.5, 1.5),
            disturbance_bounds=BoxBounds.symmetric(0.6, 0.6))
        rng = np.random.default_rng(seed)
        s = rng.uniform(-2, 2, size=3)
        p = rng.uniform(-2, 2, size=3)
        h1 = hamiltonian(model, s, p)["value"]
        h2 = hamiltonian(model, s, lam * p)["value"]
        assert h2 == pytest.approx(lam * h1, rel=1e-9, abs=1e-9)

    @given(seed=st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_agile_dominates_non_agile(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.uniform(-3, 3, size=3)
        p = rng.uniform(-2, 2, size=3)
        h_agile = hamiltonian(get_preset("agile"), s, p)["value"]
        h_non = hamiltonian(get_preset("non_agile"), s, p)["value"]
        assert h_agile >= h_non - 1e-12

    def test_vectorized_form_matches_scalar(self):
        rng = np.random.default_rng(9)
        model = get_preset("agile")
        for _ in range(50):
            s = rng.uniform(-3, 3, size=3)
            p = rng.uniform(-2, 2, size=3)
            vec = hamiltonian_values(model, np.cos(s[2]), np.sin(s[2]), *p)
            assert float(vec) == pytest.approx(
                hamiltonian(model, s, p)["value"], abs=1e-12)


class TestDissipationBounds:
    def test_agile_at_zero_heading(self):
        assert dissipation_bounds(get_preset("agile"), (0, 0, 0)) == pytest.approx(
            (2.7, 0.6, 1.5))

    def test_non_agile_at_quarter_turn(self):
        alpha = dissipation_bounds(get_preset("non_agile"), (0, 0, np.pi / 2))
        assert alpha == pytest.approx((0.6, 1.9, 0.7), abs=1e-12)

    @given(seed=st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        alpha = dissipation_bounds(get_preset("ultra_agile"), rng.uniform(-3, 3, size=3))
        assert all(a >= 0 for a in alpha)

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_dominates_hamiltonian_slope(self, seed):
        # |H(p + delta e_i) - H(p)| <= alpha_i |delta|: the bound must cover
        # the Hamiltonian's Lipschitz constant in each costate coordinate.
        rng = np.random.default_rng(seed)
        model = get_preset(rng.choice(["agile", "non_agile"]))
        s = rng.uniform(-3, 3, size=3)
        p = rng.uniform(-2, 2, size=3)
        alpha = dissipation_bounds(model, s)
        for axis in range(3):
            delta = np.zeros(3)
            delta[axis] = rng.uniform(0.01, 1.0)
            h1 = hamiltonian(model, s, p)["value"]
            h2 = hamiltonian(model, s, p + delta)["value"]
            assert abs(h2 - h1) <= alpha[axis] * delta[axis] + 1e-9


class TestEulerStep:
    def test_basic_arithmetic(self):
        nxt = euler_step(get_preset("agile"), (0, 0, 0), (0, 0), (0, 0), 0.1)
        assert nxt == pytest.approx([0.06, 0.0, 0.0])

    def test_heading_wrap(self):
        nxt = euler_step(get_preset("agile"), (0, 0, 3.1), (0, 1.5), (0, 0), 0.1)
        assert nxt[2] == pytest.approx(3.25 - 2 * np.pi)

    def test_ten_step_rollout_constant_drift(self):
        model = get_preset("agile")
        s = np.array([0.0, 0.0, 0.0])
        for _ in range(10):
            s = euler_step(model, s, (0, 0), (0, 0), 0.1)
        assert s == pytest.approx([0.6, 0.0, 0.0])

    def test_positive_dt_required(self):
        with pytest.raises(ValueError):
            euler_step(get_preset("agile"), (0, 0, 0), (0, 0), (0, 0), 0.0)


class TestSuccessorTable:
    def test_stationary_action_self_loops(self):
        grid = make_grid(9, 9, 8)
        model = get_preset("agile")
        # net speed zero: v = -v_nominal cancels the drift
        table = successor_table(model, grid, [(-0.6, 0.0)], [(0.0, 0.0)], 0.1)
        assert np.array_equal(table[:, 0, 0], np.arange(grid.num_cells))

    def test_clamping_at_domain_edge(self):
        grid = make_grid(9, 9, 8)
        model = get_preset("ultra_agile")
        table = successor_table(model, grid, [(4.4, 0.0)], [(0.0, 0.0)], 1.0)
        # from the +x edge at heading 0 (k=4), a 5 m/s push stays clamped on the edge
        edge_cell = np.ravel_multi_index((8, 4, 4), grid.shape)
        i, j, k = np.unravel_index(table[edge_cell, 0, 0], grid.shape)
        assert i == 8 and j == 4 and k == 4

    def test_box_samples_include_corners(self):
        samples = box_samples(BoxBounds.symmetric(1.5, 0.7), 3)
        rows = {tuple(r) for r in samples}
        assert (1.5, 0.7) in rows and (-1.5, -0.7) in rows and (0.0, 0.0) in rows
