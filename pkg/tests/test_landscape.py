import numpy as np
import pytest

import elliptic_landscape as el
from elliptic_landscape.landscape import two_layer_forward
from elliptic_landscape.network import DomainError


def fd_laplacian_x(w0, w1, x, y, h=1e-2):
    """Central-difference trace of the input Hessian of (f(x) - y)^2.

    Within one linear region the function is exactly quadratic, so any probe
    step that stays inside the region is exact up to rounding; a larger step
    keeps the rounding term small.
    """

    def g(pt):
        return (two_layer_forward(w0, w1, pt) - y) ** 2

    total = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        total += (g(x + e) - 2.0 * g(x) + g(x - e)) / (h * h)
    return total


def smooth_point(w0, gen, h=1e-2, tries=500):
    """A point staying inside one linear region under +-h probes."""
    margins = 4.0 * h * np.abs(w0).sum(axis=1)
    for _ in range(tries):
        x = gen.standard_normal(w0.shape[1])
        if np.all(np.abs(w0 @ x) > margins):
            return x
    raise AssertionError("no smooth point found")


class TestLandscapeEstimate:
    def one_d_setup(self):
        centers = np.array([[0.0], [1.0]])
        values = np.array([0.0, 1.0])
        box = el.data_box(centers, 0.1)
        return centers, values, box

    def test_query_inside_ball_returns_that_loss_exactly(self, rng):
        centers, values, box = self.one_d_setup()
        (est,) = el.estimate_landscape_values(
            centers, values, [[0.99]], eps=0.05, sigma=1.0, box=box,
            n_paths=32, dt=1e-3, t_max=5.0, rng=rng.child(0),
        )
        assert est.mean == 1.0
        assert est.stderr == 0.0
        assert est.n_hit == 32 and est.n_timeout == 0 and est.n_boundary == 0

    def test_harmonic_interpolation_midpoint(self, rng):
        centers, values, box = self.one_d_setup()
        (est,) = el.estimate_landscape_values(
            centers, values, [[0.5]], eps=0.02, sigma=1.0, box=box,
            n_paths=2000, dt=2e-4, t_max=50.0, rng=rng.child(1),
        )
        assert est.valid
        assert abs(est.mean - 0.5) <= 3.0 * est.stderr

    def test_estimates_stay_within_boundary_extremes(self, rng):
        gen = rng.child(2).generator()
        centers = gen.standard_normal((6, 2))
        values = gen.random(6) * 3.0
        box = el.data_box(centers, 0.1)
        queries = 0.25 * gen.standard_normal((4, 2))
        ests = el.estimate_landscape_values(
            centers, values, queries, eps=0.1, sigma=1.0, box=box,
            n_paths=64, dt=1e-3, t_max=50.0, rng=rng.child(3),
        )
        for est in ests:
            assert est.valid
            assert values.min() - 1e-12 <= est.mean <= values.max() + 1e-12

    def test_all_timeouts_flagged_invalid(self, rng):
        centers, values, box = self.one_d_setup()
        (est,) = el.estimate_landscape_values(
            centers, values, [[0.5]], eps=0.01, sigma=1.0, box=box,
            n_paths=16, dt=1e-4, t_max=1e-3, rng=rng.child(4),
        )
        assert not est.valid
        assert est.n_timeout == 16
        assert np.isnan(est.mean)

    def test_query_outside_box_rejected(self, rng):
        centers, values, box = self.one_d_setup()
        with pytest.raises(DomainError):
            el.estimate_landscape_values(
                centers, values, [[9.0]], eps=0.05, sigma=1.0, box=box,
                n_paths=4, dt=1e-3, t_max=1.0, rng=rng.child(5),
            )

    def test_model_version_matches_boundary_losses_at_data_queries(self, rng):
        gen = rng.child(6).generator()
        ds = el.two_moons(40, 0.1, gen)
        model = el.init_mlp([2, 4, 2], gen, head="softmax")
        losses = el.per_sample_losses("cross_entropy", model, ds.features, ds.targets)
        ests = el.estimate_landscape(
            model, ds, ds.joint()[:5], kind="cross_entropy", eps=0.05, sigma=0.5,
            n_paths=8, dt=1e-3, t_max=10.0, rng=rng.child(7),
        )
        for i, est in enumerate(ests):
            assert est.mean == pytest.approx(losses[i], rel=1e-12)
            assert est.stderr == 0.0

    def test_stderr_scales_like_inverse_root_paths(self, rng):
        centers, values, box = self.one_d_setup()
        (small,) = el.estimate_landscape_values(
            centers, values, [[0.5]], eps=0.05, sigma=1.0, box=box,
            n_paths=3000, dt=1e-3, t_max=50.0, rng=rng.child(8),
        )
        (big,) = el.estimate_landscape_values(
            centers, values, [[0.5]], eps=0.05, sigma=1.0, box=box,
            n_paths=6000, dt=1e-3, t_max=50.0, rng=rng.child(9),
        )
        ratio = small.stderr / big.stderr
        assert np.sqrt(2.0) * 0.9 <= ratio <= np.sqrt(2.0) * 1.1


class TestMaxPrincipleReport:
    def make_est(self, mean):
        return el.LandscapeEstimate(mean, 0.0, 10, 0, 0)

    def test_equal_losses_satisfied_at_zero_slack(self):
        rep = el.max_principle_report([1.0, 1.0], [self.make_est(1.0)], 0.0)
        assert rep.satisfied
        assert rep.min_boundary == rep.max_interior == 1.0

    def test_twenty_percent_excess_fails_at_five_percent_slack(self):
        rep = el.max_principle_report([0.5, 1.0], [self.make_est(1.2)], 0.05)
        assert not rep.satisfied
        assert rep.max_interior == 1.2

    def test_empty_inputs_rejected(self):
        with pytest.raises(DomainError):
            el.max_principle_report([], [self.make_est(1.0)], 0.0)
        with pytest.raises(DomainError):
            el.max_principle_report([1.0], [], 0.0)

    def test_invalid_estimates_are_ignored(self):
        bad = el.LandscapeEstimate(float("nan"), float("nan"), 0, 5, 0)
        rep = el.max_principle_report([1.0, 2.0], [self.make_est(1.5), bad], 0.0)
        assert rep.satisfied


class TestDynkinResidual:
    def test_constant_function_gives_exact_zero(self, rng):
        res, se = el.dynkin_residual(
            lambda s: np.full(len(s), 3.7), lambda s: np.zeros(len(s)),
            [0.0, 0.0], 1.0, 0.5, 200, 1e-2, rng.child(10),
        )
        assert res == 0.0

    def test_linear_function_is_martingale(self, rng):
        res, se = el.dynkin_residual(
            lambda s: s @ np.array([2.0, -1.0]), lambda s: np.zeros(len(s)),
            [0.3, 0.4], 1.0, 1.0, 4000, 1e-3, rng.child(11),
        )
        assert abs(res) <= 3.0 * se

    def test_squared_norm_two_d_fixed_horizon(self, rng):
        res, se = el.dynkin_residual(
            lambda s: np.sum(s * s, axis=1), lambda s: np.full(len(s), 4.0),
            [0.5, -0.2], 1.0, 1.0, 4000, 1e-3, rng.child(12),
        )
        assert abs(res) <= 3.0 * se

    def test_predicate_stop_rule(self, rng):
        # harmonic test function, stop on leaving the unit disk
        res, se = el.dynkin_residual(
            lambda s: s @ np.array([1.0, 1.0]), lambda s: np.zeros(len(s)),
            [0.0, 0.0], 1.0, lambda s: np.linalg.norm(s, axis=1) >= 1.0,
            2000, 1e-3, rng.child(13), t_max=50.0,
        )
        assert abs(res) <= 3.0 * se + 0.05


class TestLaplacianBound:
    def test_zero_weights_zero_bound(self):
        assert el.two_layer_laplacian_bound(np.zeros((3, 2)), np.zeros((1, 3))) == 0.0

    def test_hand_product(self):
        assert el.two_layer_laplacian_bound([[2.0]], [[3.0]]) == 72.0

    def test_bounds_numerical_laplacian_for_nonnegative_weights(self, rng):
        for i in range(20):
            gen = rng.child(14, i).generator()
            k, d = int(gen.integers(2, 6)), int(gen.integers(1, 4))
            w0 = gen.random((k, d))
            w1 = gen.random((1, k))
            bound = el.two_layer_laplacian_bound(w0, w1)
            for _ in range(5):
                x = smooth_point(w0, gen)
                y = float(gen.standard_normal())
                assert fd_laplacian_x(w0, w1, x, y) <= bound + 1e-8

    def test_shape_validation(self):
        with pytest.raises(Exception):
            el.two_layer_laplacian_bound(np.zeros((3, 2)), np.zeros((1, 4)))


class TestAffineShiftBound:
    def test_identity_shift_perfect_fit(self, rng):
        gen = rng.child(15).generator()
        w0 = gen.random((4, 3))
        w1 = gen.random((1, 4))
        x = gen.standard_normal(3)
        y = two_layer_forward(w0, w1, x)  # zero residual
        tau = 0.7
        got = el.affine_shift_bound(w0, w1, np.eye(3), np.zeros(3), x, y, 2.0, tau)
        assert got == pytest.approx(el.two_layer_laplacian_bound(w0, w1) * tau, rel=1e-12)

    def test_zero_time_zero_shift_is_zero(self, rng):
        gen = rng.child(16).generator()
        w0, w1 = gen.random((2, 2)), gen.random((1, 2))
        x = gen.standard_normal(2)
        y = two_layer_forward(w0, w1, x)
        assert el.affine_shift_bound(w0, w1, np.eye(2), np.zeros(2), x, y, 2.0, 0.0) == 0.0

    def test_matches_independent_transcription(self, rng):
        gen = rng.child(17).generator()
        w0, w1 = gen.standard_normal((3, 2)), gen.standard_normal((1, 3))
        a = gen.standard_normal((2, 2))
        b = gen.standard_normal(2)
        x = gen.standard_normal(2)
        y = float(gen.standard_normal())
        c, tau = 1.5, 0.3
        got = el.affine_shift_bound(w0, w1, a, b, x, y, c, tau)
        prod = (w1 @ w0).ravel()
        resid = abs(float((w1 @ np.maximum(w0 @ x, 0.0))[0]) - y)
        delta = np.linalg.norm(a @ x + b - x)
        want = 2.0 * prod @ prod * tau + c * delta * (delta + 2.0 * resid)
        assert got == pytest.approx(want, rel=1e-12)

    def test_negative_parameters_rejected(self):
        with pytest.raises(DomainError):
            el.affine_shift_bound(
                np.ones((1, 1)), np.ones((1, 1)), np.eye(1), np.zeros(1),
                np.ones(1), 0.0, -1.0, 0.5,
            )


class TestHittingTimeEstimate:
    def test_start_at_center_is_instant(self, rng):
        centers = np.array([[0.0, 0.0], [2.0, 0.0]])
        box = el.data_box(centers, 0.5)
        est = el.estimate_hitting_time(
            np.zeros(2), 1.0, centers, 0.1, box, 1e-3, 5.0, 50, rng.child(18)
        )
        assert est.mean == 0.0 and est.stderr == 0.0
        assert est.censor_rate == 0.0 and est.valid

    def test_interval_exit_time_identity(self, rng):
        # absorbing interval ends replace the centers: E tau = x (1 - x)
        box = el.Box([0.0], [1.0])
        est = el.estimate_hitting_time(
            np.array([0.3]), 1.0, np.zeros((0, 1)), 0.01, box,
            2e-5, 20.0, 4000, rng.child(19),
        )
        assert est.valid and est.censor_rate == 0.0
        assert abs(est.mean - 0.21) <= 3.0 * est.stderr + 0.003

    def test_tiny_budget_censors_everything(self, rng):
        box = el.Box([0.0], [1.0])
        est = el.estimate_hitting_time(
            np.array([0.5]), 1.0, np.zeros((0, 1)), 0.01, box,
            1e-4, 1e-3, 40, rng.child(20),
        )
        assert est.censor_rate > 0.95
        assert not est.valid or est.n_absorbed < 2
