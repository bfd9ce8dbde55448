import numpy as np

from django.test import SimpleTestCase

from core.exceptions import DomainError, FitError, ShapeError
from core.poly import (
    FitConfig,
    PolyCurve,
    bernstein_basis,
    eval_curve,
    eval_derivative,
    elevate_degree,
    fit_bayesian,
    fit_lsq,
    fit_tls_borges_pastva,
    from_displacements,
    project_point,
    project_points,
    rigid_transform,
    to_displacements,
)


def random_curve(rng, degree, duration=1.0):
    """Returns a curve with control points drawn uniformly from a square"""

    return PolyCurve(rng.uniform(-10.0, 10.0, (degree + 1, 2)), duration)


class TestBernsteinBasis(SimpleTestCase):
    """Tests for the Bernstein basis"""

    def test_known_values(self) -> None:
        """Tests the weights against direct binomial evaluation"""

        np.testing.assert_allclose(bernstein_basis(1, 0.5), [0.5, 0.5])
        np.testing.assert_allclose(bernstein_basis(2, 0.0), [1.0, 0.0, 0.0])
        np.testing.assert_allclose(
            bernstein_basis(3, 0.5), [0.125, 0.375, 0.375, 0.125]
        )

    def test_partition_of_unity(self) -> None:
        """Tests if the weights sum to one and are non-negative"""

        t = np.linspace(0.0, 1.0, 101)
        for d in range(1, 8):
            weights = bernstein_basis(d, t)
            self.assertEqual(weights.shape, (101, d + 1))
            np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-14)
            self.assertTrue(np.all(weights >= 0.0))

    def test_outside_unit_interval(self) -> None:
        """Tests what happens when t lies outside [0, 1]"""

        with self.assertRaises(DomainError):
            bernstein_basis(3, 1.5)
        with self.assertRaises(DomainError):
            bernstein_basis(3, -0.1)


class TestPolyCurve(SimpleTestCase):
    """Tests for curve evaluation and differentiation"""

    def test_endpoint_interpolation(self) -> None:
        """Tests if the curve passes through its first and last point"""

        rng = np.random.default_rng(0)
        curve = random_curve(rng, 5, duration=5.0)
        np.testing.assert_allclose(eval_curve(curve, 0.0), curve.start)
        np.testing.assert_allclose(
            eval_curve(curve, 5.0), curve.end, atol=1e-12
        )

    def test_linear_interpolation(self) -> None:
        """Tests a degree-1 curve at a quarter of its duration"""

        curve = PolyCurve([[0.0, 0.0], [2.0, 2.0]])
        np.testing.assert_allclose(eval_curve(curve, 0.25), [0.5, 0.5])

    def test_uniform_velocity(self) -> None:
        """Tests the velocity of equally spaced collinear control points"""

        curve = PolyCurve([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        velocity = eval_derivative(curve, np.linspace(0.0, 1.0, 7), 1)
        np.testing.assert_allclose(velocity, np.tile([2.0, 0.0], (7, 1)))

    def test_cubic_jerk(self) -> None:
        """Tests the jerk of a degree-6 fit to x = t^3"""

        t = np.linspace(0.0, 1.0, 20)
        points = np.stack([t ** 3, np.zeros_like(t)], axis=1)
        curve = fit_lsq(t, points, 6, duration=1.0)
        jerk = eval_derivative(curve, np.linspace(0.0, 1.0, 11), 3)
        np.testing.assert_allclose(
            jerk, np.tile([6.0, 0.0], (11, 1)), atol=1e-6
        )

    def test_derivative_against_finite_differences(self) -> None:
        """Tests the analytic derivatives against central differences"""

        rng = np.random.default_rng(1)
        curve = random_curve(rng, 6, duration=6.0)
        t = np.linspace(0.5, 5.5, 11)
        h = 1e-4
        for k in (1, 2, 3):
            analytic = eval_derivative(curve, t, k)
            lower = eval_derivative(curve, t - h, k - 1)
            upper = eval_derivative(curve, t + h, k - 1)
            numeric = (upper - lower) / (2 * h)
            error = np.abs(analytic - numeric) / np.maximum(
                np.abs(analytic), 1.0
            )
            self.assertLess(error.max(), 1e-5)

    def test_time_outside_duration(self) -> None:
        """Tests what happens when t exceeds the duration"""

        curve = PolyCurve([[0.0, 0.0], [1.0, 0.0]], 2.0)
        with self.assertRaises(DomainError):
            eval_curve(curve, 2.5)

    def test_invalid_control_points(self) -> None:
        """Tests what happens when the control points are malformed"""

        with self.assertRaises(ShapeError):
            PolyCurve([[0.0, 0.0]])
        with self.assertRaises(DomainError):
            PolyCurve([[0.0, 0.0], [np.nan, 1.0]])
        with self.assertRaises(DomainError):
            PolyCurve([[0.0, 0.0], [1.0, 1.0]], duration=0.0)


class TestDegreeElevation(SimpleTestCase):
    """Tests for degree elevation"""

    def test_midpoint_rule(self) -> None:
        """Tests elevation of a straight segment"""

        elevated = elevate_degree(PolyCurve([[0.0, 0.0], [2.0, 0.0]]))
        np.testing.assert_allclose(
            elevated.control_points, [[0, 0], [1, 0], [2, 0]]
        )

    def test_function_equality(self) -> None:
        """Tests if two elevations leave the function unchanged"""

        rng = np.random.default_rng(2)
        curve = random_curve(rng, 5, duration=5.0)
        elevated = elevate_degree(elevate_degree(curve))
        t = np.linspace(0.0, 5.0, 501)
        self.assertEqual(elevated.degree, 7)
        self.assertLessEqual(
            np.abs(eval_curve(curve, t) - eval_curve(elevated, t)).max(),
            1e-12,
        )


class TestDisplacements(SimpleTestCase):
    """Tests for the displacement representation"""

    def test_known_displacements(self) -> None:
        """Tests displacements of equally spaced points"""

        curve = PolyCurve([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        np.testing.assert_allclose(to_displacements(curve), [1, 0, 1, 0])

    def test_zero_displacements(self) -> None:
        """Tests if zero displacements give a constant curve"""

        curve = from_displacements(3, [3.0, 4.0], np.zeros(6))
        np.testing.assert_allclose(
            curve.control_points, np.tile([3.0, 4.0], (4, 1))
        )

    def test_round_trip(self) -> None:
        """Tests the round trip on many random degree-6 curves"""

        rng = np.random.default_rng(3)
        for _ in range(1000):
            curve = random_curve(rng, 6, duration=6.0)
            values = to_displacements(curve)
            self.assertEqual(values.shape, (12,))
            rebuilt = from_displacements(6, curve.start, values, 6.0)
            self.assertLessEqual(
                np.abs(rebuilt.control_points - curve.control_points).max(),
                1e-12,
            )

    def test_wrong_length(self) -> None:
        """Tests what happens when the displacement count is wrong"""

        with self.assertRaises(ShapeError):
            from_displacements(6, [0.0, 0.0], np.zeros(10))


class TestRigidTransform(SimpleTestCase):
    """Tests for rigid transforms of curves"""

    def test_identity(self) -> None:
        """Tests if the identity transform keeps the control points"""

        curve = PolyCurve([[1.0, 2.0], [3.0, 5.0]])
        moved = rigid_transform(curve, 0.0, [0.0, 0.0])
        np.testing.assert_array_equal(
            moved.control_points, curve.control_points
        )

    def test_half_turn(self) -> None:
        """Tests a rotation by pi about the origin"""

        moved = rigid_transform(
            PolyCurve([[1.0, 0.0], [2.0, 0.0]]), np.pi, [0.0, 0.0]
        )
        np.testing.assert_allclose(
            moved.control_points, [[-1, 0], [-2, 0]], atol=1e-12
        )

    def test_commutes_with_evaluation(self) -> None:
        """Tests if transforming then evaluating equals the reverse"""

        rng = np.random.default_rng(4)
        curve = random_curve(rng, 4, duration=3.0)
        rotation, translation = 0.7, np.array([12.0, -3.0])
        moved = rigid_transform(curve, rotation, translation)
        t = np.linspace(0.0, 3.0, 31)
        cos, sin = np.cos(rotation), np.sin(rotation)
        expected = (
            eval_curve(curve, t) @ np.array([[cos, -sin], [sin, cos]]).T
            + translation
        )
        np.testing.assert_allclose(eval_curve(moved, t), expected, atol=1e-9)


class TestLeastSquaresFit(SimpleTestCase):
    """Tests for least-squares fitting of timed samples"""

    def test_exact_recovery(self) -> None:
        """Tests if exact cubic samples give back the control points"""

        rng = np.random.default_rng(5)
        curve = random_curve(rng, 3, duration=1.0)
        t = np.linspace(0.0, 1.0, 7)
        fitted = fit_lsq(t, eval_curve(curve, t), 3, duration=1.0)
        self.assertLessEqual(
            np.abs(fitted.control_points - curve.control_points).max(), 1e-8
        )

    def test_exact_degree_six(self) -> None:
        """Tests the residual of a degree-6 fit to exact samples"""

        rng = np.random.default_rng(6)
        curve = random_curve(rng, 6, duration=6.0)
        t = np.linspace(0.0, 6.0, 13)
        fitted = fit_lsq(t, eval_curve(curve, t), 6)
        self.assertEqual(fitted.duration, 6.0)
        residual = np.abs(eval_curve(fitted, t) - eval_curve(curve, t))
        self.assertLessEqual(residual.max(), 1e-8)

    def test_constant_samples(self) -> None:
        """Tests if samples of one point give a constant curve"""

        t = np.linspace(0.0, 1.0, 10)
        fitted = fit_lsq(t, np.tile([4.0, -2.0], (10, 1)), 5)
        np.testing.assert_allclose(
            fitted.control_points, np.tile([4.0, -2.0], (6, 1)), atol=1e-9
        )

    def test_too_few_samples(self) -> None:
        """Tests what happens when the design matrix is rank-deficient"""

        with self.assertRaises(FitError):
            fit_lsq([0.0, 0.5, 1.0], np.zeros((3, 2)), 5)


class TestBayesianFit(SimpleTestCase):
    """Tests for the posterior-mean fit"""

    def test_broad_prior_matches_lsq(self) -> None:
        """Tests if a very broad prior reproduces the LSQ fit"""

        rng = np.random.default_rng(7)
        t = np.linspace(0.0, 5.0, 51)
        points = np.stack([3.0 * t, 0.2 * t ** 2], axis=1)
        points += rng.normal(0.0, 0.05, points.shape)
        broad = FitConfig(prior_std=1e9, anchor_std=1e9)
        bayesian = fit_bayesian(t, points, 5, broad)
        lsq = fit_lsq(t, points, 5)
        self.assertLessEqual(
            np.abs(bayesian.control_points - lsq.control_points).max(), 1e-6
        )

    def test_single_sample(self) -> None:
        """Tests if one sample gives a near-constant curve at the sample"""

        fitted = fit_bayesian([2.0], [[5.0, 1.0]], 5, duration=5.0)
        np.testing.assert_allclose(
            fitted.control_points, np.tile([5.0, 1.0], (6, 1)), atol=1e-3
        )

    def test_shrinkage(self) -> None:
        """Tests if a narrow prior shortens the displacements"""

        rng = np.random.default_rng(8)
        t = np.linspace(0.0, 5.0, 51)
        points = np.stack([2.0 * t, np.sin(t)], axis=1)
        points += rng.normal(0.0, 0.1, points.shape)
        narrow = fit_bayesian(t, points, 5, FitConfig(prior_std=0.01))
        lsq = fit_lsq(t, points, 5)
        self.assertLess(
            np.linalg.norm(to_displacements(narrow)),
            np.linalg.norm(to_displacements(lsq)),
        )


class TestTotalLeastSquaresFit(SimpleTestCase):
    """Tests for the untimed total-least-squares fit"""

    def test_exact_cubic(self) -> None:
        """Tests the residual on points sampled from a cubic"""

        curve = PolyCurve([[0.0, 0.0], [10.0, 5.0], [20.0, -5.0], [30, 0]])
        points = eval_curve(curve, np.linspace(0.0, 1.0, 40))
        fit = fit_tls_borges_pastva(points, 3)
        self.assertLessEqual(fit.rms, 1e-8)

    def test_collinear_points(self) -> None:
        """Tests if collinear points are fitted exactly"""

        points = np.stack(
            [np.linspace(0.0, 50.0, 20), np.linspace(0.0, 25.0, 20)], axis=1
        )
        for degree in (1, 2, 3):
            fit = fit_tls_borges_pastva(points, degree)
            self.assertLessEqual(fit.rms, 1e-10)

    def test_beats_chord_parameter_fit(self) -> None:
        """Tests if TLS improves on the chord-length LSQ fit of an arc"""

        rng = np.random.default_rng(9)
        angles = np.linspace(0.0, np.pi / 2, 30)
        points = 20.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        points += rng.normal(0.0, 0.05, points.shape)
        chords = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))]
        )
        chord_fit = fit_lsq(chords / chords[-1], points, 3, duration=1.0)
        _, chord_distances = project_points(chord_fit, points)
        fit = fit_tls_borges_pastva(points, 3)
        self.assertLessEqual(
            fit.rms, np.sqrt(np.mean(chord_distances ** 2)) + 1e-12
        )

    def test_too_few_points(self) -> None:
        """Tests what happens when there are fewer points than needed"""

        with self.assertRaises(FitError):
            fit_tls_borges_pastva(np.array([[0, 0], [1, 0], [2, 1]]), 3)


class TestProjection(SimpleTestCase):
    """Tests for the closest-point projection"""

    def test_point_on_curve(self) -> None:
        """Tests if a curve point is at distance zero"""

        rng = np.random.default_rng(10)
        curve = random_curve(rng, 3)
        _, distance = project_point(curve, eval_curve(curve, 0.37))
        self.assertLessEqual(distance, 1e-10)

    def test_perpendicular_foot(self) -> None:
        """Tests the foot point on a straight segment"""

        curve = PolyCurve([[0.0, 0.0], [10.0, 0.0]], duration=4.0)
        t, distance = project_point(curve, [5.0, 3.0])
        self.assertAlmostEqual(t, 2.0, places=9)
        self.assertAlmostEqual(distance, 3.0, places=9)

    def test_matches_grid_search(self) -> None:
        """Tests the projection against a dense grid search"""

        rng = np.random.default_rng(11)
        for _ in range(20):
            curve = random_curve(rng, 3)
            point = rng.uniform(-15.0, 15.0, 2)
            grid = np.linspace(0.0, 1.0, 10001)
            distances = np.linalg.norm(eval_curve(curve, grid) - point, axis=1)
            _, distance = project_point(curve, point)
            self.assertLessEqual(distance, distances.min() + 1e-9)
