"""
Bernstein polynomial curves in the plane.

Trajectories use real time in seconds as the curve parameter, map geometry
uses a dimensionless arc parameter with duration 1. Control points are in
meters.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import comb, factorial

from core.exceptions import ConfigError, DomainError, FitError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

PARAM_TOL = 1e-12
NEWTON_FOOT_STEPS = 10


@dataclass(frozen=True)
class FitConfig:
    """Priors and iteration limits of the curve fitting procedures"""

    prior_std: float = 10.0
    obs_noise_std: float = 0.15
    tls_max_iter: int = 30
    tls_tol: float = 1e-9
    anchor_std: float = 1e4

    def __post_init__(self) -> None:
        """Validates that every field is strictly positive"""

        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f'FitConfig.{name} must be positive')


@dataclass(frozen=True, eq=False)
class PolyCurve:
    """A 2D Bernstein polynomial defined on [0, duration]"""

    control_points: np.ndarray
    duration: float = 1.0

    def __post_init__(self) -> None:
        """Freezes the control points and validates the curve"""

        points = np.array(self.control_points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 2:
            raise ShapeError(
                'control_points must be a (degree + 1) x 2 array '
                f'with degree >= 1, got shape {points.shape}'
            )
        if not np.all(np.isfinite(points)):
            raise DomainError('control_points must be finite')
        if not np.isfinite(self.duration) or self.duration <= 0:
            raise DomainError('duration must be positive')
        points.setflags(write=False)
        object.__setattr__(self, 'control_points', points)
        object.__setattr__(self, 'duration', float(self.duration))

    @property
    def degree(self) -> int:
        """Returns the polynomial degree"""

        return len(self.control_points) - 1

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]

    def __repr__(self) -> str:
        """Representation of a PolyCurve object"""

        return f'<PolyCurve: degree {self.degree}, {self.duration:g} s>'


class TLSFit(NamedTuple):
    """Result of the total-least-squares fit"""

    curve: PolyCurve
    converged: bool
    rms: float
    iterations: int


def bernstein_basis(d: int, t: ArrayLike) -> np.ndarray:
    """
    Returns the d + 1 Bernstein weights at normalized time t.

    A scalar t yields a vector, an array of n values an n x (d + 1) matrix.
    """

    values = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(
        (values < -PARAM_TOL) | (values > 1.0 + PARAM_TOL)
    ):
        raise DomainError('normalized time must lie in [0, 1]')
    u = np.clip(values, 0.0, 1.0)[..., None]
    i = np.arange(d + 1)

    return comb(d, i) * u ** i * (1.0 - u) ** (d - i)


def _normalized(curve: PolyCurve, t: ArrayLike) -> np.ndarray:
    values = np.asarray(t, dtype=float)
    tolerance = PARAM_TOL * max(1.0, curve.duration)
    if not np.all(np.isfinite(values)) or np.any(
        (values < -tolerance) | (values > curve.duration + tolerance)
    ):
        raise DomainError(f't must lie in [0, {curve.duration:g}]')

    return np.clip(values / curve.duration, 0.0, 1.0)


def eval_curve(curve: PolyCurve, t: ArrayLike) -> np.ndarray:
    """Evaluates the curve at time t (scalar or array)"""

    u = _normalized(curve, t)

    return bernstein_basis(curve.degree, u) @ curve.control_points


def eval_derivative(curve: PolyCurve, t: ArrayLike, k: int = 1) -> np.ndarray:
    """
    Evaluates the k-th time derivative analytically through control-point
    differencing, in m/s^k
    """

    if k < 0:
        raise DomainError('derivative order must be non-negative')
    u = _normalized(curve, t)
    d = curve.degree
    if k == 0:
        return bernstein_basis(d, u) @ curve.control_points
    if k > d:
        return np.zeros(np.shape(u) + (2,))
    differences = np.diff(curve.control_points, n=k, axis=0)
    scale = factorial(d) / factorial(d - k) / curve.duration ** k

    return scale * (bernstein_basis(d - k, u) @ differences)


def elevate_degree(curve: PolyCurve) -> PolyCurve:
    """Returns the same function expressed with one more control point"""

    points = curve.control_points
    d = curve.degree
    ratio = (np.arange(1, d + 1) / (d + 1))[:, None]
    inner = ratio * points[:-1] + (1.0 - ratio) * points[1:]
    elevated = np.vstack([points[:1], inner, points[-1:]])

    return PolyCurve(elevated, curve.duration)


def to_displacements(curve: PolyCurve) -> np.ndarray:
    """Returns the 2d consecutive control-point differences, x/y interleaved"""

    return np.diff(curve.control_points, axis=0).reshape(-1)


def from_displacements(
    d: int,
    start_point: np.ndarray,
    displacements: np.ndarray,
    duration: float = 1.0,
) -> PolyCurve:
    """Rebuilds a degree-d curve from its start point and displacements"""

    values = np.asarray(displacements, dtype=float).reshape(-1)
    if values.size != 2 * d:
        raise ShapeError(
            f'degree {d} needs {2 * d} displacement values, got {values.size}'
        )
    steps = np.vstack([np.zeros((1, 2)), values.reshape(d, 2)])
    points = np.asarray(start_point, dtype=float) + np.cumsum(steps, axis=0)

    return PolyCurve(points, duration)


def rotation_matrix(rotation: float) -> np.ndarray:
    """Returns the 2x2 counter-clockwise rotation matrix"""

    cos, sin = np.cos(rotation), np.sin(rotation)

    return np.array([[cos, -sin], [sin, cos]])


def rigid_transform(
    curve: PolyCurve, rotation: float, translation: np.ndarray
) -> PolyCurve:
    """Rotates the curve about the origin, then translates it"""

    points = curve.control_points @ rotation_matrix(rotation).T
    points = points + np.asarray(translation, dtype=float)

    return PolyCurve(points, curve.duration)


def _design_matrix(times, degree, duration) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    tolerance = PARAM_TOL * max(1.0, duration)
    if np.any(times < -tolerance) or np.any(times > duration + tolerance):
        raise DomainError(f'sample times must lie in [0, {duration:g}]')

    return bernstein_basis(degree, np.clip(times / duration, 0.0, 1.0))


def _fit_duration(times: np.ndarray, duration) -> float:
    if duration is not None:
        return float(duration)
    latest = float(np.max(times)) if len(times) else 0.0

    return latest if latest > 0 else 1.0


def fit_lsq(
    times: np.ndarray, points: np.ndarray, degree: int, duration=None
) -> PolyCurve:
    """Least-squares fit of a degree-d curve to timed samples"""

    times = np.asarray(times, dtype=float).reshape(-1)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(times) != len(points):
        raise ShapeError('times and points must have the same length')
    if len(np.unique(times)) < degree + 1:
        raise FitError(
            f'degree {degree} needs at least {degree + 1} distinct times'
        )
    duration = _fit_duration(times, duration)
    design = _design_matrix(times, degree, duration)
    solution, _, rank, _ = np.linalg.lstsq(design, points, rcond=None)
    if rank < degree + 1:
        raise FitError('rank-deficient design matrix')

    return PolyCurve(solution, duration)


def fit_bayesian(
    times: np.ndarray,
    points: np.ndarray,
    degree: int,
    cfg: FitConfig = FitConfig(),
    duration=None,
) -> PolyCurve:
    """
    Posterior-mean fit with a zero-mean isotropic Gaussian prior on the
    displacement parameters and i.i.d. Gaussian observation noise.

    The start point gets a broad prior (anchor_std) so that a single
    observation pins it down.
    """

    times = np.asarray(times, dtype=float).reshape(-1)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(times) != len(points):
        raise ShapeError('times and points must have the same length')
    duration = _fit_duration(times, duration)
    # control points = cumulative sums of (start, displacements)
    cumulative = np.tril(np.ones((degree + 1, degree + 1)))
    features = _design_matrix(times, degree, duration) @ cumulative
    prior_precision = np.full(degree + 1, cfg.prior_std ** -2)
    prior_precision[0] = cfg.anchor_std ** -2
    noise_precision = cfg.obs_noise_std ** -2
    precision = noise_precision * features.T @ features
    precision += np.diag(prior_precision)
    rhs = noise_precision * features.T @ points
    parameters = cho_solve(cho_factor(precision), rhs)

    return PolyCurve(cumulative @ parameters, duration)


def _power_coefficients(points: np.ndarray) -> np.ndarray:
    """Monomial coefficients (low to high) of a Bezier curve on [0, 1]"""

    d = len(points) - 1
    k = np.arange(d + 1)[:, None]
    j = np.arange(d + 1)[None, :]
    signs = np.where((k - j) % 2 == 0, 1.0, -1.0)
    change = np.where(j <= k, comb(d, k) * comb(k, j) * signs, 0.0)

    return change @ points


def project_points(
    curve: PolyCurve, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns the times and distances of the closest curve points for many
    query points at once.

    Candidates are the real parts of all roots of the derivative of the
    squared distance (companion-matrix eigenvalues) plus both endpoints.
    """

    queries = np.asarray(points, dtype=float).reshape(-1, 2)
    coefficients = _power_coefficients(curve.control_points)
    norms = np.linalg.norm(coefficients, axis=1)
    scale = max(1.0, float(norms.max()))
    significant = np.nonzero(norms[1:] > 1e-10 * scale)[0]
    if len(significant) == 0:
        distances = np.linalg.norm(queries - curve.start, axis=1)
        return np.zeros(len(queries)), distances

    m = int(significant[-1]) + 1
    a = coefficients[: m + 1]
    b = a[1:] * np.arange(1, m + 1)[:, None]
    shared = np.convolve(a[:, 0], b[:, 0]) + np.convolve(a[:, 1], b[:, 1])
    polys = np.tile(shared, (len(queries), 1))
    polys[:, :m] -= queries @ b.T
    n = 2 * m - 1
    monic = polys[:, :n] / shared[n]
    companion = np.zeros((len(queries), n, n))
    if n > 1:
        companion[:, np.arange(1, n), np.arange(n - 1)] = 1.0
    companion[:, :, -1] = -monic
    roots = np.linalg.eigvals(companion).real
    candidates = np.clip(
        np.concatenate(
            [roots, np.zeros((len(queries), 1)), np.ones((len(queries), 1))],
            axis=1,
        ),
        0.0,
        1.0,
    )
    candidates = _polish_feet(
        curve.control_points, queries[:, None, :], candidates
    )
    positions = bernstein_basis(curve.degree, candidates) @ (
        curve.control_points
    )
    distances = np.linalg.norm(positions - queries[:, None, :], axis=2)
    best = np.argmin(distances, axis=1)
    rows = np.arange(len(queries))

    return candidates[rows, best] * curve.duration, distances[rows, best]


def project_point(curve: PolyCurve, p: np.ndarray) -> Tuple[float, float]:
    """Returns (t*, distance) of the curve point closest to p"""

    times, distances = project_points(curve, np.asarray(p).reshape(1, 2))

    return float(times[0]), float(distances[0])


def _bezier_derivatives(points: np.ndarray, u: np.ndarray):
    d = len(points) - 1
    position = bernstein_basis(d, u) @ points
    first = d * (bernstein_basis(d - 1, u) @ np.diff(points, axis=0))
    if d >= 2:
        second = d * (d - 1) * (
            bernstein_basis(d - 2, u) @ np.diff(points, n=2, axis=0)
        )
    else:
        second = np.zeros_like(first)

    return position, first, second


def _polish_feet(points, queries, u, steps: int = 1) -> np.ndarray:
    """Newton steps on the squared-distance stationarity condition"""

    for _ in range(steps):
        position, first, second = _bezier_derivatives(points, u)
        offset = position - queries
        gradient = np.sum(offset * first, axis=-1)
        curvature = np.sum(first * first, axis=-1)
        curvature += np.sum(offset * second, axis=-1)
        safe = np.where(curvature > 1e-12, curvature, 1.0)
        step = np.where(curvature > 1e-12, gradient / safe, 0.0)
        u = np.clip(u - step, 0.0, 1.0)

    return u


def chord_parameters(points: np.ndarray) -> np.ndarray:
    """Chord-length parameterization normalized to [0, 1]"""

    lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])

    return cumulative / cumulative[-1]


def _lsq_control_points(u, points, degree) -> np.ndarray:
    design = bernstein_basis(degree, u)
    solution, *_ = np.linalg.lstsq(design, points, rcond=None)

    return solution


def _foot_points(control, points, u) -> np.ndarray:
    """Per-point Newton foot-point update, keeping only improving moves"""

    best = u.copy()
    best_distance = np.linalg.norm(
        bernstein_basis(len(control) - 1, best) @ control - points, axis=1
    )
    current = u.copy()
    for _ in range(NEWTON_FOOT_STEPS):
        current = _polish_feet(control, points, current)
        distance = np.linalg.norm(
            bernstein_basis(len(control) - 1, current) @ control - points,
            axis=1,
        )
        improved = distance < best_distance
        best[improved] = current[improved]
        best_distance[improved] = distance[improved]

    return best


def _orthogonal_rms(control, points, u) -> float:
    residual = bernstein_basis(len(control) - 1, u) @ control - points

    return float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))


def _gauss_newton_step(control, points, u):
    """Joint linearized update of control points and parameters"""

    n, degree = len(points), len(control) - 1
    position, first, _ = _bezier_derivatives(control, u)
    residual = (position - points).reshape(-1)
    basis = bernstein_basis(degree, u)
    jacobian = np.zeros((2 * n, 2 * (degree + 1) + n))
    jacobian[0::2, 0 : 2 * (degree + 1) : 2] = basis
    jacobian[1::2, 1 : 2 * (degree + 1) : 2] = basis
    rows = np.arange(n)
    jacobian[2 * rows, 2 * (degree + 1) + rows] = first[:, 0]
    jacobian[2 * rows + 1, 2 * (degree + 1) + rows] = first[:, 1]
    step, *_ = np.linalg.lstsq(jacobian, -residual, rcond=None)
    new_control = control + step[: 2 * (degree + 1)].reshape(degree + 1, 2)
    new_u = np.clip(u + step[2 * (degree + 1) :], 0.0, 1.0)

    return new_control, new_u


def fit_tls_borges_pastva(
    points: np.ndarray, degree: int, cfg: FitConfig = FitConfig()
) -> TLSFit:
    """
    Total-least-squares fit of a curve to ordered, untimed samples.

    Starts from chord-length parameters. Every outer iteration takes a joint
    Gauss-Newton step, moves each parameter to its foot point with Newton
    steps and re-solves the control points by linear least squares. Stops
    when the RMS orthogonal residual changes by less than tls_tol.
    """

    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) < degree + 1:
        raise FitError(f'degree {degree} needs at least {degree + 1} points')
    if np.max(np.linalg.norm(points - points[0], axis=1)) < PARAM_TOL:
        constant = np.repeat(points[:1], degree + 1, axis=0)
        return TLSFit(PolyCurve(constant), True, 0.0, 0)

    u = chord_parameters(points)
    control = _lsq_control_points(u, points, degree)
    u = _foot_points(control, points, u)
    rms = _orthogonal_rms(control, points, u)
    best = (rms, control, u)
    converged = False
    iteration = 0
    for iteration in range(1, cfg.tls_max_iter + 1):
        candidate, candidate_u = _gauss_newton_step(control, points, u)
        candidate_u = _foot_points(candidate, points, candidate_u)
        if _orthogonal_rms(candidate, points, candidate_u) > rms:
            candidate_u = u
        candidate = _lsq_control_points(candidate_u, points, degree)
        candidate_u = _foot_points(candidate, points, candidate_u)
        candidate_rms = _orthogonal_rms(candidate, points, candidate_u)
        if candidate_rms < best[0]:
            best = (candidate_rms, candidate, candidate_u)
        change = abs(rms - candidate_rms)
        control, u, rms = candidate, candidate_u, candidate_rms
        if change < cfg.tls_tol:
            converged = True
            break

    if not converged:
        logger.warning(
            'TLS fit did not converge after %d iterations (rms %.3e m)',
            iteration,
            best[0],
        )

    return TLSFit(PolyCurve(best[1]), converged, best[0], iteration)
