"""
Forward diffusion of future displacement vectors and deterministic DDIM
sampling of scene continuations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
import torch

from core.exceptions import ConfigError, DomainError, ModelError, ShapeError
from core.net.model import SceneDiffuser, denoise_predict, encode_scene
from core.net.representation import decode_futures, scene_features
from core.scene import Scene, Trajectory, stationary_correction

logger = logging.getLogger(__name__)

ArrayOrTensor = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class DiffusionConfig:
    """Noise schedule bounds and sampler settings"""

    steps: int = 1000
    beta_start: float = 1e-5
    beta_end: float = 0.2
    ddim_steps: int = 10
    clip_x0: Optional[float] = 5.0

    def __post_init__(self) -> None:
        """Validates the schedule bounds and the sampler step count"""

        if int(self.steps) < 1:
            raise ConfigError('steps must be at least 1')
        if not 0.0 < self.beta_start < self.beta_end < 1.0:
            raise ConfigError('need 0 < beta_start < beta_end < 1')
        if not 1 <= int(self.ddim_steps) <= int(self.steps):
            raise ConfigError('ddim_steps must lie in [1, steps]')
        if self.clip_x0 is not None and self.clip_x0 <= 0:
            raise ConfigError('clip_x0 must be positive or null')

    def schedule(self) -> NoiseSchedule:
        """Builds the linear schedule described by this config"""

        return build_linear_schedule(
            self.steps, self.beta_start, self.beta_end
        )


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    Linear variance schedule. beta[s - 1] and alpha[s - 1] hold step s,
    alpha_bar[s] the cumulative product up to s with alpha_bar[0] = 1.
    """

    steps: int
    beta_start: float
    beta_end: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def _check(self, s) -> np.ndarray:
        values = np.asarray(s)
        if np.any(values < 0) or np.any(values > self.steps):
            raise DomainError(f'step index must lie in [0, {self.steps}]')

        return values.astype(int)

    def beta_at(self, s) -> np.ndarray:
        """Evaluates the linear formula, s = 0 giving beta_start"""

        values = self._check(s)

        return (
            values * (self.beta_end - self.beta_start) / self.steps
            + self.beta_start
        )

    def alpha_bar_at(self, s) -> np.ndarray:
        """Cumulative signal fraction at step s"""

        return self.alpha_bar[self._check(s)]


def build_linear_schedule(
    steps: int = 1000, beta_start: float = 1e-5, beta_end: float = 0.2
) -> NoiseSchedule:
    """beta_s = s * (beta_end - beta_start) / S + beta_start for s = 1..S"""

    if int(steps) < 1:
        raise ConfigError('steps must be at least 1')
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ConfigError('need 0 < beta_start < beta_end < 1')
    steps = int(steps)
    s = np.arange(1, steps + 1, dtype=float)
    beta = s * (beta_end - beta_start) / steps + beta_start
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha)])
    for array in (beta, alpha, alpha_bar):
        array.setflags(write=False)

    return NoiseSchedule(steps, beta_start, beta_end, beta, alpha, alpha_bar)


def _coefficients(alpha_bar: np.ndarray, like: ArrayOrTensor):
    # square roots in float64: alpha_bar underflows float32 near s = S
    signal = np.sqrt(alpha_bar)
    noise = np.sqrt(1.0 - alpha_bar)
    if isinstance(like, torch.Tensor):
        return (
            torch.as_tensor(signal, dtype=like.dtype, device=like.device),
            torch.as_tensor(noise, dtype=like.dtype, device=like.device),
        )

    return signal, noise


def forward_diffuse(
    delta0: ArrayOrTensor, s, sched: NoiseSchedule, eps: ArrayOrTensor
) -> ArrayOrTensor:
    """
    Noises clean displacements to step s. s is a scalar or holds one step
    per row of delta0.
    """

    if tuple(delta0.shape) != tuple(eps.shape):
        raise ShapeError('delta0 and eps must have the same shape')
    alpha_bar = sched.alpha_bar_at(s)
    if alpha_bar.ndim:
        alpha_bar = alpha_bar[..., None]
    signal, noise = _coefficients(alpha_bar, delta0)

    return signal * delta0 + noise * eps


def ddim_substeps(steps: int, k: int) -> List[int]:
    """K + 1 evenly spaced, strictly decreasing step indices from S to 0"""

    if not 1 <= k <= steps:
        raise ConfigError(f'ddim steps must lie in [1, {steps}], got {k}')
    grid = np.floor(np.linspace(steps, 0, k + 1) + 0.5).astype(int)

    return [int(s) for s in grid]


def ddim_step(
    x_s: ArrayOrTensor,
    eps_hat: ArrayOrTensor,
    s: int,
    s_prev: int,
    sched: NoiseSchedule,
    clip_x0: Optional[float] = None,
) -> ArrayOrTensor:
    """
    One deterministic DDIM update from step s to s_prev. The clean estimate
    is clamped to +-clip_x0 when given.
    """

    if not s > s_prev >= 0:
        raise DomainError('DDIM steps must satisfy s > s_prev >= 0')
    signal, noise = _coefficients(sched.alpha_bar_at(s), x_s)
    x0 = (x_s - noise * eps_hat) / signal
    if clip_x0 is not None:
        x0 = x0.clip(-clip_x0, clip_x0)
    signal_prev, noise_prev = _coefficients(sched.alpha_bar_at(s_prev), x_s)

    return signal_prev * x0 + noise_prev * eps_hat


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-component affine map of future displacements to unit scale"""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        """Freezes the vectors and validates the scales"""

        mean = np.array(self.mean, dtype=float).reshape(-1)
        std = np.array(self.std, dtype=float).reshape(-1)
        if mean.shape != std.shape:
            raise ShapeError('mean and std must have the same length')
        if np.any(std <= 1e-6) or not np.all(np.isfinite(std)):
            raise DomainError('std must exceed 1e-6 in every component')
        for array in (mean, std):
            array.setflags(write=False)
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'std', std)

    @classmethod
    def fit(cls, rows: np.ndarray) -> Standardizer:
        """Fits mean and std to the rows of a displacement matrix"""

        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or len(rows) == 0:
            raise ShapeError('need a non-empty matrix of displacement rows')

        return cls(rows.mean(axis=0), np.maximum(rows.std(axis=0), 1e-3))

    @classmethod
    def identity(cls, dim: int) -> Standardizer:
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def from_model(cls, model: SceneDiffuser) -> Standardizer:
        """Reads the standardizer stored in a model's buffers"""

        return cls(
            model.standardizer_mean.detach().cpu().double().numpy(),
            model.standardizer_std.detach().cpu().double().numpy(),
        )

    def store(self, model: SceneDiffuser) -> None:
        """Copies mean and std into a model's buffers"""

        if len(self.mean) != model.output_dim:
            raise ModelError(
                f'standardizer has {len(self.mean)} components, model '
                f'outputs {model.output_dim}'
            )
        with torch.no_grad():
            model.standardizer_mean.copy_(torch.tensor(self.mean))
            model.standardizer_std.copy_(torch.tensor(self.std))

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows) - self.mean) / self.std

    def invert(self, rows: np.ndarray) -> np.ndarray:
        return np.asarray(rows) * self.std + self.mean


def generate(
    scene: Scene,
    model: SceneDiffuser,
    sched: NoiseSchedule,
    k: int,
    n_samples: int,
    seed: int,
    clip_x0: Optional[float] = None,
    correct_stationary: bool = True,
) -> List[List[Trajectory]]:
    """
    Samples n_samples joint continuations of the scene. Sample i starts from
    noise drawn with seed (seed, i), so every sample is reproducible on its
    own. Without clip_x0 every step is the exact DDIM update; the commands
    pass diffusion.clip_x0 from the run configuration.
    """

    if model.config.steps != sched.steps:
        raise ModelError(
            f'model was built for {model.config.steps} diffusion steps, '
            f'schedule has {sched.steps}'
        )
    if n_samples < 1:
        raise ConfigError('n_samples must be at least 1')
    representation = model.config.representation
    features = scene_features(scene, representation)
    standardizer = Standardizer.from_model(model)
    dtype = model.dtype
    noise = np.stack(
        [
            np.random.default_rng([seed, index]).standard_normal(
                (features.n_agents, model.output_dim)
            )
            for index in range(n_samples)
        ]
    )
    substeps = ddim_substeps(sched.steps, k)

    model.eval()
    with torch.no_grad():
        cond = encode_scene(features, model)
        x = torch.as_tensor(noise, dtype=dtype)
        for s, s_prev in zip(substeps[:-1], substeps[1:]):
            steps = torch.full(x.shape[:-1], s, dtype=torch.long)
            eps_hat = denoise_predict(x, steps, cond, model)
            x = ddim_step(x, eps_hat, s, s_prev, sched, clip_x0)
    rows = standardizer.invert(x.double().numpy())

    samples = []
    for sample_rows in rows:
        futures = decode_futures(
            sample_rows, features.agent_frame, representation
        )
        if correct_stationary:
            futures = stationary_correction(scene, futures)
        samples.append(futures)
    logger.debug(
        'scene %s: %d samples, %d DDIM steps',
        scene.scene_id,
        n_samples,
        k,
    )

    return samples


def generate_many(
    scenes: Sequence[Scene],
    model: SceneDiffuser,
    sched: NoiseSchedule,
    k: int,
    n_samples: int,
    seed: int,
    clip_x0: Optional[float] = None,
) -> List[List[List[Trajectory]]]:
    """Runs generate over a corpus with one shared seed"""

    return [
        generate(scene, model, sched, k, n_samples, seed, clip_x0)
        for scene in scenes
    ]
