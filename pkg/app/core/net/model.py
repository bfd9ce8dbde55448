"""
Scene encoder and noise-prediction denoiser.

Agent tokens embed each agent's history in its own frame, map tokens each
element's geometry in its frame. Attention sees relative poses only, through
pair embeddings of (distance, bearing, heading difference) measured in the
query token's frame, so outputs are invariant to global rigid motions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn

from core.exceptions import ConfigError, DomainError, ModelError, ShapeError
from core.net.layers import (
    AttentionBlock,
    DenoiserBlock,
    TwoLayerMLP,
    step_embedding,
)
from core.net.representation import REPRESENTATIONS, WIDTHS
from core.scene import SceneFeatures, wrap_angle

PAIR_FEATURES = 5


@dataclass(frozen=True)
class ModelConfig:
    """Width, depth and input representation of the network"""

    hidden_dim: int = 64
    n_enc_blocks: int = 2
    n_denoise_blocks: int = 2
    n_heads: int = 4
    dropout: float = 0.1
    representation: str = 'polynomial'
    ff_multiplier: int = 4
    steps: int = 1000

    def __post_init__(self) -> None:
        """Validates the architecture settings"""

        if self.hidden_dim < 2 or self.hidden_dim % 2:
            raise ConfigError('hidden_dim must be even and positive')
        if self.n_heads < 1 or self.hidden_dim % self.n_heads:
            raise ConfigError('hidden_dim must be divisible by n_heads')
        if self.n_enc_blocks < 0 or self.n_denoise_blocks < 1:
            raise ConfigError('need n_enc_blocks >= 0, n_denoise_blocks >= 1')
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError('dropout must lie in [0, 1)')
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(
                f'representation must be one of {REPRESENTATIONS}'
            )
        if self.ff_multiplier < 1 or self.steps < 1:
            raise ConfigError('ff_multiplier and steps must be positive')

    @property
    def widths(self) -> dict:
        return WIDTHS[self.representation]


class ConditionTokens(NamedTuple):
    """Encoder outputs plus the pair inputs reused by the denoiser"""

    agent_tokens: torch.Tensor
    map_tokens: torch.Tensor
    agent_pair: torch.Tensor
    agent_map_pair: torch.Tensor


def relative_pose_features(
    query_frame: np.ndarray, key_frame: np.ndarray
) -> np.ndarray:
    """
    (Q, K, 5) features of every key pose seen from every query pose:
    log(1 + distance), bearing sine and cosine, heading difference sine and
    cosine
    """

    query_frame = np.asarray(query_frame, dtype=float).reshape(-1, 3)
    key_frame = np.asarray(key_frame, dtype=float).reshape(-1, 3)
    offset = key_frame[None, :, :2] - query_frame[:, None, :2]
    heading = query_frame[:, None, 2]
    cos, sin = np.cos(heading), np.sin(heading)
    local_x = cos * offset[..., 0] + sin * offset[..., 1]
    local_y = -sin * offset[..., 0] + cos * offset[..., 1]
    distance = np.hypot(local_x, local_y)
    safe = np.where(distance > 1e-9, distance, 1.0)
    bearing_cos = np.where(distance > 1e-9, local_x / safe, 1.0)
    bearing_sin = np.where(distance > 1e-9, local_y / safe, 0.0)
    turn = wrap_angle(key_frame[None, :, 2] - query_frame[:, None, 2])

    return np.stack(
        [
            np.log1p(distance),
            bearing_sin,
            bearing_cos,
            np.sin(turn),
            np.cos(turn),
        ],
        axis=-1,
    )


class SceneDiffuser(nn.Module):
    """Encoder and denoiser of the scene diffusion model"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dim = config.hidden_dim
        widths = config.widths
        self.output_dim = widths['future']

        self.agent_embed = TwoLayerMLP(widths['history'] + 2 + 4, dim, dim)
        self.map_embed = TwoLayerMLP(widths['map'] + 2, dim, dim)
        self.scene_pair_embed = TwoLayerMLP(PAIR_FEATURES, dim, dim)
        self.encoder = nn.ModuleList(
            [
                AttentionBlock(
                    dim, config.n_heads, config.dropout, config.ff_multiplier
                )
                for _ in range(config.n_enc_blocks)
            ]
        )
        self.encoder_norm = nn.LayerNorm(dim)

        self.future_embed = TwoLayerMLP(self.output_dim, dim, dim)
        self.step_embed = TwoLayerMLP(dim, dim, dim)
        self.agent_pair_embed = TwoLayerMLP(PAIR_FEATURES, dim, dim)
        self.agent_map_pair_embed = TwoLayerMLP(PAIR_FEATURES, dim, dim)
        self.denoiser = nn.ModuleList(
            [
                DenoiserBlock(
                    dim, config.n_heads, config.dropout, config.ff_multiplier
                )
                for _ in range(config.n_denoise_blocks)
            ]
        )
        self.head_norm = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, self.output_dim)

        self.register_buffer('standardizer_mean', torch.zeros(self.output_dim))
        self.register_buffer('standardizer_std', torch.ones(self.output_dim))

    @property
    def dtype(self) -> torch.dtype:
        return self.head.weight.dtype

    @property
    def parameter_count(self) -> int:
        """Number of trainable scalars"""

        return sum(p.numel() for p in self.parameters())

    def __repr__(self) -> str:
        """Representation of a SceneDiffuser object"""

        return (
            f'<SceneDiffuser: {self.config.representation}, '
            f'D={self.config.hidden_dim}, {self.parameter_count} parameters>'
        )


def init_params(cfg: ModelConfig, seed: int = 0) -> SceneDiffuser:
    """
    Builds a model with PyTorch's fan-in uniform initialization drawn from
    a generator seeded with seed, leaving the global RNG untouched
    """

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = SceneDiffuser(cfg)

    return model


def _tensor(array: np.ndarray, model: SceneDiffuser) -> torch.Tensor:
    return torch.as_tensor(np.asarray(array), dtype=model.dtype)


def encode_scene(
    features: SceneFeatures, model: SceneDiffuser
) -> ConditionTokens:
    """Embeds agents and map elements and runs the encoder blocks"""

    widths = model.config.widths
    if features.hist_disp.shape[1] != widths['history'] or (
        features.n_map and features.map_disp.shape[1] != widths['map']
    ):
        raise ModelError(
            f'features do not match the {model.config.representation} '
            'representation of the model'
        )
    agent_input = np.concatenate(
        [features.hist_disp, features.tw / 5.0, features.agent_cat], axis=1
    )
    agent_tokens = model.agent_embed(_tensor(agent_input, model))
    map_input = np.concatenate([features.map_disp, features.map_cat], axis=1)
    map_tokens = model.map_embed(_tensor(map_input, model))

    frames = np.concatenate([features.agent_frame, features.map_frame])
    scene_pair = model.scene_pair_embed(
        _tensor(relative_pose_features(frames, frames), model)
    )
    tokens = torch.cat([agent_tokens, map_tokens], dim=0)
    for block in model.encoder:
        tokens = block(tokens, scene_pair)
    tokens = model.encoder_norm(tokens)

    agent_pair = model.agent_pair_embed(
        _tensor(
            relative_pose_features(
                features.agent_frame, features.agent_frame
            ),
            model,
        )
    )
    agent_map_pair = model.agent_map_pair_embed(
        _tensor(
            relative_pose_features(features.agent_frame, features.map_frame),
            model,
        )
    )
    n_agents = features.n_agents

    return ConditionTokens(
        tokens[:n_agents], tokens[n_agents:], agent_pair, agent_map_pair
    )


def denoise_predict(
    x: torch.Tensor,
    steps: torch.Tensor,
    cond: ConditionTokens,
    model: SceneDiffuser,
) -> torch.Tensor:
    """
    Predicts the noise in x, shaped (..., A, F), given each agent's step
    index. Leading dimensions batch independent samples of one scene.
    """

    n_agents = cond.agent_tokens.shape[0]
    if x.shape[-2:] != (n_agents, model.output_dim):
        raise ShapeError(
            f'expected (..., {n_agents}, {model.output_dim}) noised '
            f'displacements, got {tuple(x.shape)}'
        )
    steps = torch.as_tensor(steps)
    if torch.any(steps < 0) or torch.any(steps > model.config.steps):
        raise DomainError(
            f'step index must lie in [0, {model.config.steps}]'
        )
    steps = torch.broadcast_to(steps, x.shape[:-1])
    time = step_embedding(steps, model.config.hidden_dim).to(model.dtype)
    h = (
        model.future_embed(x.to(model.dtype))
        + model.step_embed(time)
        + cond.agent_tokens
    )
    for block in model.denoiser:
        h = block(h, cond.map_tokens, cond.agent_map_pair, cond.agent_pair)

    return model.head(model.head_norm(h))


def loss_mse(eps, eps_hat):
    """Squared error summed over components, averaged over agents"""

    if tuple(eps.shape) != tuple(eps_hat.shape):
        raise ShapeError('eps and eps_hat must have the same shape')

    return ((eps - eps_hat) ** 2).sum(-1).mean()
