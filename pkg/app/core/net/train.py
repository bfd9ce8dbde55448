"""
Noise-prediction training: AdamW, linear warmup then cosine decay, scenes
drawn in a seeded order and batched serially.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import torch

from core.diffusion import NoiseSchedule, Standardizer, forward_diffuse
from core.exceptions import ConfigError, ModelError, TrainingError
from core.net.model import (
    ModelConfig,
    SceneDiffuser,
    denoise_predict,
    encode_scene,
    init_params,
    loss_mse,
)
from core.net.representation import future_targets, scene_features
from core.scene import Scene, SceneFeatures

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings"""

    lr: float = 5e-4
    schedule: str = 'cosine'
    warmup_epochs: int = 10
    epochs: int = 64
    batch_size: int = 32
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        """Validates values and the warmup bound"""

        if self.lr <= 0 or self.batch_size < 1 or self.weight_decay < 0:
            raise ConfigError(
                'lr and batch_size must be positive, weight_decay '
                'non-negative'
            )
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError('epochs must be non-negative')
        if self.warmup_epochs > self.epochs:
            raise ConfigError('warmup_epochs must not exceed epochs')
        if self.schedule not in ('cosine', 'constant'):
            raise ConfigError('schedule must be cosine or constant')


class EpochLog(NamedTuple):
    """Mean training loss and final learning rate of an epoch"""

    epoch: int
    mean_loss: float
    lr: float


class TrainResult(NamedTuple):
    model: SceneDiffuser
    history: List[EpochLog]


def learning_rate(progress: float, tcfg: TrainConfig) -> float:
    """
    Learning rate after progress epochs (fractional): linear warmup from 0,
    then cosine decay to 0 at the last epoch
    """

    if tcfg.warmup_epochs and progress < tcfg.warmup_epochs:
        return tcfg.lr * progress / tcfg.warmup_epochs
    if tcfg.schedule == 'constant':
        return tcfg.lr
    span = tcfg.epochs - tcfg.warmup_epochs
    if span <= 0:
        return tcfg.lr
    fraction = min(max((progress - tcfg.warmup_epochs) / span, 0.0), 1.0)

    return tcfg.lr * 0.5 * (1.0 + math.cos(math.pi * fraction))


class _Example(NamedTuple):
    scene_id: str
    features: SceneFeatures
    target: np.ndarray


def _examples(corpus: Sequence[Scene], representation: str):
    examples = []
    for scene in corpus:
        if not scene.has_futures:
            logger.warning(
                'scene %s has no ground truth, skipped', scene.scene_id
            )
            continue
        examples.append(
            _Example(
                scene.scene_id,
                scene_features(scene, representation),
                future_targets(scene, representation),
            )
        )

    return examples


def train(
    corpus: Sequence[Scene],
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    sched: NoiseSchedule,
    model: Optional[SceneDiffuser] = None,
) -> TrainResult:
    """
    Fits the denoiser on the corpus. The standardizer is fitted on the
    corpus targets before the first epoch.
    """

    if sched.steps != mcfg.steps:
        raise ModelError(
            f'model expects {mcfg.steps} diffusion steps, schedule has '
            f'{sched.steps}'
        )
    model = model if model is not None else init_params(mcfg, tcfg.seed)
    examples = _examples(corpus, mcfg.representation)
    if not examples:
        raise TrainingError('no scene with ground truth', 0, 0)
    standardizer = Standardizer.fit(
        np.concatenate([example.target for example in examples])
    )
    standardizer.store(model)

    optimizer = torch.optim.AdamW(
        model.parameters(), lr=tcfg.lr, weight_decay=tcfg.weight_decay
    )
    rng = np.random.default_rng(tcfg.seed)
    batches_per_epoch = math.ceil(len(examples) / tcfg.batch_size)
    history = []
    # dropout draws from the torch RNG
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(tcfg.seed)
        for epoch in range(tcfg.epochs):
            model.train()
            order = rng.permutation(len(examples))
            losses = []
            lr = 0.0
            for batch in range(batches_per_epoch):
                progress = epoch + batch / batches_per_epoch
                lr = learning_rate(progress, tcfg)
                for group in optimizer.param_groups:
                    group['lr'] = lr
                start = batch * tcfg.batch_size
                picked = [
                    examples[i] for i in order[start : start + tcfg.batch_size]
                ]
                optimizer.zero_grad()
                loss = _batch_loss(picked, model, standardizer, sched, rng)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        'non-finite loss',
                        epoch + 1,
                        batch,
                        [example.scene_id for example in picked],
                    )
                loss.backward()
                optimizer.step()
                losses.append(float(loss.detach()))
            entry = EpochLog(epoch + 1, float(np.mean(losses)), lr)
            history.append(entry)
            logger.info(
                'epoch %d: mean loss %.4f, lr %.2e',
                entry.epoch,
                entry.mean_loss,
                entry.lr,
            )
    model.eval()

    return TrainResult(model, history)


def _batch_loss(examples, model, standardizer, sched, rng) -> torch.Tensor:
    losses = []
    for example in examples:
        delta0 = standardizer.apply(example.target)
        steps = rng.integers(1, sched.steps + 1, size=len(delta0))
        eps = rng.standard_normal(delta0.shape)
        noised = forward_diffuse(delta0, steps, sched, eps)
        cond = encode_scene(example.features, model)
        eps_hat = denoise_predict(
            torch.as_tensor(noised, dtype=model.dtype),
            torch.as_tensor(steps),
            cond,
            model,
        )
        losses.append(
            loss_mse(torch.as_tensor(eps, dtype=model.dtype), eps_hat)
        )

    return torch.stack(losses).mean()
