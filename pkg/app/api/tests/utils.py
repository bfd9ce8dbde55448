from typing import Any

from django.contrib.auth import get_user_model
from django.contrib.auth.models import AbstractUser

from core.metrics import MetricReport
from core.models import EpochLoss, SceneReport, TrainingRun


def create_user(**params: str) -> AbstractUser:
    """Creates a User with a given params"""

    return get_user_model().objects.create_user(**params)


def create_run(losses=(0.8, 0.6), **params: Any) -> TrainingRun:
    """Creates a finished TrainingRun with one EpochLoss per loss"""

    params.setdefault('name', 'desk-run')
    params.setdefault('final_loss', losses[-1] if losses else None)
    run = TrainingRun.objects.create(**params)
    for epoch, loss in enumerate(losses, start=1):
        EpochLoss.objects.create(
            run=run, epoch=epoch, mean_loss=loss, lr=1e-4
        )

    return run


def create_scene_report(
    run: TrainingRun, scene_id: str = 'scene', **scores: float
) -> SceneReport:
    """Creates a SceneReport of run with a given scores"""

    values = {
        'realism_meta': 0.5,
        'kinematic': 0.5,
        'interactive': 0.5,
        'map_adherence': 0.5,
        'minade': 1.0,
        'coverage': 2.0,
    }
    values.update(scores)

    return SceneReport.objects.create_from_report(
        MetricReport(scene_id=scene_id, **values), run
    )
