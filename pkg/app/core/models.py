from __future__ import annotations

from dataclasses import asdict
from typing import Any, Optional

from django.core.validators import MinValueValidator, MaxValueValidator
from django.db import models, transaction
from django.utils.timezone import now

from core.metrics import MetricReport
from core.net.representation import REPRESENTATIONS
from core.net.train import TrainResult

SCORE_VALIDATORS = [MinValueValidator(0.0), MaxValueValidator(1.0)]


class TrainingRunManager(models.Manager):
    """Manager for the TrainingRun model"""

    @transaction.atomic
    def record(
        self,
        result: TrainResult,
        name: str,
        config: dict,
        seed: int,
        checkpoint_path: str = '',
        **extra_fields: Any,
    ) -> TrainingRun:
        """Creates a finished TrainingRun with the epoch history of result"""

        model_config = result.model.config
        history = result.history
        run = self.create(
            name=name,
            representation=model_config.representation,
            config=config or {'model': asdict(model_config)},
            checkpoint_path=str(checkpoint_path or ''),
            parameter_count=result.model.parameter_count,
            seed=seed,
            finished_on=now(),
            final_loss=history[-1].mean_loss if history else None,
            **extra_fields,
        )
        EpochLoss.objects.bulk_create(
            [
                EpochLoss(
                    run=run,
                    epoch=entry.epoch,
                    mean_loss=entry.mean_loss,
                    lr=entry.lr,
                )
                for entry in history
            ]
        )

        return run


class TrainingRun(models.Model):
    """A model for training runs of the scene diffusion model"""

    name = models.CharField(max_length=255)
    representation = models.CharField(
        max_length=32,
        choices=[(value, value) for value in REPRESENTATIONS],
        default=REPRESENTATIONS[0],
    )
    config = models.JSONField(default=dict)
    checkpoint_path = models.CharField(max_length=1024, blank=True)
    parameter_count = models.PositiveIntegerField(default=0)
    seed = models.PositiveBigIntegerField(default=0)
    created_on = models.DateTimeField(default=now, editable=False)
    finished_on = models.DateTimeField(null=True, blank=True)
    final_loss = models.FloatField(null=True, blank=True)

    objects = TrainingRunManager()

    class Meta:
        ordering = ['-created_on', '-id']

    def __str__(self) -> str:
        """Returns TrainingRun's name"""

        return f'{self.name}'

    def __repr__(self) -> str:
        """Representation of a TrainingRun object"""

        return f'<TrainingRun: {self.name} ({self.representation})>'


class EpochLoss(models.Model):
    """A model for the mean training loss of one epoch"""

    run = models.ForeignKey(
        TrainingRun, on_delete=models.CASCADE, related_name='epochs'
    )
    epoch = models.PositiveIntegerField(validators=[MinValueValidator(1)])
    mean_loss = models.FloatField()
    lr = models.FloatField(validators=[MinValueValidator(0.0)])

    class Meta:
        ordering = ['epoch']
        constraints = [
            models.UniqueConstraint(
                fields=['run', 'epoch'], name='uq_run_epoch'
            )
        ]

    def __repr__(self) -> str:
        """Representation of an EpochLoss object"""

        return f'<EpochLoss: {self.run} epoch {self.epoch}>'


class SceneReportManager(models.Manager):
    """Manager for the SceneReport model"""

    def create_from_report(
        self, report: MetricReport, run: Optional[TrainingRun] = None
    ) -> SceneReport:
        """Stores a MetricReport, validating the score ranges"""

        scene_report = self.model(
            run=run,
            scene_id=report.scene_id,
            realism_meta=report.realism_meta,
            kinematic=report.kinematic,
            interactive=report.interactive,
            map_adherence=report.map_adherence,
            minade=report.minade,
            coverage=report.coverage,
        )
        scene_report.full_clean()
        scene_report.save(using=self._db)

        return scene_report


class SceneReport(models.Model):
    """A model for realism and regression scores of one scene"""

    run = models.ForeignKey(
        TrainingRun,
        on_delete=models.CASCADE,
        related_name='reports',
        null=True,
        blank=True,
    )
    scene_id = models.CharField(max_length=255)
    realism_meta = models.FloatField(validators=SCORE_VALIDATORS)
    kinematic = models.FloatField(validators=SCORE_VALIDATORS)
    interactive = models.FloatField(validators=SCORE_VALIDATORS)
    map_adherence = models.FloatField(
        validators=SCORE_VALIDATORS, null=True, blank=True
    )
    minade = models.FloatField(validators=[MinValueValidator(0.0)])
    coverage = models.FloatField(validators=[MinValueValidator(0.0)])
    created_on = models.DateTimeField(default=now, editable=False)

    objects = SceneReportManager()

    class Meta:
        ordering = ['scene_id', 'id']

    def __repr__(self) -> str:
        """Representation of a SceneReport object"""

        return f'<SceneReport: {self.scene_id} ({self.realism_meta:.3f})>'
