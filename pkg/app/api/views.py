import logging
import os
from functools import lru_cache
from typing import Any, Tuple

from django.conf import settings
from django.db.models.query import QuerySet
from rest_framework import status
from rest_framework.authtoken.views import ObtainAuthToken
from rest_framework.exceptions import APIException, ValidationError
from rest_framework.generics import (
    GenericAPIView,
    ListAPIView,
    RetrieveDestroyAPIView,
    get_object_or_404,
)
from rest_framework.request import Request
from rest_framework.response import Response
from rest_framework.settings import api_settings

from api import serializers

from core.config import RunConfig, load_config
from core.diffusion import build_linear_schedule, generate
from core.exceptions import EPDError
from core.metrics import compute_report
from core.models import SceneReport, TrainingRun
from core.net.checkpoint import checkpoint_load
from core.net.model import SceneDiffuser
from core.scene import trajectory_to_dict

logger = logging.getLogger(__name__)


class ModelUnavailable(APIException):
    status_code = status.HTTP_503_SERVICE_UNAVAILABLE
    default_detail = 'No model checkpoint is configured'
    default_code = 'model_unavailable'


@lru_cache(maxsize=2)
def _model_for(path: str) -> Tuple[SceneDiffuser, RunConfig]:
    """Loads the served checkpoint and the experiment configuration"""

    config = load_config(
        settings.EPD_CONFIG
        if os.path.exists(settings.EPD_CONFIG)
        else None
    )
    logger.info('loading checkpoint %s', path)

    return checkpoint_load(path), config


def served_model() -> Tuple[SceneDiffuser, RunConfig]:
    """Returns the model configured with EPD_CHECKPOINT"""

    if not settings.EPD_CHECKPOINT:
        raise ModelUnavailable()
    try:
        return _model_for(settings.EPD_CHECKPOINT)
    except (EPDError, OSError) as error:
        logger.error('cannot serve checkpoint: %s', error)
        raise ModelUnavailable(f'Cannot load the model checkpoint: {error}')


class CreateTokenView(ObtainAuthToken):
    """Endpoint for creating a Token"""

    serializer_class = serializers.AuthTokenSerializer
    renderer_classes = api_settings.DEFAULT_RENDERER_CLASSES


class SampleSceneView(GenericAPIView):
    """Endpoint for sampling joint continuations of a scene"""

    serializer_class = serializers.SampleRequestSerializer

    def post(self, request: Request, *args: Any, **kwargs: Any) -> Response:
        """Returns the sampled futures of every agent"""

        model, config = served_model()
        serializer = self.get_serializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        scene = data['scene']
        if data['ddim_steps'] > model.config.steps:
            raise ValidationError(
                {'ddim_steps': f'must not exceed {model.config.steps}'}
            )
        try:
            samples = generate(
                scene,
                model,
                build_linear_schedule(
                    model.config.steps,
                    config.diffusion.beta_start,
                    config.diffusion.beta_end,
                ),
                data['ddim_steps'],
                data['n_samples'],
                data['seed'],
                config.diffusion.clip_x0,
            )
        except EPDError as error:
            raise ValidationError({'message': str(error)})

        return Response(
            {
                'scene_id': scene.scene_id,
                'representation': model.config.representation,
                'samples': [
                    [
                        trajectory_to_dict(agent.id, traj)
                        for agent, traj in zip(scene.agents, sample)
                    ]
                    for sample in samples
                ],
            }
        )


class ReportSceneView(GenericAPIView):
    """Endpoint for scoring sampled continuations of a scene"""

    serializer_class = serializers.ReportRequestSerializer

    def post(self, request: Request, *args: Any, **kwargs: Any) -> Response:
        """Returns the MetricReport of the samples"""

        serializer = self.get_serializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data
        try:
            report = compute_report(data['scene'], data['samples'])
        except EPDError as error:
            raise ValidationError({'message': str(error)})

        return Response(report.as_dict())


class ListTrainingRunView(ListAPIView):
    """Endpoint for listing TrainingRuns"""

    serializer_class = serializers.TrainingRunSerializer

    def get_queryset(self) -> QuerySet:
        """Returns TrainingRuns with their epoch losses"""

        return TrainingRun.objects.prefetch_related('epochs')


class ManageTrainingRunView(RetrieveDestroyAPIView):
    """Endpoint for retrieving and deleting a TrainingRun"""

    serializer_class = serializers.TrainingRunSerializer
    queryset = TrainingRun.objects.all()


class ListSceneReportView(ListAPIView):
    """Endpoint for listing SceneReports recorded against a TrainingRun"""

    serializer_class = serializers.SceneReportSerializer

    def get_queryset(self) -> QuerySet:
        """Returns the SceneReports of the TrainingRun"""

        run = get_object_or_404(TrainingRun, pk=self.kwargs['pk'])

        return SceneReport.objects.filter(run=run)
