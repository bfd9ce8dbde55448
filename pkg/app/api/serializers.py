from typing import Any, Dict

from django.contrib.auth import authenticate
from django.utils.translation import gettext_lazy as _

from rest_framework.serializers import (
    CharField,
    DictField,
    IntegerField,
    ListField,
    ModelSerializer,
    Serializer,
    ValidationError,
)

from core.exceptions import EPDError
from core.models import EpochLoss, SceneReport, TrainingRun
from core.serializers import SceneSerializer
from core.scene import trajectory_from_dict


class AuthTokenSerializer(Serializer):
    """Serializer for the authentication token"""

    username = CharField()
    password = CharField(
        style={'input_type': 'password'}, trim_whitespace=False
    )

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        """Returns validated attributes"""

        user = authenticate(
            request=self.context.get('request'),
            username=attrs.get('username'),
            password=attrs.get('password'),
        )
        if not user:
            message = _('Unable to authenticate with provided credentials')
            raise ValidationError(message, code='authentication')

        attrs['user'] = user

        return attrs


class SampleRequestSerializer(Serializer):
    """Serializer for a scene to be continued by the model"""

    scene = SceneSerializer()
    n_samples = IntegerField(min_value=1, max_value=64, default=6)
    ddim_steps = IntegerField(min_value=1, default=10)
    seed = IntegerField(min_value=0, default=0)

    def validate_scene(self, value: Dict[str, Any]):
        """Builds the Scene of the validated document"""

        try:
            return self.fields['scene'].create(value)
        except EPDError as error:
            raise ValidationError(str(error))


class ReportRequestSerializer(Serializer):
    """Serializer for a scene with sampled continuations to be scored"""

    scene = SceneSerializer()
    samples = ListField(
        child=ListField(child=DictField(), allow_empty=False), min_length=2
    )

    def validate_scene(self, value: Dict[str, Any]):
        """Builds the Scene of the validated document"""

        try:
            return self.fields['scene'].create(value)
        except EPDError as error:
            raise ValidationError(str(error))

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        """Rebuilds the trajectories, one per agent and sample"""

        scene = attrs['scene']
        samples = []
        for sample in attrs['samples']:
            if len(sample) != len(scene.agents):
                raise ValidationError(
                    {'samples': 'every sample needs one entry per agent'}
                )
            try:
                samples.append([trajectory_from_dict(t) for t in sample])
            except EPDError as error:
                raise ValidationError({'samples': str(error)})
        attrs['samples'] = samples

        return attrs


class EpochLossSerializer(ModelSerializer):
    """Serializer for the EpochLoss model"""

    class Meta:
        model = EpochLoss
        fields = ('epoch', 'mean_loss', 'lr')


class TrainingRunSerializer(ModelSerializer):
    """Serializer for the TrainingRun model"""

    epochs = EpochLossSerializer(many=True, read_only=True)

    class Meta:
        model = TrainingRun
        fields = (
            'id',
            'name',
            'representation',
            'config',
            'checkpoint_path',
            'parameter_count',
            'seed',
            'created_on',
            'finished_on',
            'final_loss',
            'epochs',
        )
        read_only_fields = fields


class SceneReportSerializer(ModelSerializer):
    """Serializer for the SceneReport model"""

    class Meta:
        model = SceneReport
        fields = (
            'id',
            'run',
            'scene_id',
            'realism_meta',
            'kinematic',
            'interactive',
            'map_adherence',
            'minade',
            'coverage',
            'created_on',
        )
        read_only_fields = fields
