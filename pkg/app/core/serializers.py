from typing import Any, Dict, Tuple

from rest_framework.serializers import (
    CharField,
    ChoiceField,
    FloatField,
    ListField,
    Serializer,
    ValidationError,
)

from core.poly import PolyCurve
from core.scene import (
    FUTURE_DEGREE,
    FUTURE_DURATION,
    HISTORY_DEGREE,
    HISTORY_DURATION,
    MAP_DEGREE,
    Agent,
    AgentCategory,
    MapCategory,
    MapElement,
    Scene,
)


def point_list(count: int, **kwargs: Any) -> ListField:
    """Returns a field accepting exactly count [x, y] pairs"""

    return ListField(
        child=ListField(child=FloatField(), min_length=2, max_length=2),
        min_length=count,
        max_length=count,
        **kwargs,
    )


def first_error(errors: Any, path: str = '') -> Tuple[str, str]:
    """Returns the dotted path and message of the first serializer error"""

    if isinstance(errors, dict):
        for key, value in errors.items():
            if key == 'non_field_errors':
                return first_error(value, path)
            if isinstance(key, int):
                nested = f'{path}[{key}]'
            else:
                nested = f'{path}.{key}' if path else key
            if value:
                return first_error(value, nested)
    if isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                if value:
                    return first_error(value, f'{path}[{index}]')
            elif value:
                return path, str(value)

    return path, str(errors)


class AgentSerializer(Serializer):
    """Serializer for one agent of a scene document"""

    id = CharField()
    category = ChoiceField(choices=[c.value for c in AgentCategory])
    tw = ListField(child=FloatField(), min_length=2, max_length=2)
    footprint = ListField(
        child=FloatField(min_value=0.0), min_length=2, max_length=2
    )
    history_cp = point_list(HISTORY_DEGREE + 1)
    future_cp = point_list(FUTURE_DEGREE + 1, required=False)

    def validate_tw(self, value: list) -> list:
        """Validates the appearance window of the agent"""

        first, last = value
        if not 0.0 <= first < last <= HISTORY_DURATION:
            raise ValidationError(
                f'must satisfy 0 <= t_first < t_last <= {HISTORY_DURATION:g}'
            )

        return value

    def validate_footprint(self, value: list) -> list:
        """Validates that length and width are positive"""

        if min(value) <= 0:
            raise ValidationError('length and width must be positive')

        return value


class MapElementSerializer(Serializer):
    """Serializer for one map element of a scene document"""

    id = CharField()
    category = ChoiceField(choices=[c.value for c in MapCategory])
    cp = point_list(MAP_DEGREE + 1)


class SceneSerializer(Serializer):
    """Serializer validating a scene document and building the Scene"""

    scene_id = CharField()
    horizon_s = FloatField(default=FUTURE_DURATION)
    eval_horizon_s = FloatField(default=FUTURE_DURATION)
    agents = AgentSerializer(many=True, allow_empty=False)
    map = MapElementSerializer(many=True, required=False, default=list)
    flags = ListField(child=CharField(), required=False, default=list)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        """Validates horizons and agent id uniqueness"""

        if not 0 < attrs['eval_horizon_s'] <= attrs['horizon_s']:
            raise ValidationError(
                {'eval_horizon_s': 'must satisfy 0 < value <= horizon_s'}
            )
        ids = [agent['id'] for agent in attrs['agents']]
        if len(set(ids)) != len(ids):
            raise ValidationError({'agents': 'agent ids must be unique'})

        return attrs

    def create(self, validated_data: Dict[str, Any]) -> Scene:
        """Builds the Scene described by the validated document"""

        agents = [
            Agent(
                id=data['id'],
                category=data['category'],
                history=PolyCurve(data['history_cp'], HISTORY_DURATION),
                time_window=tuple(data['tw']),
                footprint=tuple(data['footprint']),
                future=(
                    PolyCurve(data['future_cp'], FUTURE_DURATION)
                    if data.get('future_cp') is not None
                    else None
                ),
            )
            for data in validated_data['agents']
        ]
        elements = [
            MapElement(data['id'], data['category'], PolyCurve(data['cp']))
            for data in validated_data['map']
        ]

        return Scene(
            scene_id=validated_data['scene_id'],
            agents=agents,
            map=elements,
            horizon_s=validated_data['horizon_s'],
            eval_horizon_s=validated_data['eval_horizon_s'],
            flags=validated_data['flags'],
        )
