"""
Experiment configuration documents.

A document is a JSON object with the optional sections fit, datagen,
diffusion, model, train and metric. Each section maps onto the frozen
dataclass of the module it configures.
"""
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from core.datagen import DatagenConfig
from core.diffusion import DiffusionConfig
from core.exceptions import ConfigError
from core.metrics import MetricConfig
from core.net.model import ModelConfig
from core.net.train import TrainConfig
from core.poly import FitConfig

logger = logging.getLogger(__name__)

SECTIONS = {
    'fit': FitConfig,
    'datagen': DatagenConfig,
    'diffusion': DiffusionConfig,
    'model': ModelConfig,
    'train': TrainConfig,
    'metric': MetricConfig,
}


def _build(name: str, values: Any):
    if not isinstance(values, dict):
        raise ConfigError(f'section {name} must be a JSON object')
    cls = SECTIONS[name]
    known = {item.name for item in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(
            f'{name}: unknown keys {", ".join(sorted(unknown))}'
        )
    try:
        return cls(**values)
    except ConfigError as error:
        raise ConfigError(f'{name}: {error}') from error
    except (TypeError, ValueError) as error:
        raise ConfigError(f'{name}: invalid value ({error})') from error


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one command invocation"""

    subcommand: str = ''
    seed: Optional[int] = None
    paths: Dict[str, str] = field(default_factory=dict)
    fit: FitConfig = FitConfig()
    datagen: DatagenConfig = DatagenConfig()
    diffusion: DiffusionConfig = DiffusionConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    metric: MetricConfig = MetricConfig()

    @classmethod
    def from_document(
        cls, document: Dict[str, Any], subcommand: str = ''
    ) -> 'RunConfig':
        """Builds the sections of a parsed configuration document"""

        if not isinstance(document, dict):
            raise ConfigError('configuration must be a JSON object')
        unknown = set(document) - set(SECTIONS)
        if unknown:
            raise ConfigError(
                f'unknown sections {", ".join(sorted(unknown))}'
            )
        sections = {
            name: _build(name, document.get(name, {})) for name in SECTIONS
        }
        # the top-level fit section also drives the datagen future fits
        if 'fit' in document and 'fit' not in document.get('datagen', {}):
            sections['datagen'] = replace(
                sections['datagen'], fit=sections['fit']
            )
        if sections['model'].steps != sections['diffusion'].steps:
            raise ConfigError(
                f'model.steps ({sections["model"].steps}) must equal '
                f'diffusion.steps ({sections["diffusion"].steps})'
            )

        return cls(subcommand=subcommand, **sections)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        paths: Optional[Dict[str, Any]] = None,
        **sections: Dict[str, Any],
    ) -> 'RunConfig':
        """
        Returns a copy with the seed, paths and individual section values
        replaced. A seed is applied to every seeded section.
        """

        document = self.as_document()
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f'unknown section {name}')
            document[name].update(
                {k: v for k, v in values.items() if v is not None}
            )
        if seed is not None:
            if int(seed) < 0:
                raise ConfigError('seed must be non-negative')
            document['datagen']['seed'] = int(seed)
            document['train']['seed'] = int(seed)
        resolved = RunConfig.from_document(document, self.subcommand)
        merged = dict(self.paths)
        merged.update(
            {k: str(v) for k, v in (paths or {}).items() if v is not None}
        )

        return replace(
            resolved,
            seed=self.seed if seed is None else int(seed),
            paths=merged,
        )

    def as_document(self) -> Dict[str, Any]:
        """The six sections as plain JSON values"""

        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def as_dict(self) -> Dict[str, Any]:
        """Everything needed to reproduce the invocation"""

        return {
            'subcommand': self.subcommand,
            'seed': self.seed,
            'paths': dict(self.paths),
            **self.as_document(),
        }

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def load_config(
    path: Optional[Union[str, Path]], subcommand: str = ''
) -> RunConfig:
    """Reads a configuration document, defaults when path is None"""

    if path is None:
        return RunConfig(subcommand=subcommand)
    try:
        with open(path, encoding='utf-8') as handle:
            document = json.load(handle)
    except OSError as error:
        raise ConfigError(f'cannot read config {path}: {error}') from error
    except json.JSONDecodeError as error:
        raise ConfigError(f'config {path} is not valid JSON: {error}')
    logger.debug('loaded config %s', path)

    return RunConfig.from_document(document, subcommand)
