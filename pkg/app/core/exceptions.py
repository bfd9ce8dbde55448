class EPDError(Exception):
    """Base class for all errors raised by the core package"""


class ConfigError(EPDError, ValueError):
    """Invalid configuration value or bound"""


class DomainError(EPDError, ValueError):
    """Argument outside of the operation's domain"""


class ShapeError(EPDError, ValueError):
    """Array or tensor of unexpected shape"""


class FitError(EPDError):
    """Curve fitting problem without a unique solution"""


class SceneDataError(EPDError):
    """Scene document violating the scene schema"""

    def __init__(self, message: str, line: int = None, field: str = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f'line {line}')
        if field:
            location.append(f'field \'{field}\'')
        if location:
            message = f'{", ".join(location)}: {message}'
        super().__init__(message)


class ModelError(EPDError):
    """Model parameters not matching the requested computation"""


class CheckpointError(ModelError):
    """Unreadable or incompatible checkpoint file"""


class TrainingError(EPDError):
    """Training aborted"""

    def __init__(self, message: str, epoch: int, batch: int, scene_ids=()):
        self.epoch = epoch
        self.batch = batch
        self.scene_ids = list(scene_ids)
        super().__init__(
            f'{message} (epoch {epoch}, batch {batch}, '
            f'scenes {", ".join(self.scene_ids)})'
        )


class MetricError(EPDError):
    """Metric inputs that cannot be scored"""
