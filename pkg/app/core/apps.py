import logging

from django.apps import AppConfig
from django.conf import settings

logger = logging.getLogger(__name__)


class CoreConfig(AppConfig):
    name = 'core'
    default_auto_field = 'django.db.models.AutoField'

    def ready(self) -> None:
        """Caps the torch worker threads at EPD_THREADS"""

        threads = getattr(settings, 'EPD_THREADS', 0)
        if threads:
            import torch

            torch.set_num_threads(threads)
            logger.debug('torch limited to %d threads', threads)
