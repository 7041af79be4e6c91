from django.apps import AppConfig
from django.conf import settings


class TensoresConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.tensores'
    verbose_name = 'Kernel de tensores'

    def ready(self):
        from .tensor import establecer_precision
        establecer_precision(getattr(settings, 'HERO_VQL_PRECISION', 'float32'))
