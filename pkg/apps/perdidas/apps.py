from django.apps import AppConfig


class PerdidasConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.perdidas'
    verbose_name = 'Funciones de pérdida'
