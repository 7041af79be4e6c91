from django.apps import AppConfig


class InferenciaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.inferencia'
    verbose_name = 'Inferencia y evaluación'
