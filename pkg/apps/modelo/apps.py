from django.apps import AppConfig


class ModeloConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.modelo'
    verbose_name = 'Red de localización'
