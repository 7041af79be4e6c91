from django.apps import AppConfig


class ConsultasConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.consultas'
    verbose_name = 'Configuración, datos y comandos'
