from django.apps import AppConfig


class AumentosConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.aumentos'
    verbose_name = 'Aumentación egocéntrica'
