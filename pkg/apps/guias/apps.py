from django.apps import AppConfig


class GuiasConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.guias'
    verbose_name = 'Guía de atención top-down'
