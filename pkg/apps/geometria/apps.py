from django.apps import AppConfig


class GeometriaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.geometria'
    verbose_name = 'Geometría de cajas'
