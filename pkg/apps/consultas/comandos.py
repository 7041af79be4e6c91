# apps/consultas/comandos.py
"""
Base común de los comandos de gestión: opciones de configuración y
conversión de errores de dominio en CommandError (una línea, salida ≠ 0).
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from hero_vql.excepciones import HeroVQLError
from .configuracion import cargar_config, construir, parsear_overrides

logger = logging.getLogger(__name__)


class ComandoHeroVQL(BaseCommand):
    usa_config = True
    usa_overrides = True

    def add_arguments(self, parser):
        if self.usa_config:
            parser.add_argument('--config', default=None, help='Archivo clave=valor con la configuración')
        if self.usa_overrides:
            parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='CLAVE=VALOR',
                                help='Sobrescribe una clave de la configuración (repetible)')
        self.agregar_argumentos(parser)

    def agregar_argumentos(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            return self.ejecutar(**options)
        except HeroVQLError as e:
            logger.error(f'{self.__module__.rsplit(".", 1)[-1]}: {e}')
            raise CommandError(str(e)) from e
        except OSError as e:
            raise CommandError(f'{e.filename or ""}: {e.strerror or e}') from e

    def ejecutar(self, **options):
        raise NotImplementedError

    # ---------- utilidades ----------
    def config(self, options):
        return cargar_config(options.get('config'), options.get('overrides'))

    def config_de_checkpoint(self, configuracion, options):
        """Configuración guardada con el checkpoint más los --set de la invocación"""
        valores = dict(configuracion)
        valores.update(parsear_overrides(options.get('overrides')))
        return construir(valores)

    def escribir(self, texto):
        self.stdout.write(texto)
