from django.core.management.base import CommandError

from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.verificacion import suite_gradientes


class Command(ComandoHeroVQL):
    help = 'Corre la suite de gradientes por diferencias finitas; sale con error si algún chequeo falla'
    usa_config = False
    usa_overrides = False

    def agregar_argumentos(self, parser):
        parser.add_argument('--seed', type=int, default=0)

    def ejecutar(self, **options):
        resultados = suite_gradientes(options['seed'])
        for r in resultados:
            estado = self.style.SUCCESS('ok') if r.aprobado else self.style.ERROR('FALLA')
            self.escribir(f'{r.nombre:<32} {r.error_relativo:.2e} < {r.tolerancia:.0e}  {estado}')
        fallidos = [r.nombre for r in resultados if not r.aprobado]
        if fallidos:
            raise CommandError(f'{len(fallidos)} chequeos de gradiente fallaron: {", ".join(fallidos)}')
        self.escribir(self.style.SUCCESS(f'{len(resultados)} chequeos aprobados'))
