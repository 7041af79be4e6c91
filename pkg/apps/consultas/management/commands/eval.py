import json

from apps.consultas.comandos import ComandoHeroVQL
from apps.inferencia.intercambio import cargar_tracks
from apps.inferencia.metricas import evaluate


class Command(ComandoHeroVQL):
    help = 'Calcula tAP25, stAP25, recovery y success (en porcentaje)'
    usa_config = False
    usa_overrides = False

    def agregar_argumentos(self, parser):
        parser.add_argument('--pred', required=True)
        parser.add_argument('--gt', required=True)
        parser.add_argument('--json', action='store_true', help='Salida legible por máquina')

    def ejecutar(self, **options):
        resultado = evaluate(cargar_tracks(options['pred']), cargar_tracks(options['gt']))
        porcentajes = resultado.como_porcentajes()
        if options['json']:
            self.escribir(json.dumps(porcentajes, sort_keys=True))
            return
        for nombre, valor in porcentajes.items():
            self.escribir(f'{nombre:>9}: {valor:.1f}')
