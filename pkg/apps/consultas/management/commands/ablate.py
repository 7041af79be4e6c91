import json

import numpy as np

from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.entrenamiento import ablacion
from apps.consultas.sintetico import DatasetSintetico


class Command(ComandoHeroVQL):
    help = 'Modelo completo contra la línea base sin TAG ni EgoACT: Success medio de validación por variante'

    def agregar_argumentos(self, parser):
        parser.add_argument('--train', required=True)
        parser.add_argument('--val', required=True)
        parser.add_argument('--seeds', type=int, default=3)
        parser.add_argument('--json', action='store_true')

    def ejecutar(self, **options):
        cfg = self.config(options)
        resultados = ablacion(cfg, DatasetSintetico(options['train']), DatasetSintetico(options['val']),
                              options['seeds'])
        medias = {nombre: round(100.0 * float(np.mean(valores)), 4) for nombre, valores in resultados.items()}
        if options['json']:
            self.escribir(json.dumps({'success_medio': medias, 'por_semilla': resultados}, sort_keys=True))
            return
        for nombre, media in medias.items():
            self.escribir(f'{nombre:>9}: success medio {media:.1f} sobre {options["seeds"]} semillas')
