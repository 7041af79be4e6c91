from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.sintetico import SinteticoConstants, escribir_dataset


class Command(ComandoHeroVQL):
    help = 'Genera el dataset sintético (escenas, anotaciones y gt.json)'
    usa_config = False
    usa_overrides = False

    def agregar_argumentos(self, parser):
        parser.add_argument('--out', required=True, help='Directorio de salida')
        parser.add_argument('--videos', type=int, default=200, help='Cantidad de videos')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--prefijo', default='v', help='Prefijo de los video_id')

    def ejecutar(self, **options):
        destino = escribir_dataset(options['out'], options['videos'], options['seed'], options['prefijo'])
        self.escribir(self.style.SUCCESS(
            f"{options['videos']} videos en {destino} "
            f'({SinteticoConstants.ESCENAS}, {SinteticoConstants.ANOTACIONES}, {SinteticoConstants.GT})'
        ))
