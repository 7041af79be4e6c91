from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.entrenamiento import inferir_dataset
from apps.consultas.sintetico import DatasetSintetico
from apps.inferencia.intercambio import guardar_tracks
from apps.modelo.checkpoints import cargar_checkpoint


class Command(ComandoHeroVQL):
    help = 'Predice el track de respuesta de cada consulta del dataset'
    usa_config = False

    def agregar_argumentos(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--ckpt', required=True)
        parser.add_argument('--out', required=True, help='JSON de predicciones')
        parser.add_argument('--sin-progreso', action='store_true')
        parser.add_argument('--trabajadores', type=int, default=1, help='Hilos de inferencia (la salida no depende de este valor)')

    def ejecutar(self, **options):
        modelo, configuracion = cargar_checkpoint(options['ckpt'])
        cfg = self.config_de_checkpoint(configuracion, options)
        dataset = DatasetSintetico(options['data'])
        resultados = inferir_dataset(modelo, cfg, dataset, progreso=not options['sin_progreso'],
                                     trabajadores=options['trabajadores'])
        guardar_tracks(options['out'], resultados)
        vacios = sum(track is None for _, _, track in resultados)
        self.escribir(self.style.SUCCESS(
            f"{len(resultados)} consultas en {options['out']} ({vacios} sin respuesta)"
        ))
