from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.entrenamiento import entrenar, ruta_csv_de
from apps.consultas.sintetico import DatasetSintetico


class Command(ComandoHeroVQL):
    help = 'Entrena el localizador y registra los componentes de la pérdida por época en CSV'

    def agregar_argumentos(self, parser):
        parser.add_argument('--data', required=True, help='Directorio generado por gen')
        parser.add_argument('--out', required=True, help='Ruta del checkpoint HVQF')
        parser.add_argument('--sin-progreso', action='store_true', help='Oculta la barra de progreso')

    def ejecutar(self, **options):
        cfg = self.config(options)
        dataset = DatasetSintetico(options['data'])
        _, historial = entrenar(cfg, dataset, options['out'], progreso=not options['sin_progreso'])
        if historial:
            inicial, final = historial[0]['total'], historial[-1]['total']
            self.escribir(f'Pérdida total: {inicial:.5f} → {final:.5f} en {len(historial)} épocas')
        self.escribir(self.style.SUCCESS(
            f"Checkpoint en {options['out']}, pérdidas en {ruta_csv_de(options['out'])}"
        ))
