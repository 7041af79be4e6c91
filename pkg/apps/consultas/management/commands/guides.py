from apps.aumentos.muestras import FRAME_RELLENO
from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.entrenamiento import proveedor_para
from apps.consultas.sintetico import DatasetSintetico
from apps.guias.guia import build_guides
from apps.guias.mapas import guardar_mapas
from apps.inferencia.pipeline import slice_clips
from apps.modelo.checkpoints import cargar_checkpoint
from hero_vql.excepciones import AnotacionError


class Command(ComandoHeroVQL):
    help = 'Vuelca α_high y α_mid de un clip como PGM y CSV'
    usa_config = False

    def agregar_argumentos(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--ckpt', required=True, help='Checkpoint cuya configuración define las guías')
        parser.add_argument('--clip', required=True, help='clip_id, por ejemplo v0000_q0_c001')
        parser.add_argument('--out', required=True)

    def ejecutar(self, **options):
        _, configuracion = cargar_checkpoint(options['ckpt'])
        cfg = self.config_de_checkpoint(configuracion, options)
        dataset = DatasetSintetico(options['data'])
        clip = next((c for v in dataset.videos for c in slice_clips(v, cfg.clip_len)
                     if c.clip_id == options['clip']), None)
        if clip is None:
            raise AnotacionError(f"Clip desconocido: {options['clip']}")
        proveedor = proveedor_para(cfg, dataset)
        feats = dataset.features_de_clip(clip, proveedor)
        guias = build_guides(feats, cfg)
        etiquetas = [f if f != FRAME_RELLENO else f'relleno{t}' for t, f in enumerate(clip.frames)]
        escritos = guardar_mapas(guias, clip.clip_id, feats.grid, feats.grid_consulta, options['out'], etiquetas)
        self.escribir(self.style.SUCCESS(f"{len(escritos)} archivos en {options['out']}"))
