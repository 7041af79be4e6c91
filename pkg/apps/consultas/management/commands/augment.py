from pathlib import Path
import json

import numpy as np

from apps.consultas.comandos import ComandoHeroVQL
from apps.consultas.entrenamiento import armar_par, proveedor_para
from apps.consultas.sintetico import DatasetSintetico
from apps.inferencia.pipeline import slice_clips


def caja_o_nada(caja):
    return caja.como_lista() if caja is not None else None


def describir(par):
    return {
        'clip_id': par.original.clip_id,
        'video_id': par.original.video_id,
        'query_used': {'frame': par.query_used.frame, 'box': par.query_used.box.como_lista()},
        'query_replaced': par.query_used != par.original.query_ref,
        'permutation': [int(p) for p in par.permutation],
        'original_frames': list(par.original.frames),
        'reordered_frames': list(par.reordered.frames),
        'reordered_boxes': [caja_o_nada(c) for c in par.reordered.gt_boxes],
    }


class Command(ComandoHeroVQL):
    help = 'Materializa los pares EgoAug (QueryAug + MotionAug) de los clips de entrenamiento'

    def agregar_argumentos(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--out', required=True, help='Directorio de salida (pairs.json)')
        parser.add_argument('--seed', type=int, default=None, help='Por defecto la semilla de la configuración')

    def ejecutar(self, **options):
        cfg = self.config(options)
        if options['seed'] is not None:
            cfg = cfg.con_cambios(seed=options['seed'])
        dataset = DatasetSintetico(options['data'])
        rng = np.random.default_rng(cfg.seed)
        similitud = dataset.similitud(proveedor_para(cfg, dataset))
        pares = [
            describir(armar_par(clip, cfg, rng, similitud))
            for video in sorted(dataset.videos, key=lambda v: v.query_id)
            for clip in slice_clips(video, cfg.clip_len, entrenamiento=True)
        ]
        destino = Path(options['out'])
        destino.mkdir(parents=True, exist_ok=True)
        with open(destino / 'pairs.json', 'w', encoding='utf-8') as f:
            json.dump({'seed': cfg.seed, 'pairs': pares}, f, indent=1)
        self.escribir(self.style.SUCCESS(f'{len(pares)} pares en {destino / "pairs.json"}'))
