# apps/consultas/entrenamiento.py
"""
Entrenamiento, inferencia y ablación sobre un DatasetSintetico.

Un paso = un lote de clips con acumulación de gradientes; por época se
registra el promedio de cada componente de la pérdida en CSV.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
import csv
import logging
import math

import numpy as np
from tqdm import tqdm

from apps.aumentos.egoaug import EstrategiasConsulta, EstrategiasMovimiento, make_training_pair, motion_aug
from apps.guias.guia import build_guides
from apps.inferencia.metricas import evaluate
from apps.inferencia.pipeline import inferir_video, slice_clips
from apps.modelo.checkpoints import guardar_checkpoint
from apps.modelo.localizador import DecoderConfig, Localizador
from apps.modelo.proveedor import ProveedorSintetico
from apps.perdidas.perdidas import LossWeights, evaluar_par
from apps.tensores.optim import AdamW, ProgramaLineal
from hero_vql.excepciones import ConfiguracionError, HeroVQLError
from .sintetico import CacheFeatures

logger = logging.getLogger(__name__)

COLUMNAS_CSV = ('epoch', 'L_task', "L_task'", 'L_CT', 'L_TAG', 'total')


def proveedor_para(cfg, dataset):
    alto, ancho = dataset.forma
    return ProveedorSintetico(d_model=cfg.d_model, patch_size=cfg.patch_size, query_size=cfg.query_size,
                              alto=alto, ancho=ancho, seed=cfg.seed)


def armar_par(clip, cfg, rng, similitud):
    """EgoAug completo con EgoACT; sin él, el clip tal cual (permutación identidad)"""
    if not cfg.use_egoact:
        return motion_aug(clip, EstrategiasMovimiento.NINGUNA)
    necesita_similitud = cfg.queryaug_strategy != EstrategiasConsulta.ALEATORIA
    return make_training_pair(clip, cfg.p_queryaug, rng, cfg.queryaug_strategy, cfg.motionaug_strategy,
                              similitud if necesita_similitud else None)


class Entrenador:
    """
    Ciclo de entrenamiento de un Localizador.

    Los clips de entrenamiento son los que tienen al menos un frame GT.
    """

    def __init__(self, cfg, dataset, progreso=True):
        self.cfg = cfg
        self.dataset = dataset
        self.progreso = progreso
        self.proveedor = proveedor_para(cfg, dataset)
        self.modelo = Localizador(DecoderConfig.desde_config(cfg), seed=cfg.seed)
        self.pesos = LossWeights.desde_config(cfg)
        self.rng = np.random.default_rng(cfg.seed)
        self.clips = [c for v in dataset.videos for c in slice_clips(v, cfg.clip_len, entrenamiento=True)]
        if not self.clips:
            raise HeroVQLError('El dataset no tiene clips con ocurrencias para entrenar')
        self.pasos_por_epoca = math.ceil(len(self.clips) / cfg.batch_size)
        total = max(cfg.epochs * self.pasos_por_epoca, 1)
        self.optimizador = AdamW(
            self.modelo.parametros(), lr=cfg.lr, weight_decay=cfg.weight_decay,
            programa=ProgramaLineal(cfg.lr, min(cfg.warmup_iters, total), total),
        )
        self.cache = CacheFeatures(dataset, self.proveedor)
        self.similitud = self.cache.similitud
        logger.info(f'{len(self.clips)} clips de entrenamiento, {self.pasos_por_epoca} pasos por época')

    def paso(self, lote):
        """Acumula el gradiente de cada clip del lote (escalado 1/|lote|) y actualiza; retorna los componentes medios"""
        self.optimizador.zero_grad()
        suma = dict.fromkeys(COLUMNAS_CSV[1:], 0.0)
        for clip in lote:
            par = armar_par(clip, self.cfg, self.rng, self.similitud)
            feats = self.cache.features(par.original, par.query_used)
            guias = build_guides(feats, self.cfg)
            total, componentes = evaluar_par(self.modelo, feats, guias, par, self.pesos,
                                             usar_egoact=self.cfg.use_egoact, usar_tag=self.cfg.mu > 0)
            (total * (1.0 / len(lote))).backward()
            for clave in suma:
                suma[clave] += componentes[clave]
        self.optimizador.step()
        return {clave: valor / len(lote) for clave, valor in suma.items()}

    def epoca(self, numero):
        orden = self.rng.permutation(len(self.clips))
        lotes = [orden[i:i + self.cfg.batch_size] for i in range(0, len(orden), self.cfg.batch_size)]
        acumulado = dict.fromkeys(COLUMNAS_CSV[1:], 0.0)
        barra = tqdm(lotes, desc=f'Época {numero}', disable=not self.progreso, leave=False)
        for lote in barra:
            medios = self.paso([self.clips[i] for i in lote])
            for clave in acumulado:
                acumulado[clave] += medios[clave] * len(lote)
            barra.set_postfix(total=f"{medios['total']:.4f}", lr=f'{self.optimizador.lr_actual():.2e}')
        fila = {'epoch': numero}
        fila.update({clave: valor / len(orden) for clave, valor in acumulado.items()})
        if not all(math.isfinite(fila[c]) for c in COLUMNAS_CSV[1:]):
            raise HeroVQLError(f'Pérdida no finita en la época {numero}: {fila}')
        logger.info(f"Época {numero}: total={fila['total']:.5f} L_task={fila['L_task']:.5f} "
                    f"L_CT={fila['L_CT']:.5f} L_TAG={fila['L_TAG']:.5f}")
        return fila

    def entrenar(self, ruta_csv=None):
        """Corre cfg.epochs épocas; retorna la lista de filas del CSV"""
        historial = []
        escritor = None
        archivo = None
        try:
            if ruta_csv is not None:
                Path(ruta_csv).parent.mkdir(parents=True, exist_ok=True)
                archivo = open(ruta_csv, 'w', newline='', encoding='utf-8')
                escritor = csv.DictWriter(archivo, fieldnames=COLUMNAS_CSV)
                escritor.writeheader()
            for numero in range(1, self.cfg.epochs + 1):
                fila = self.epoca(numero)
                historial.append(fila)
                if escritor is not None:
                    escritor.writerow({k: (f'{v:.8f}' if isinstance(v, float) else v) for k, v in fila.items()})
                    archivo.flush()
        finally:
            if archivo is not None:
                archivo.close()
        return historial

    def guardar(self, ruta):
        guardar_checkpoint(self.modelo, ruta, self.cfg.model_dump())


def ruta_csv_de(ruta_ckpt):
    ruta = Path(ruta_ckpt)
    return ruta.with_name(ruta.stem + '_perdidas.csv')


def entrenar(cfg, dataset, ruta_ckpt, progreso=True):
    """Entrena, guarda checkpoint + CSV de pérdidas; retorna (modelo, historial)"""
    entrenador = Entrenador(cfg, dataset, progreso=progreso)
    historial = entrenador.entrenar(ruta_csv_de(ruta_ckpt))
    entrenador.guardar(ruta_ckpt)
    return entrenador.modelo, historial


# ==================== INFERENCIA SOBRE EL DATASET ====================
def inferir_dataset(modelo, cfg, dataset, progreso=True, trabajadores=1):
    """
    Lista ordenada de (query_id, video_id, ResponseTrack o None). Con
    trabajadores > 1 los videos se reparten en hilos; el orden de salida no cambia.
    """
    proveedor = proveedor_para(cfg, dataset)
    videos = sorted(dataset.videos, key=lambda v: v.query_id)

    def inferir(video):
        track = inferir_video(modelo, video, lambda clip: dataset.features_de_clip(clip, proveedor), cfg)
        return video.query_id, video.video_id, track

    with ThreadPoolExecutor(max_workers=max(1, min(trabajadores, len(videos)))) as executor:
        return list(tqdm(executor.map(inferir, videos), total=len(videos), desc='Inferencia', disable=not progreso))


def evaluar_dataset(modelo, cfg, dataset, progreso=True):
    preds = {q: track for q, _, track in inferir_dataset(modelo, cfg, dataset, progreso)}
    gts = {v.query_id: v.track_gt() for v in dataset.videos}
    return evaluate(preds, gts)


# ==================== ABLACIÓN ====================
VARIANTES_ABLACION = {
    'completo': {},
    'base': {'use_high_guide': False, 'use_mid_guide': False, 'mu': 0.0,
             'use_egoact': False, 'lambda_ct': 0.0},
}


def config_de_variante(cfg, nombre, semilla=0):
    """Config de una variante de la ablación con la semilla desplazada"""
    if nombre not in VARIANTES_ABLACION:
        raise ConfiguracionError(f'Variante de ablación desconocida: {nombre!r}')
    return cfg.con_cambios(seed=cfg.seed + semilla, **VARIANTES_ABLACION[nombre])


def ablacion(cfg, entrenamiento, validacion, semillas, progreso=False):
    """
    Modelo completo contra la línea base (sin TAG ni EgoACT) por semilla;
    retorna {'completo': [...], 'base': [...]} con el Success de validación.
    """
    if semillas < 1:
        raise ConfiguracionError(f'La ablación necesita al menos una semilla, llegó {semillas}')
    resultados = {nombre: [] for nombre in VARIANTES_ABLACION}
    for semilla in range(semillas):
        for nombre in VARIANTES_ABLACION:
            variante = config_de_variante(cfg, nombre, semilla)
            entrenador = Entrenador(variante, entrenamiento, progreso=progreso)
            entrenador.entrenar()
            resultado = evaluar_dataset(entrenador.modelo, variante, validacion, progreso=progreso)
            resultados[nombre].append(resultado.success_pct)
            logger.info(f'Ablación semilla {semilla} [{nombre}]: success={100 * resultado.success_pct:.2f}')
    return resultados
