# apps/inferencia/pipeline.py
"""
Del video a la respuesta: cortes en clips de longitud fija, suavizado de
puntajes y extracción del último segmento temporal.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import ndimage

from apps.aumentos.muestras import FRAME_RELLENO, ClipSample
from apps.guias.guia import build_guides
from hero_vql.excepciones import ConfiguracionError, DimensionError

logger = logging.getLogger(__name__)


class PipelineConstants:
    CLIP_LEN = 32
    MEDIAN_K = 5
    PEAK_RATIO = 0.7


# ==================== TIPOS ====================
@dataclass(frozen=True)
class ResponseTrack:
    """
    Segmento temporal [inicio, fin] (inclusivo, en frames del video) con una
    caja por frame y el pico π_h de los puntajes suavizados.
    """
    segment: tuple
    boxes: tuple
    peak_score: float = 1.0

    def __post_init__(self):
        inicio, fin = (int(v) for v in self.segment)
        if inicio > fin:
            raise DimensionError(f'Segmento invertido {self.segment}')
        if len(self.boxes) != fin - inicio + 1:
            raise DimensionError(f'Segmento {self.segment} con {len(self.boxes)} cajas')
        object.__setattr__(self, 'segment', (inicio, fin))
        object.__setattr__(self, 'boxes', tuple(self.boxes))

    @property
    def frames(self):
        return range(self.segment[0], self.segment[1] + 1)

    def cajas_por_frame(self):
        return dict(zip(self.frames, self.boxes))


@dataclass(frozen=True)
class VideoAnnotation:
    """
    Anotación normalizada de un video para una consulta.

    cajas: dict frame → BBox normalizada en los frames donde aparece el objeto
    object_instances: recortes alternativos del mismo objeto (QueryAug)
    """
    query_id: str
    video_id: str
    num_frames: int
    cajas: dict
    query_ref: object
    object_instances: tuple = ()
    alto: int = 0
    ancho: int = 0
    metadatos: dict = field(default_factory=dict)

    @property
    def segmento(self):
        """Último tramo de frames consecutivos con el objeto, o None"""
        if not self.cajas:
            return None
        frames = sorted(self.cajas)
        fin = inicio = frames[-1]
        while inicio - 1 in self.cajas:
            inicio -= 1
        return inicio, fin

    def track_gt(self):
        inicio, fin = self.segmento
        return ResponseTrack((inicio, fin), tuple(self.cajas[t] for t in range(inicio, fin + 1)), 1.0)


# ==================== CORTES ====================
def slice_clips(video, clip_len=PipelineConstants.CLIP_LEN, entrenamiento=False):
    """
    Ventanas consecutivas sin solapamiento; la última se completa con frames
    de relleno (FRAME_RELLENO, inválidos). En entrenamiento solo salen los
    clips con al menos un frame GT.
    """
    if clip_len < 1:
        raise ConfiguracionError(f'clip_len debe ser ≥ 1, llegó {clip_len}')
    clips = []
    for numero, inicio in enumerate(range(0, video.num_frames, clip_len)):
        reales = list(range(inicio, min(inicio + clip_len, video.num_frames)))
        frames = reales + [FRAME_RELLENO] * (clip_len - len(reales))
        cajas = tuple(video.cajas.get(t) if t != FRAME_RELLENO else None for t in frames)
        clip = ClipSample(
            clip_id=f'{video.query_id}_c{numero:03d}',
            video_id=video.video_id,
            frames=tuple(frames),
            gt_boxes=cajas,
            occurrence=tuple(c is not None for c in cajas),
            query_ref=video.query_ref,
            object_instances=tuple(video.object_instances),
        )
        if entrenamiento and not clip.tiene_ocurrencia:
            continue
        clips.append(clip)
    logger.debug(f'{video.query_id}: {len(clips)} clips de {clip_len} frames')
    return clips


# ==================== POSTPROCESO ====================
def median_filter(scores, k=PipelineConstants.MEDIAN_K):
    """Mediana centrada de ventana k con replicación de bordes"""
    if k < 1 or k % 2 == 0:
        raise ConfiguracionError(f'El kernel de la mediana debe ser impar y positivo, llegó {k}')
    valores = np.asarray(scores, dtype=np.float64)
    if valores.size == 0:
        return valores
    return ndimage.median_filter(valores, size=k, mode='nearest')


def intervalos(marcados):
    """Tramos [inicio, fin] de posiciones consecutivas marcadas"""
    tramos = []
    for i, marcado in enumerate(marcados):
        if not marcado:
            continue
        if tramos and tramos[-1][1] == i - 1:
            tramos[-1][1] = i
        else:
            tramos.append([i, i])
    return [tuple(t) for t in tramos]


def extract_last_segment(scores, boxes, peak_ratio=PipelineConstants.PEAK_RATIO, frames=None):
    """
    Umbral relativo al pico global (score ≥ peak_ratio·π_h) y último tramo.

    boxes: una BBox por posición; frames: frame del video de cada posición
    (por defecto la posición misma). Retorna None si no hay pico positivo.
    """
    valores = np.asarray(scores, dtype=np.float64)
    if valores.size == 0:
        return None
    if len(boxes) != valores.size:
        raise DimensionError(f'{valores.size} puntajes y {len(boxes)} cajas')
    pico = float(valores.max())
    if pico <= 0.0:
        logger.warning('Secuencia de puntajes sin pico positivo: track vacío')
        return None
    inicio, fin = intervalos(valores >= peak_ratio * pico)[-1]
    frames = list(range(valores.size)) if frames is None else list(frames)
    cajas = tuple(boxes[i].con_frame(frames[i]) for i in range(inicio, fin + 1))
    return ResponseTrack((frames[inicio], frames[fin]), cajas, pico)


# ==================== INFERENCIA ====================
def inferir_video(modelo, video, features_de_clip, cfg):
    """
    Cortes → forward por clip → concatenación de frames válidos → mediana →
    último segmento.

    features_de_clip(clip) retorna las EncoderFeatures del clip; cfg aporta
    clip_len, median_k, peak_ratio y los interruptores de las guías.
    """
    puntajes, cajas, frames = [], [], []
    for clip in slice_clips(video, cfg.clip_len, entrenamiento=False):
        feats = features_de_clip(clip)
        preds = modelo(feats, build_guides(feats, cfg))
        validos = clip.mascara_valida()
        puntajes.extend(preds.scores[validos])
        cajas.extend(caja for caja, valido in zip(preds.boxes, validos) if valido)
        frames.extend(f for f in clip.frames if f != FRAME_RELLENO)
    if not puntajes:
        logger.warning(f'{video.query_id}: video sin frames')
        return None
    suavizados = median_filter(puntajes, cfg.median_k)
    return extract_last_segment(suavizados, cajas, cfg.peak_ratio, frames)
