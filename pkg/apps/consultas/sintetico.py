# apps/consultas/sintetico.py
"""
Dataset sintético a escala de escritorio.

Cada video es una escena de baja resolución con un rectángulo objetivo
(color y tamaño propios) que se mueve con velocidad aleatoria por tramos
entre rectángulos distractores. Se insertan episodios de oclusión (el
objetivo no aparece). Todo queda determinado por la semilla.

Archivos:
- scenes.json: guion de cada escena (cajas por frame de cada objeto)
- annotations.json: anotaciones validadas (ver anotaciones.py)
- gt.json: último tramo de cada consulta en el formato de intercambio
"""

from functools import lru_cache
from pathlib import Path
import json
import logging
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, ValidationError

from apps.aumentos.muestras import FRAME_RELLENO
from apps.inferencia.intercambio import guardar_tracks
from apps.inferencia.pipeline import intervalos
from hero_vql.excepciones import AnotacionError, ConfiguracionError
from .anotaciones import (
    ArchivoAnotaciones,
    CajaFrame,
    ConsultaAnotada,
    VideoAnotado,
    cargar_anotaciones,
    guardar_anotaciones,
)

logger = logging.getLogger(__name__)


# ==================== CONSTANTES ====================
class SinteticoConstants:
    ALTO = 48
    ANCHO = 48
    FRAMES_MIN = 48
    FRAMES_MAX = 96
    LADO_MIN = 8
    LADO_MAX = 16
    VELOCIDAD_MAX = 2.0
    TRAMO_MIN = 6
    TRAMO_MAX = 16
    DISTRACTORES_MIN = 2
    DISTRACTORES_MAX = 3
    OCLUSIONES_MIN = 1
    OCLUSIONES_MAX = 3
    OCLUSION_MIN = 4
    OCLUSION_MAX = 12
    RUIDO = 12

    PALETA = (
        (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
        (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    )

    ESCENAS = 'scenes.json'
    ANOTACIONES = 'annotations.json'
    GT = 'gt.json'


# ==================== GUION ====================
class ObjetoEscena(BaseModel):
    model_config = ConfigDict(extra='forbid')

    object_id: str
    color: Tuple[int, int, int]
    cajas: List[Optional[Tuple[int, int, int, int]]]


class Escena(BaseModel):
    """El primer objeto es el objetivo; se dibuja último"""
    model_config = ConfigDict(extra='forbid')

    video_id: str
    alto: int
    ancho: int
    num_frames: int
    fondo: Tuple[int, int, int]
    semilla_ruido: int
    objetos: List[ObjetoEscena]

    @property
    def objetivo(self):
        return self.objetos[0]


class ArchivoEscenas(BaseModel):
    model_config = ConfigDict(extra='forbid')

    escenas: List[Escena]


def trayectoria(rng, n, alto, ancho, h, w):
    """Cajas enteras [y1, x1, y2, x2] con velocidad constante por tramos y rebote en los bordes"""
    y, x = rng.uniform(0, alto - h), rng.uniform(0, ancho - w)
    cajas = []
    restante = 0
    vy = vx = 0.0
    for _ in range(n):
        if restante == 0:
            restante = int(rng.integers(SinteticoConstants.TRAMO_MIN, SinteticoConstants.TRAMO_MAX + 1))
            vy, vx = rng.uniform(-SinteticoConstants.VELOCIDAD_MAX, SinteticoConstants.VELOCIDAD_MAX, size=2)
        restante -= 1
        y, x = y + vy, x + vx
        if not 0 <= y <= alto - h:
            vy = -vy
            y = min(max(y, 0.0), alto - h)
        if not 0 <= x <= ancho - w:
            vx = -vx
            x = min(max(x, 0.0), ancho - w)
        fy, fx = int(round(y)), int(round(x))
        cajas.append((fy, fx, fy + h, fx + w))
    return cajas


def visibilidad(rng, n):
    """Máscara de frames con el objetivo visible; al menos un frame queda visible"""
    visible = np.ones(n, dtype=bool)
    episodios = int(rng.integers(SinteticoConstants.OCLUSIONES_MIN, SinteticoConstants.OCLUSIONES_MAX + 1))
    for _ in range(episodios):
        largo = int(rng.integers(SinteticoConstants.OCLUSION_MIN, SinteticoConstants.OCLUSION_MAX + 1))
        inicio = int(rng.integers(0, max(n - largo, 1)))
        visible[inicio:inicio + largo] = False
    if not visible.any():
        visible[: n // 2] = True
    return visible


def generar_escena(rng, video_id):
    c = SinteticoConstants
    n = int(rng.integers(c.FRAMES_MIN, c.FRAMES_MAX + 1))
    colores = rng.permutation(len(c.PALETA))
    n_distractores = int(rng.integers(c.DISTRACTORES_MIN, c.DISTRACTORES_MAX + 1))

    objetos = []
    for k in range(1 + n_distractores):
        h, w = (int(v) for v in rng.integers(c.LADO_MIN, c.LADO_MAX + 1, size=2))
        cajas = trayectoria(rng, n, c.ALTO, c.ANCHO, h, w)
        if k == 0:
            cajas = [caja if v else None for caja, v in zip(cajas, visibilidad(rng, n))]
        objetos.append(ObjetoEscena(
            object_id=f'{video_id}_obj{k}',
            color=c.PALETA[int(colores[k])],
            cajas=cajas,
        ))
    gris = int(rng.integers(100, 156))
    return Escena(
        video_id=video_id, alto=c.ALTO, ancho=c.ANCHO, num_frames=n,
        fondo=(gris, gris, gris), semilla_ruido=int(rng.integers(2**31)), objetos=objetos,
    )


def anotar_escena(escena):
    """Anotación de la consulta del objetivo: consulta en el primer tramo visible, instancias en el resto"""
    objetivo = escena.objetivo
    visibles = [t for t, caja in enumerate(objetivo.cajas) if caja is not None]
    tramos = intervalos([caja is not None for caja in objetivo.cajas])
    inicio, fin = tramos[0]
    query_frame = (inicio + fin) // 2
    consulta = ConsultaAnotada(
        query_id=f'{escena.video_id}_q0',
        object_id=objetivo.object_id,
        query_frame=query_frame,
        query_box=objetivo.cajas[query_frame],
        segment=tramos[-1],
        frames=[CajaFrame(frame=t, box=objetivo.cajas[t]) for t in visibles],
        instances=[CajaFrame(frame=t, box=objetivo.cajas[t]) for t in visibles if t != query_frame],
    )
    return VideoAnotado(video_id=escena.video_id, num_frames=escena.num_frames,
                        alto=escena.alto, ancho=escena.ancho, queries=[consulta])


def generate_synthetic_dataset(n_videos, seed, prefijo='v'):
    """Retorna (ArchivoAnotaciones, ArchivoEscenas); la semilla determina todo"""
    if n_videos < 1:
        raise ConfiguracionError(f'Se necesita al menos un video, llegó {n_videos}')
    escenas = []
    for i in range(n_videos):
        rng = np.random.default_rng([seed, i])
        escenas.append(generar_escena(rng, f'{prefijo}{i:04d}'))
    anotaciones = ArchivoAnotaciones(videos=[anotar_escena(e) for e in escenas])
    logger.info(f'Dataset sintético: {n_videos} videos (seed={seed})')
    return anotaciones, ArchivoEscenas(escenas=escenas)


def escribir_dataset(destino, n_videos, seed, prefijo='v'):
    destino = Path(destino)
    destino.mkdir(parents=True, exist_ok=True)
    anotaciones, escenas = generate_synthetic_dataset(n_videos, seed, prefijo)
    with open(destino / SinteticoConstants.ESCENAS, 'w', encoding='utf-8') as f:
        json.dump(escenas.model_dump(mode='json'), f, indent=1)
    guardar_anotaciones(destino / SinteticoConstants.ANOTACIONES, anotaciones)
    _, videos = cargar_anotaciones(destino / SinteticoConstants.ANOTACIONES)
    guardar_tracks(destino / SinteticoConstants.GT, [(v.query_id, v.video_id, v.track_gt()) for v in videos])
    return destino


# ==================== RASTERIZACIÓN ====================
def rasterizar(escena):
    """Frames T×H×W×3 en [0, 1]: fondo con ruido fijo, distractores y objetivo encima"""
    ruido = np.random.default_rng(escena.semilla_ruido).integers(
        -SinteticoConstants.RUIDO, SinteticoConstants.RUIDO + 1, size=(escena.alto, escena.ancho, 3))
    fondo = np.clip(np.asarray(escena.fondo) + ruido, 0, 255).astype(np.uint8)
    frames = np.empty((escena.num_frames, escena.alto, escena.ancho, 3), dtype=np.uint8)
    orden = escena.objetos[1:] + escena.objetos[:1]
    for t in range(escena.num_frames):
        imagen = Image.fromarray(fondo.copy())
        dibujo = ImageDraw.Draw(imagen)
        for objeto in orden:
            caja = objeto.cajas[t]
            if caja is not None:
                y1, x1, y2, x2 = caja
                dibujo.rectangle((x1, y1, x2 - 1, y2 - 1), fill=tuple(objeto.color))
        frames[t] = np.asarray(imagen)
    return frames.astype(np.float64) / 255.0


# ==================== DATASET EN DISCO ====================
class DatasetSintetico:
    """
    Directorio generado por `gen`: anotaciones normalizadas más frames
    rasterizados a demanda (con caché de los últimos videos).
    """

    def __init__(self, directorio, cache=16):
        self.directorio = Path(directorio)
        ruta_escenas = self.directorio / SinteticoConstants.ESCENAS
        try:
            with open(ruta_escenas, encoding='utf-8') as f:
                escenas = ArchivoEscenas.model_validate(json.load(f))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise AnotacionError(f'No se pudo leer {ruta_escenas}: {e}') from e
        self.escenas = {e.video_id: e for e in escenas.escenas}
        self.archivo, self.videos = cargar_anotaciones(self.directorio / SinteticoConstants.ANOTACIONES)
        faltantes = sorted({v.video_id for v in self.videos} - set(self.escenas))
        if faltantes:
            raise AnotacionError(f'Videos anotados sin escena: {faltantes[:5]}')
        self.frames = lru_cache(maxsize=cache)(self._rasterizar)

    @property
    def forma(self):
        escena = next(iter(self.escenas.values()))
        return escena.alto, escena.ancho

    def _rasterizar(self, video_id):
        return rasterizar(self.escenas[video_id])

    def video(self, query_id):
        for v in self.videos:
            if v.query_id == query_id:
                return v
        raise AnotacionError(f'Consulta desconocida: {query_id}')

    def recorte(self, query_ref):
        """Píxeles de la caja de consulta en su frame"""
        frames = self.frames(query_ref.video_id)
        _, alto, ancho, _ = frames.shape
        caja = query_ref.box
        y1, y2 = int(round(caja.y1 * alto)), int(round(caja.y2 * alto))
        x1, x2 = int(round(caja.x1 * ancho)), int(round(caja.x2 * ancho))
        return frames[query_ref.frame, y1:max(y2, y1 + 1), x1:max(x2, x1 + 1)]

    def frames_de_clip(self, clip):
        frames = self.frames(clip.video_id)
        indices = [f if f != FRAME_RELLENO else 0 for f in clip.frames]
        return frames[indices] * clip.mascara_valida()[:, None, None, None]

    def features_de_clip(self, clip, proveedor, query_ref=None):
        """EncoderFeatures del clip con la consulta dada (por defecto la del clip)"""
        consulta = query_ref if query_ref is not None else clip.query_ref
        return proveedor.features(self.frames_de_clip(clip), self.recorte(consulta), clip.mascara_valida())

    def similitud(self, proveedor):
        """Función de similitud entre QueryRef para las estrategias de QueryAug"""
        return lambda a, b: proveedor.similitud(self.recorte(a), self.recorte(b))


class CacheFeatures:
    """
    Features de entrenamiento memorizadas entre épocas: tokens de video por
    clip (float32) y tokens de consulta por QueryRef. El video de cada clip
    se rasteriza una sola vez aunque el orden de los clips sea aleatorio.
    """

    def __init__(self, dataset, proveedor):
        self.dataset = dataset
        self.proveedor = proveedor
        self._videos = {}
        self._consultas = {}

    @staticmethod
    def _clave(query_ref):
        return query_ref.video_id, query_ref.frame, tuple(query_ref.box.como_lista())

    def consulta(self, query_ref):
        """(z_query, z_cls) del recorte de la QueryRef"""
        clave = self._clave(query_ref)
        if clave not in self._consultas:
            self._consultas[clave] = self.proveedor.consulta(self.dataset.recorte(query_ref))
        return self._consultas[clave]

    def features(self, clip, query_ref=None):
        z_video = self._videos.get(clip.clip_id)
        if z_video is None:
            z_video = self.proveedor.tokens_video(self.dataset.frames_de_clip(clip), clip.mascara_valida())
            z_video = self._videos[clip.clip_id] = z_video.astype(np.float32)
        z_query, z_cls = self.consulta(query_ref if query_ref is not None else clip.query_ref)
        return self.proveedor.ensamblar(z_video, z_query, z_cls)

    def similitud(self, a, b):
        """Coseno entre los tokens medios de dos consultas (estrategias de QueryAug)"""
        u, v = self.consulta(a)[0].mean(axis=0), self.consulta(b)[0].mean(axis=0)
        return float(u @ v / max(np.linalg.norm(u) * np.linalg.norm(v), 1e-12))

    def __len__(self):
        return len(self._videos)
