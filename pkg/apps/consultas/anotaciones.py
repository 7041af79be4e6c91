# apps/consultas/anotaciones.py
"""
Archivo de anotaciones (estilo VQ2D reducido):

    {"version": 1,
     "videos": [{"video_id", "num_frames", "alto", "ancho",
                 "queries": [{"query_id", "object_id", "query_frame", "query_box",
                              "segment": [s, e], "frames": [{"frame", "box"}],
                              "instances": [{"frame", "box"}]}]}]}

Cajas en píxeles [y1, x1, y2, x2]. Los clips no se guardan: salen de
`slice_clips` con el clip_len de la configuración.
"""

from pathlib import Path
import json
import logging
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from apps.aumentos.muestras import QueryRef
from apps.geometria.cajas import BBox
from apps.inferencia.pipeline import VideoAnnotation
from hero_vql.excepciones import AnotacionError, CajaError

logger = logging.getLogger(__name__)

VERSION_ESQUEMA = 1


class CajaFrame(BaseModel):
    model_config = ConfigDict(extra='forbid')

    frame: int = Field(ge=0)
    box: Tuple[float, float, float, float]


class ConsultaAnotada(BaseModel):
    model_config = ConfigDict(extra='forbid')

    query_id: str
    object_id: str
    query_frame: int = Field(ge=0)
    query_box: Tuple[float, float, float, float]
    segment: Optional[Tuple[int, int]] = None
    frames: List[CajaFrame]
    instances: List[CajaFrame] = []


class VideoAnotado(BaseModel):
    model_config = ConfigDict(extra='forbid')

    video_id: str
    num_frames: int = Field(ge=1)
    alto: int = Field(ge=1)
    ancho: int = Field(ge=1)
    queries: List[ConsultaAnotada]

    def _dentro(self, caja, donde):
        y1, x1, y2, x2 = caja
        if not (0 <= y1 <= y2 <= self.alto and 0 <= x1 <= x2 <= self.ancho):
            raise ValueError(f'{donde}: caja {list(caja)} fuera de la imagen {self.alto}×{self.ancho}')

    @model_validator(mode='after')
    def validar_video(self):
        for q in self.queries:
            if q.query_frame >= self.num_frames:
                raise ValueError(f'{q.query_id}: query_frame {q.query_frame} fuera del video')
            self._dentro(q.query_box, f'{q.query_id} (consulta)')
            vistos = set()
            for cf in list(q.frames) + list(q.instances):
                if cf.frame >= self.num_frames:
                    raise ValueError(f'{q.query_id}: frame {cf.frame} fuera del video')
                self._dentro(cf.box, f'{q.query_id} frame {cf.frame}')
            for cf in q.frames:
                if cf.frame in vistos:
                    raise ValueError(f'{q.query_id}: frame {cf.frame} repetido')
                vistos.add(cf.frame)
        return self


class ArchivoAnotaciones(BaseModel):
    model_config = ConfigDict(extra='forbid')

    version: Literal[1] = VERSION_ESQUEMA
    videos: List[VideoAnotado]


# ==================== NORMALIZACIÓN ====================
def a_video_annotation(video, consulta):
    """Consulta anotada → VideoAnnotation con cajas normalizadas"""
    def a_normal(caja, frame):
        return BBox.desde_pixeles(caja, video.alto, video.ancho, frame=frame)

    cajas = {cf.frame: a_normal(cf.box, cf.frame) for cf in consulta.frames}
    query_ref = QueryRef(video.video_id, consulta.query_frame,
                         a_normal(consulta.query_box, consulta.query_frame), consulta.object_id)
    instancias = tuple(
        QueryRef(video.video_id, cf.frame, a_normal(cf.box, cf.frame), consulta.object_id)
        for cf in consulta.instances
    )
    anotacion = VideoAnnotation(
        query_id=consulta.query_id,
        video_id=video.video_id,
        num_frames=video.num_frames,
        cajas=cajas,
        query_ref=query_ref,
        object_instances=instancias,
        alto=video.alto,
        ancho=video.ancho,
    )
    if consulta.segment is not None and tuple(consulta.segment) != anotacion.segmento:
        raise AnotacionError(
            f'{consulta.query_id}: segmento guardado {list(consulta.segment)} y '
            f'último tramo de los frames {anotacion.segmento} no coinciden'
        )
    return anotacion


def normalizar(archivo):
    """ArchivoAnotaciones → lista de VideoAnnotation (una por consulta)"""
    videos = []
    for video in archivo.videos:
        for consulta in video.queries:
            if not consulta.frames:
                logger.warning(f'{consulta.query_id}: consulta sin ocurrencias, se omite')
                continue
            videos.append(a_video_annotation(video, consulta))
    return videos


# ==================== ENTRADA / SALIDA ====================
def cargar_anotaciones(ruta):
    """Lee y valida el archivo; retorna (ArchivoAnotaciones, lista de VideoAnnotation)"""
    ruta = Path(ruta)
    try:
        with open(ruta, encoding='utf-8') as f:
            archivo = ArchivoAnotaciones.model_validate(json.load(f))
        videos = normalizar(archivo)
    except (OSError, json.JSONDecodeError) as e:
        raise AnotacionError(f'No se pudo leer {ruta}: {e}') from e
    except (ValidationError, CajaError) as e:
        raise AnotacionError(f'{ruta} no cumple el esquema de anotaciones: {e}') from e
    logger.info(f'{len(videos)} consultas cargadas desde {ruta}')
    return archivo, videos


def guardar_anotaciones(ruta, archivo):
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, 'w', encoding='utf-8') as f:
        json.dump(archivo.model_dump(mode='json'), f, indent=1)
