# apps/inferencia/intercambio.py
"""
JSON de intercambio de predicciones y ground truth:

    {"queries": [{"query_id", "video_id", "segment": [s, e] | null,
                  "boxes": [[y1, x1, y2, x2], ...], "score": π_h}]}

Una predicción vacía se escribe con segment null, boxes [] y score 0.
"""

from pathlib import Path
import json
import logging
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from apps.geometria.cajas import BBox
from hero_vql.excepciones import CajaError, FormatoError
from .pipeline import ResponseTrack

logger = logging.getLogger(__name__)


class EntradaConsulta(BaseModel):
    model_config = ConfigDict(extra='forbid')

    query_id: str
    video_id: str
    segment: Optional[Tuple[int, int]] = None
    boxes: List[Tuple[float, float, float, float]] = []
    score: float = 0.0

    @model_validator(mode='after')
    def validar_cajas(self):
        if self.segment is None:
            if self.boxes:
                raise ValueError(f'{self.query_id}: cajas sin segmento')
            return self
        inicio, fin = self.segment
        if fin < inicio or len(self.boxes) != fin - inicio + 1:
            raise ValueError(f'{self.query_id}: segmento {self.segment} con {len(self.boxes)} cajas')
        return self

    def a_track(self):
        if self.segment is None:
            return None
        inicio = self.segment[0]
        cajas = tuple(BBox.desde_lista(c, frame=inicio + i) for i, c in enumerate(self.boxes))
        return ResponseTrack(self.segment, cajas, self.score)

    @classmethod
    def desde_track(cls, query_id, video_id, track):
        if track is None:
            return cls(query_id=query_id, video_id=video_id)
        return cls(
            query_id=query_id,
            video_id=video_id,
            segment=track.segment,
            boxes=[tuple(c.como_lista()) for c in track.boxes],
            score=float(track.peak_score),
        )


class ArchivoConsultas(BaseModel):
    model_config = ConfigDict(extra='forbid')

    queries: List[EntradaConsulta]


def guardar_tracks(ruta, entradas):
    """entradas: iterable de (query_id, video_id, ResponseTrack o None), se escribe ordenado por query_id"""
    archivo = ArchivoConsultas(queries=[
        EntradaConsulta.desde_track(q, v, track) for q, v, track in sorted(entradas, key=lambda e: e[0])
    ])
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, 'w', encoding='utf-8') as f:
        json.dump(archivo.model_dump(mode='json'), f, indent=2)
    logger.info(f'{len(archivo.queries)} consultas escritas en {ruta}')


def cargar_tracks(ruta):
    """Retorna dict query_id → ResponseTrack o None"""
    try:
        with open(ruta, encoding='utf-8') as f:
            archivo = ArchivoConsultas.model_validate(json.load(f))
        tracks = {e.query_id: e.a_track() for e in archivo.queries}
    except (OSError, json.JSONDecodeError) as e:
        raise FormatoError(f'No se pudo leer {ruta}: {e}') from e
    except (ValidationError, CajaError) as e:
        raise FormatoError(f'{ruta} no cumple el formato de consultas: {e}') from e
    if len(tracks) != len(archivo.queries):
        raise FormatoError(f'{ruta} tiene query_id repetidos')
    return tracks
