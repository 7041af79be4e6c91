# apps/aumentos/muestras.py
"""
Unidades de entrenamiento: clips, referencias de consulta y pares aumentados.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from hero_vql.excepciones import AnotacionError, PermutacionError

FRAME_RELLENO = -1


@dataclass(frozen=True)
class QueryRef:
    """Recorte de consulta: caja normalizada del objeto en un frame del video"""
    video_id: str
    frame: int
    box: object
    object_id: str = ''


@dataclass(frozen=True)
class ClipSample:
    """
    Clip de longitud fija con su anotación por frame.

    frames: índice del frame en el video (FRAME_RELLENO en el relleno)
    gt_boxes: BBox o None por frame, presente sii occurrence es verdadero
    valid: False en los frames de relleno del último clip
    """
    clip_id: str
    video_id: str
    frames: tuple
    gt_boxes: tuple
    occurrence: tuple
    query_ref: QueryRef
    object_instances: tuple = ()
    valid: tuple = field(default=None)

    def __post_init__(self):
        T = len(self.frames)
        if len(self.gt_boxes) != T or len(self.occurrence) != T:
            raise AnotacionError(
                f'Clip {self.clip_id}: {T} frames, {len(self.gt_boxes)} cajas, '
                f'{len(self.occurrence)} etiquetas'
            )
        for i, (caja, ocurre) in enumerate(zip(self.gt_boxes, self.occurrence)):
            if (caja is not None) != bool(ocurre):
                raise AnotacionError(f'Clip {self.clip_id}, frame {i}: caja y etiqueta de ocurrencia no coinciden')
        if self.valid is None:
            object.__setattr__(self, 'valid', tuple(f != FRAME_RELLENO for f in self.frames))

    @property
    def T(self):
        return len(self.frames)

    @property
    def indices_gt(self):
        return [i for i, ocurre in enumerate(self.occurrence) if ocurre]

    @property
    def tiene_ocurrencia(self):
        return any(self.occurrence)

    def etiquetas(self):
        return np.asarray(self.occurrence, dtype=np.float64)

    def mascara_valida(self):
        return np.asarray(self.valid, dtype=bool)

    def con_consulta(self, query_ref):
        return replace(self, query_ref=query_ref)


@dataclass(frozen=True)
class AugmentedPair:
    """
    Par original / reordenado que consume el entrenamiento por consistencia.

    permutation[i] es la posición en el clip reordenado del frame i del original.
    """
    original: ClipSample
    reordered: ClipSample
    permutation: tuple
    query_used: QueryRef


# ==================== PERMUTACIONES ====================
def validar_permutacion(permutation, T=None):
    """Verifica que la permutación sea una biyección sobre 0..T-1"""
    perm = np.asarray(permutation, dtype=np.int64)
    T = len(perm) if T is None else T
    if perm.shape != (T,) or not np.array_equal(np.sort(perm), np.arange(T)):
        raise PermutacionError(f'La permutación {perm.tolist()} no es biyectiva sobre {T} frames')
    return perm


def inversa(permutation):
    """inv[posición reordenada] = frame original"""
    perm = validar_permutacion(permutation)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def aplicar_permutacion(valores, permutation):
    """Reubica el frame i en la posición permutation[i] (eje 0)"""
    return [valores[j] for j in inversa(permutation)]
