# apps/geometria/cajas.py
"""
Álgebra de cajas alineadas a los ejes.

Convención interna: [y1, x1, y2, x2] en coordenadas normalizadas de imagen.
La vista {x, y, w, h} (esquina superior izquierda + tamaño) se deriva.
"""

from dataclasses import dataclass
import math

import numpy as np

from hero_vql.excepciones import CajaError


# ==================== TIPOS ====================
@dataclass(frozen=True)
class BBox:
    """
    Caja [y1, x1, y2, x2]. Las cajas de área cero son válidas (frames
    ocluidos, predicciones colapsadas) y quedan marcadas como degeneradas.
    """
    y1: float
    x1: float
    y2: float
    x2: float
    frame: int = None

    def __post_init__(self):
        coords = (self.y1, self.x1, self.y2, self.x2)
        if not all(math.isfinite(float(c)) for c in coords):
            raise CajaError(f'Coordenadas no finitas: {coords}')
        if self.y2 < self.y1 or self.x2 < self.x1:
            raise CajaError(f'Caja invertida [y1, x1, y2, x2] = {list(coords)}')

    # ---------- vistas ----------
    @property
    def ancho(self):
        return self.x2 - self.x1

    @property
    def alto(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.ancho * self.alto

    @property
    def degenerada(self):
        return self.area <= 0.0

    @property
    def centro(self):
        """(cx, cy)"""
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def xywh(self):
        """Vista {x, y, w, h} con (x, y) la esquina superior izquierda"""
        return {'x': self.x1, 'y': self.y1, 'w': self.ancho, 'h': self.alto}

    def como_lista(self):
        return [float(self.y1), float(self.x1), float(self.y2), float(self.x2)]

    def recortada(self):
        """Misma caja limitada a [0, 1]"""
        y1, x1, y2, x2 = (min(max(float(c), 0.0), 1.0) for c in (self.y1, self.x1, self.y2, self.x2))
        return BBox(y1, x1, max(y2, y1), max(x2, x1), frame=self.frame)

    def con_frame(self, frame):
        return BBox(self.y1, self.x1, self.y2, self.x2, frame=frame)

    # ---------- constructores ----------
    @classmethod
    def desde_lista(cls, coords, frame=None):
        y1, x1, y2, x2 = (float(c) for c in coords)
        return cls(y1, x1, y2, x2, frame=frame)

    @classmethod
    def desde_centro(cls, cx, cy, w, h, frame=None):
        """Caja a partir de centro y tamaño, recortada a [0, 1]"""
        w, h = max(float(w), 0.0), max(float(h), 0.0)
        return cls(cy - h / 2.0, cx - w / 2.0, cy + h / 2.0, cx + w / 2.0, frame=frame).recortada()

    @classmethod
    def desde_pixeles(cls, coords, alto_imagen, ancho_imagen, frame=None):
        """Normaliza una caja en píxeles [y1, x1, y2, x2] por el tamaño de la imagen"""
        y1, x1, y2, x2 = (float(c) for c in coords)
        return cls(y1 / alto_imagen, x1 / ancho_imagen, y2 / alto_imagen, x2 / ancho_imagen, frame=frame)


@dataclass(frozen=True)
class Displacement:
    """Cambio entre dos cajas: distancia de centros, diferencias de tamaño y log-escalas"""
    D: float
    dw: float
    dh: float
    sw: float
    sh: float

    @property
    def total(self):
        return self.D + abs(self.dw) + abs(self.dh) + abs(self.sw) + abs(self.sh)


# ==================== OPERACIONES ====================
def interseccion(a, b):
    alto = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    ancho = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    return alto * ancho


def union(a, b):
    return a.area + b.area - interseccion(a, b)


def iou(a, b):
    """Área de intersección sobre área de unión; 0 si la unión es vacía"""
    u = union(a, b)
    if u <= 0.0:
        return 0.0
    return interseccion(a, b) / u


def caja_envolvente(a, b):
    return BBox(min(a.y1, b.y1), min(a.x1, b.x1), max(a.y2, b.y2), max(a.x2, b.x2))


def giou(a, b):
    """
    IoU generalizado: IoU − |C \\ (A ∪ B)| / |C| con C la caja envolvente.
    Dos cajas degeneradas dan 0.
    """
    if a.degenerada and b.degenerada:
        return 0.0
    c = caja_envolvente(a, b).area
    if c <= 0.0:
        return 0.0
    u = union(a, b)
    return iou(a, b) - (c - u) / c


def displacement(a, b):
    """Desplazamiento de `a` respecto de `b` usado por MotionAug"""
    cxa, cya = a.centro
    cxb, cyb = b.centro
    sw = math.log(a.ancho / b.ancho) if a.ancho > 0 and b.ancho > 0 else 0.0
    sh = math.log(a.alto / b.alto) if a.alto > 0 and b.alto > 0 else 0.0
    return Displacement(
        D=math.hypot(cxa - cxb, cya - cyb),
        dw=a.ancho - b.ancho,
        dh=a.alto - b.alto,
        sw=sw,
        sh=sh,
    )


def iou_por_frame(cajas_a, cajas_b):
    """IoU elemento a elemento entre dos listas de cajas (None cuenta como 0)"""
    return np.array([
        iou(a, b) if a is not None and b is not None else 0.0
        for a, b in zip(cajas_a, cajas_b)
    ])
