# apps/modelo/proveedor.py
"""
Sustituto del codificador: embedding lineal aleatorio congelado de parches.

Un mismo `seed` produce siempre las mismas proyecciones, de modo que las
features de una escena son bit a bit reproducibles.
"""

import logging

import numpy as np
from PIL import Image

from apps.guias.guia import EncoderFeatures
from hero_vql.excepciones import DimensionError

logger = logging.getLogger(__name__)


class ProveedorConstants:
    ESCALA_POSICIONAL = 0.1
    CENTRO_PIXEL = 0.5


def a_parches(imagen, lado):
    """Imagen H×W×C → (H/lado · W/lado)×(lado·lado·C), parches en orden de filas"""
    H, W, C = imagen.shape
    if H % lado or W % lado:
        raise DimensionError(f'Imagen {H}×{W} no divisible en parches de {lado}')
    filas, columnas = H // lado, W // lado
    parches = imagen.reshape(filas, lado, columnas, lado, C).transpose(0, 2, 1, 3, 4)
    return parches.reshape(filas * columnas, lado * lado * C), (filas, columnas)


def redimensionar(recorte, lado):
    """Recorte RGB en [0, 1] → lado×lado con Pillow (bilineal)"""
    arreglo = np.clip(np.asarray(recorte, dtype=np.float64), 0.0, 1.0)
    if arreglo.shape[0] == 0 or arreglo.shape[1] == 0:
        arreglo = np.zeros((1, 1, 3))
    imagen = Image.fromarray(np.round(arreglo * 255).astype(np.uint8))
    imagen = imagen.resize((lado, lado), Image.Resampling.BILINEAR)
    return np.asarray(imagen, dtype=np.float64) / 255.0


class ProveedorSintetico:
    """
    Features de un clip rasterizado.

    frames: T×H×W×3 en [0, 1]; recorte: h×w×3 de la consulta; validos: máscara
    T (los frames de relleno reciben tokens en cero).
    """

    def __init__(self, d_model=64, patch_size=8, query_size=32, alto=48, ancho=48, canales=3, seed=0):
        self.d_model = d_model
        self.patch_size = patch_size
        self.query_size = query_size
        self.seed = seed
        rng = np.random.default_rng(seed)
        dim_parche = patch_size * patch_size * canales
        self.proyeccion = rng.normal(size=(dim_parche, d_model)) / np.sqrt(dim_parche)
        self.grid = (alto // patch_size, ancho // patch_size)
        self.grid_consulta = (query_size // patch_size, query_size // patch_size)
        escala = ProveedorConstants.ESCALA_POSICIONAL
        self.pos_video = rng.normal(size=(self.grid[0] * self.grid[1], d_model)) * escala
        self.pos_consulta = rng.normal(size=(self.grid_consulta[0] * self.grid_consulta[1], d_model)) * escala
        # W_K = W_Q: el puntaje bilineal se reduce a similitud entre token de clase y parche
        self.w_q = np.linalg.qr(rng.normal(size=(d_model, d_model)))[0]
        self.w_k = self.w_q.copy()

    def _embeber(self, imagen):
        parches, grid = a_parches(imagen - ProveedorConstants.CENTRO_PIXEL, self.patch_size)
        return parches @ self.proyeccion, parches, grid

    def consulta(self, recorte):
        """(z_query N×D, z_cls D) de un recorte de consulta"""
        imagen = redimensionar(recorte, self.query_size)
        tokens, parches, _ = self._embeber(imagen)
        z_cls = parches.mean(axis=0) @ self.proyeccion
        return tokens + self.pos_consulta, z_cls

    def tokens_video(self, frames, validos=None):
        """z_video T×M×D de un clip; los frames no válidos quedan en cero"""
        frames = np.asarray(frames, dtype=np.float64)
        T = frames.shape[0]
        validos = np.ones(T, dtype=bool) if validos is None else np.asarray(validos, dtype=bool)
        M = self.grid[0] * self.grid[1]
        z_video = np.zeros((T, M, self.d_model))
        for t in range(T):
            if validos[t]:
                tokens, _, grid = self._embeber(frames[t])
                if grid != self.grid:
                    raise DimensionError(f'Frame con grid {grid}, el proveedor espera {self.grid}')
                z_video[t] = tokens + self.pos_video
        return z_video

    def ensamblar(self, z_video, z_query, z_cls):
        return EncoderFeatures(
            z_video=z_video, z_query=z_query, z_cls=z_cls,
            w_q=self.w_q, w_k=self.w_k, grid=self.grid, grid_consulta=self.grid_consulta,
        )

    def features(self, frames, recorte, validos=None):
        return self.ensamblar(self.tokens_video(frames, validos), *self.consulta(recorte))

    def similitud(self, recorte_a, recorte_b):
        """Coseno entre los tokens medios de dos recortes (estrategias de QueryAug)"""
        a = self.consulta(recorte_a)[0].mean(axis=0)
        b = self.consulta(recorte_b)[0].mean(axis=0)
        return float(a @ b / max(np.linalg.norm(a) * np.linalg.norm(b), 1e-12))


def synthetic_feature_provider(scene, seed, d_model=64, patch_size=8, query_size=32):
    """
    Features de una escena sintética rasterizada; `scene` expone `frames`
    (T×H×W×3), `recorte` (h×w×3) y opcionalmente `validos`.
    """
    T, H, W, C = np.asarray(scene.frames).shape
    proveedor = ProveedorSintetico(d_model=d_model, patch_size=patch_size, query_size=query_size,
                                   alto=H, ancho=W, canales=C, seed=seed)
    return proveedor.features(scene.frames, scene.recorte, getattr(scene, 'validos', None))
