# apps/modelo/localizador.py
"""
Red de localización: adaptadores de entrada, decodificador espacial guiado,
módulo temporal y cabezas de caja y puntaje.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.special import expit

from apps.geometria.cajas import BBox
from apps.tensores import tensor as tg
from apps.tensores.tensor import Tensor
from hero_vql.excepciones import ConfiguracionError, DimensionError
from .atencion import (
    AtencionCruzadaGuiada,
    AtencionPropiaGuiada,
    guided_cross_attention,
    guided_self_attention,
    temporal_shift,
)
from .capas import Lineal, Modulo, NormaCapa, Perceptron

logger = logging.getLogger(__name__)


# ==================== CONFIGURACIÓN ====================
class AgrupamientoCabezas:
    """Cómo las cabezas resumen los M tokens de cada frame"""
    ATENCION = 'attention'
    MEDIA = 'mean'

    TODAS = (ATENCION, MEDIA)


@dataclass(frozen=True)
class DecoderConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 3
    ffn_mult: int = 4
    shift_fraction: float = 0.25
    head_pooling: str = AgrupamientoCabezas.ATENCION

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1:
            raise ConfiguracionError(f'd_model y n_heads deben ser positivos: {self.d_model}, {self.n_heads}')
        if self.d_model % self.n_heads:
            raise ConfiguracionError(f'd_model={self.d_model} no es divisible por n_heads={self.n_heads}')
        if self.n_layers < 1:
            raise ConfiguracionError(f'n_layers debe ser ≥ 1, llegó {self.n_layers}')
        if self.ffn_mult < 1:
            raise ConfiguracionError(f'ffn_mult debe ser ≥ 1, llegó {self.ffn_mult}')
        if not 0.0 < self.shift_fraction <= 0.5:
            raise ConfiguracionError(f'shift_fraction fuera de (0, 0.5]: {self.shift_fraction}')
        if self.head_pooling not in AgrupamientoCabezas.TODAS:
            raise ConfiguracionError(f'head_pooling desconocido: {self.head_pooling!r}')

    @classmethod
    def desde_config(cls, cfg):
        return cls(d_model=cfg.d_model, n_heads=cfg.n_heads, n_layers=cfg.n_layers,
                   ffn_mult=cfg.ffn_mult, shift_fraction=cfg.shift_fraction,
                   head_pooling=cfg.head_pooling)


# ==================== PREDICCIONES ====================
@dataclass
class Predictions:
    """
    Secuencia de respuesta por frame.

    cajas: Tensor T×4 con las esquinas [y1, x1, y2, x2] derivadas de la
    parametrización sigmoide (centro, tamaño); logits: Tensor T del puntaje.
    y / consulta: intermedios del decodificador que consume la pérdida TAG.
    """
    cajas: Tensor
    logits: Tensor
    y: Tensor = None
    consulta: Tensor = None

    @property
    def T(self):
        return self.cajas.shape[0]

    @property
    def scores(self):
        """π_i ∈ (0, 1)"""
        return expit(self.logits.data.astype(np.float64))

    @property
    def boxes(self):
        return [BBox.desde_lista(np.clip(fila, 0.0, 1.0), frame=t) for t, fila in enumerate(self.cajas.data)]

    def detenidas(self):
        """Copia fuera de la cinta (objetivo de la pérdida de consistencia)"""
        return Predictions(tg.stop_gradient(self.cajas), tg.stop_gradient(self.logits))

    def tomar(self, indices):
        """Reordena los frames: salida[k] = self[indices[k]]"""
        return Predictions(tg.take(self.cajas, indices, axis=0), tg.take(self.logits, indices, axis=0),
                           self.y, self.consulta)

    @classmethod
    def desde_probabilidades(cls, cajas, probabilidades):
        """Predicciones con logit = log(p / (1 − p))"""
        p = np.clip(np.asarray(probabilidades, dtype=np.float64), 1e-12, 1.0 - 1e-12)
        return cls(tg.as_tensor(cajas), Tensor(np.log(p / (1.0 - p))))


def esquinas_desde_centro(cxcywh):
    """[cx, cy, w, h] → [y1, x1, y2, x2] sin recortar, diferenciable"""
    cx, cy, w, h = (cxcywh[:, i] for i in range(4))
    y1, x1 = cy - h * 0.5, cx - w * 0.5
    y2, x2 = cy + h * 0.5, cx + w * 0.5
    return tg.stack([y1, x1, y2, x2], axis=1)


def centros_de_grid(grid):
    """Centros normalizados (cx, cy) de los parches, M×2 en orden de filas"""
    filas, columnas = grid
    cy, cx = np.meshgrid((np.arange(filas) + 0.5) / filas, (np.arange(columnas) + 0.5) / columnas, indexing='ij')
    return np.stack([cx.reshape(-1), cy.reshape(-1)], axis=1)


def inverse_sigmoid(x, eps=1e-5):
    x = tg.minimum(tg.maximum(x, eps), 1.0 - eps)
    return tg.log(x) - tg.log(1.0 - x)


# ==================== BLOQUES ====================
class BloqueDecodificador(Modulo):
    """Pre-norma: auto-atención (α_high) → atención cruzada (α_mid) → feed-forward"""

    def __init__(self, cfg, rng):
        d = cfg.d_model
        self.atencion_propia = AtencionPropiaGuiada(d, rng)
        self.atencion_cruzada = AtencionCruzadaGuiada(d, cfg.n_heads, rng)
        self.norma_ffn = NormaCapa(d)
        self.ffn = Perceptron(d, d * cfg.ffn_mult, d, rng)

    def __call__(self, x, consulta, alpha_high, alpha_mid):
        x = guided_self_attention(x, alpha_high, self.atencion_propia)
        x = guided_cross_attention(x, consulta, alpha_mid, self.atencion_cruzada)
        return x + self.ffn(self.norma_ffn(x))


class ModuloTemporal(Modulo):
    """W = Y + Lineal(Norma(shift(Y)))"""

    def __init__(self, cfg, rng):
        self.shift_fraction = cfg.shift_fraction
        self.norma = NormaCapa(cfg.d_model)
        self.mezcla = Lineal(cfg.d_model, cfg.d_model, rng)

    def __call__(self, y):
        return y + self.mezcla(self.norma(temporal_shift(y, self.shift_fraction)))


# ==================== LOCALIZADOR ====================
class Localizador(Modulo):
    """
    Con agrupamiento por atención, un mapa softmax sobre los M tokens de cada
    frame resume W y fija un punto de referencia (promedio de los centros de
    parche); la cabeza de caja predice el centro como corrección en espacio
    logit de esa referencia. Con agrupamiento medio, W se promedia sobre M.
    """

    def __init__(self, cfg, seed=0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = cfg.d_model
        self.adaptador_video = Lineal(d, d, rng)
        self.adaptador_consulta = Lineal(d, d, rng)
        self.capas = [BloqueDecodificador(cfg, rng) for _ in range(cfg.n_layers)]
        self.norma_final = NormaCapa(d)
        self.temporal = ModuloTemporal(cfg, rng)
        self.cabeza_caja = Perceptron(d, d, 4, rng)
        self.cabeza_puntaje = Perceptron(d, d, 1, rng)
        self.cabeza_mapa = Lineal(d, 1, rng) if cfg.head_pooling == AgrupamientoCabezas.ATENCION else None
        logger.debug(f'Localizador con {sum(p.size for p in self.parametros().values())} parámetros')

    def agrupar(self, w, grid):
        """W T×M×D → (resumen T×D, referencia T×2 o None, pesos T×M o None)"""
        if self.cabeza_mapa is None:
            return tg.mean(w, axis=1), None, None
        T, M, D = w.shape
        pesos = tg.softmax(tg.reshape(self.cabeza_mapa(w), (T, M)), axis=-1)
        resumen = tg.reshape(tg.matmul(tg.reshape(pesos, (T, 1, M)), w), (T, D))
        referencia = tg.matmul(pesos, Tensor(centros_de_grid(grid)))
        return resumen, referencia, pesos

    def cajas(self, resumen, referencia):
        """[cx, cy, w, h] en (0, 1) → esquinas"""
        salida = self.cabeza_caja(resumen)
        if referencia is None:
            return esquinas_desde_centro(tg.sigmoid(salida))
        centro = tg.sigmoid(salida[:, :2] + inverse_sigmoid(referencia))
        return esquinas_desde_centro(tg.concatenate([centro, tg.sigmoid(salida[:, 2:])], axis=1))

    def forward(self, feats, guides=None):
        """
        feats: EncoderFeatures; guides: GuidePack o None (decodificador sin guía).
        Retorna Predictions con T cajas y T logits.
        """
        if feats.D != self.cfg.d_model:
            raise DimensionError(f'Las features tienen D={feats.D}, el modelo d_model={self.cfg.d_model}')
        alpha_high = guides.alpha_high if guides is not None else None
        alpha_mid = guides.alpha_mid if guides is not None else None

        x = self.adaptador_video(Tensor(feats.z_video))
        consulta = self.adaptador_consulta(Tensor(feats.z_query))
        for capa in self.capas:
            x = capa(x, consulta, alpha_high, alpha_mid)
        y = self.norma_final(x)

        w = self.temporal(y)
        resumen, referencia, _ = self.agrupar(w, feats.grid)
        cajas = self.cajas(resumen, referencia)
        logits = tg.reshape(self.cabeza_puntaje(resumen), (feats.T,))
        return Predictions(cajas=cajas, logits=logits, y=y, consulta=consulta)

    __call__ = forward

    def cargar_parametros(self, valores):
        """Reemplaza los valores de los parámetros a partir de un dict nombre → arreglo"""
        propios = self.parametros()
        faltantes = sorted(set(propios) - set(valores))
        sobrantes = sorted(set(valores) - set(propios))
        if faltantes or sobrantes:
            raise ConfiguracionError(f'Parámetros incompatibles: faltan {faltantes}, sobran {sobrantes}')
        for nombre, p in propios.items():
            arreglo = np.asarray(valores[nombre])
            if arreglo.shape != p.shape:
                raise DimensionError(f'{nombre}: forma {arreglo.shape}, se esperaba {p.shape}')
            p.data = arreglo.astype(p.data.dtype)
