# apps/guias/guia.py
"""
Guía de atención top-down.

- Guía de alto nivel: token de clase de la consulta contra los tokens de
  cada frame, con resta de la media del frame y sigmoide.
- Guía de nivel medio: mapas de puntaje de las componentes principales de
  los tokens de la consulta, uno por cabeza de atención.
- Mapas TAG: los mismos mapas pero con la base de la salida del decodificador,
  para la pérdida de entropía.

Las SVD se tratan como factores constantes: el gradiente solo atraviesa la
proyección sobre la base.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy.special import expit

from apps.tensores import tensor as tg
from apps.tensores.tensor import Tensor
from hero_vql.excepciones import ConfiguracionError, DimensionError

logger = logging.getLogger(__name__)


# ==================== CONSTANTES ====================
class GuiaConstants:
    SIGMAS_UMBRAL = 3.0
    MARGEN_RELATIVO = 1e-6
    LIMITE_SIGMOIDE = 1e-7
    TOLERANCIA_RANGO = 1e-7


VECINOS_8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


# ==================== TIPOS ====================
@dataclass
class EncoderFeatures:
    """
    Salida del codificador congelado para un clip.

    z_video: T×M×D, z_query: N×D, z_cls: D, w_q / w_k: D×D
    grid: (filas, columnas) de parches del frame, filas·columnas = M
    grid_consulta: disposición de los N tokens de la consulta (para los mapas)
    """
    z_video: np.ndarray
    z_query: np.ndarray
    z_cls: np.ndarray
    w_q: np.ndarray
    w_k: np.ndarray
    grid: tuple
    grid_consulta: tuple = None

    def __post_init__(self):
        if self.z_video.ndim != 3 or self.z_query.ndim != 2:
            raise DimensionError(f'z_video {self.z_video.shape} / z_query {self.z_query.shape} mal formados')
        T, M, D = self.z_video.shape
        if self.z_query.shape[1] != D or self.z_cls.shape != (D,):
            raise DimensionError(f'Ancho D inconsistente: video {D}, consulta {self.z_query.shape}, cls {self.z_cls.shape}')
        if self.w_q.shape != (D, D) or self.w_k.shape != (D, D):
            raise DimensionError(f'Proyecciones W_Q {self.w_q.shape} / W_K {self.w_k.shape} no son {D}×{D}')
        if self.grid[0] * self.grid[1] != M:
            raise DimensionError(f'Grid {self.grid} no cubre M={M} tokens')
        if not all(np.all(np.isfinite(a)) for a in (self.z_video, self.z_query, self.z_cls)):
            raise DimensionError('Features con valores no finitos')

    @property
    def T(self):
        return self.z_video.shape[0]

    @property
    def M(self):
        return self.z_video.shape[1]

    @property
    def N(self):
        return self.z_query.shape[0]

    @property
    def D(self):
        return self.z_video.shape[2]

    def permutada(self, inversa):
        """Features del clip reordenado: el frame en la posición k es el frame inversa[k] del original"""
        return EncoderFeatures(self.z_video[inversa], self.z_query, self.z_cls, self.w_q, self.w_k,
                               self.grid, self.grid_consulta)


@dataclass
class GuidePack:
    """
    alpha_high: T×M en (0, 1); alpha_mid: N×R en [0, 1)
    pc_basis: D×R con columnas ortonormales (o cero más allá del rango)
    centered: tokens de consulta centrados usados para alpha_mid
    """
    alpha_high: np.ndarray
    alpha_mid: np.ndarray
    pc_basis: np.ndarray
    centered: np.ndarray
    tau: float
    R: int

    def permutada(self, inversa):
        """Guía del clip reordenado: alpha_high sigue a sus frames, alpha_mid es compartida"""
        return GuidePack(self.alpha_high[inversa], self.alpha_mid, self.pc_basis, self.centered, self.tau, self.R)


# ==================== REPARACIÓN DE TOKENS ====================
def _marcar_alta_norma(tokens):
    normas = np.linalg.norm(tokens, axis=1)
    media = normas.mean()
    umbral = media + GuiaConstants.SIGMAS_UMBRAL * normas.std() + GuiaConstants.MARGEN_RELATIVO * media
    return normas > umbral, normas


def _reemplazo(tokens, normas, indices):
    """Vector con la norma media y la dirección media de los tokens dados"""
    magnitud = normas[indices].mean()
    seguras = np.maximum(normas[indices], 1e-12)[:, None]
    direccion = (tokens[indices] / seguras).mean(axis=0)
    largo = np.linalg.norm(direccion)
    if largo <= 1e-12:
        return None
    return magnitud * direccion / largo


def repair_tokens(z_frame, grid):
    """
    Reemplaza los tokens de norma alta (> media + 3·desv) por la media de
    magnitudes y direcciones de sus vecinos 8-conexos no marcados. Si no
    quedan vecinos válidos se usa la media global de los tokens no marcados.
    Se repite hasta que ningún token quede marcado. Cada pasada recalcula
    media y desviación con los tokens ya reparados, así que un token que no
    estaba marcado puede quedar marcado (y reemplazado) en una pasada
    posterior; con una sola pasada esto no ocurre pero pueden sobrevivir
    tokens atípicos que el primer umbral, inflado por ellos mismos, no detectó.
    """
    filas, columnas = grid
    tokens = np.array(z_frame, dtype=np.float64, copy=True)
    if tokens.shape[0] != filas * columnas:
        raise DimensionError(f'Grid {grid} no cubre {tokens.shape[0]} tokens')

    for _ in range(4 * tokens.shape[0]):
        marcados, normas = _marcar_alta_norma(tokens)
        if not marcados.any():
            break
        sanos = np.flatnonzero(~marcados)
        nuevos = {}
        for idx in np.flatnonzero(marcados):
            f, c = divmod(int(idx), columnas)
            vecinos = [
                (f + df) * columnas + (c + dc)
                for df, dc in VECINOS_8
                if 0 <= f + df < filas and 0 <= c + dc < columnas and not marcados[(f + df) * columnas + (c + dc)]
            ]
            vector = _reemplazo(tokens, normas, vecinos) if vecinos else None
            if vector is None:
                vector = _reemplazo(tokens, normas, sanos)
            if vector is None:
                vector = tokens[idx] * (normas[sanos].mean() / max(normas[idx], 1e-12))
            nuevos[int(idx)] = vector
        for idx, vector in nuevos.items():
            tokens[idx] = vector
        logger.debug(f'Reparados {len(nuevos)} tokens de norma alta')
    return tokens.astype(np.asarray(z_frame).dtype)


# ==================== GUÍA DE ALTO NIVEL ====================
def puntajes_alto_nivel(feats):
    """Puntajes crudos (z_cls·W_Q)(z_video[t]·W_K)ᵀ, T×M en float64"""
    q = feats.z_cls.astype(np.float64) @ feats.w_q.astype(np.float64)
    k = feats.z_video.astype(np.float64) @ feats.w_k.astype(np.float64)
    return k @ q


def high_level_guide(feats):
    """α_high = sigmoide(s − media del frame(s)), T×M dentro de (0, 1)"""
    s = puntajes_alto_nivel(feats)
    s = s - s.mean(axis=1, keepdims=True)
    limite = GuiaConstants.LIMITE_SIGMOIDE
    return np.clip(expit(s), limite, 1.0 - limite)


# ==================== COMPONENTES PRINCIPALES ====================
def base_principal(centrada, R):
    """
    Top-R vectores singulares derechos (D×R) de una matriz ya centrada, en
    orden de valor singular descendente. Columnas más allá del rango en cero;
    la entrada de mayor magnitud de cada columna es positiva.
    """
    if R < 1:
        raise ConfiguracionError(f'R debe ser ≥ 1, llegó {R}')
    centrada = np.asarray(centrada, dtype=np.float64)
    D = centrada.shape[1]
    base = np.zeros((D, R))
    if centrada.size == 0:
        return base
    _, s, vt = np.linalg.svd(centrada, full_matrices=False)
    escala = max(1.0, float(np.abs(centrada).max()))
    tolerancia = max(s.max() * max(centrada.shape) * np.finfo(np.float64).eps,
                     GuiaConstants.TOLERANCIA_RANGO * escala)
    rango = int(min(np.sum(s > tolerancia), R))
    for r in range(rango):
        columna = vt[r]
        if columna[np.argmax(np.abs(columna))] < 0:
            columna = -columna
        base[:, r] = columna
    if rango < R:
        logger.debug(f'Rango {rango} < R={R}: {R - rango} columnas de la base en cero')
    return base


def pc_decompose(z_query, R):
    """(centrada N×D, base D×R) de los tokens de la consulta"""
    z = np.asarray(z_query, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise DimensionError(f'z_query debe ser N×D con N ≥ 1, llegó {z.shape}')
    centrada = z - z.mean(axis=0, keepdims=True)
    return centrada, base_principal(centrada, R)


def phi(x, tau):
    """φ(x) = 1 − exp(−x²/τ), par y en [0, 1); se satura en el mayor valor representable < 1"""
    if tau <= 0:
        raise ConfiguracionError(f'tau debe ser positivo, llegó {tau}')
    x = tg.as_tensor(x)
    techo = 1.0 - float(np.finfo(x.data.dtype).eps)
    return tg.minimum(1.0 - tg.exp(-(x * x) * (1.0 / tau)), techo)


def mid_level_guide(centered, basis, tau):
    """α_mid = φ(centrada·base), N×R; diferenciable respecto de `centered` si es un Tensor"""
    return phi(tg.matmul(tg.as_tensor(centered), Tensor(basis)), tau)


def tag_score_maps(z_query_centered, y, R, tau):
    """
    Mapas S_TAG = φ(Z̃_query·V_Y) con V_Y la base principal de los tokens de
    salida del decodificador (aplanados sobre T·M y centrados). V_Y es constante.
    """
    y_datos = y.data if isinstance(y, Tensor) else np.asarray(y)
    planos = y_datos.reshape(-1, y_datos.shape[-1]).astype(np.float64)
    base_y = base_principal(planos - planos.mean(axis=0, keepdims=True), R)
    return mid_level_guide(z_query_centered, base_y, tau)


# ==================== COMPOSICIÓN ====================
def build_guides(feats, cfg):
    """
    Reparación → guía alta → PCA → guía media.

    cfg aporta n_heads, tau, use_high_guide, use_mid_guide y repair_tokens.
    Una guía desactivada queda en cero.
    """
    R = cfg.n_heads
    if cfg.repair_tokens:
        z_video = np.stack([repair_tokens(frame, feats.grid) for frame in feats.z_video])
        feats = EncoderFeatures(z_video, feats.z_query, feats.z_cls, feats.w_q, feats.w_k,
                                feats.grid, feats.grid_consulta)

    if cfg.use_high_guide:
        alpha_high = high_level_guide(feats)
    else:
        alpha_high = np.zeros((feats.T, feats.M))

    centrada, base = pc_decompose(feats.z_query, R)
    if cfg.use_mid_guide:
        alpha_mid = mid_level_guide(centrada, base, cfg.tau).data.astype(np.float64)
    else:
        alpha_mid = np.zeros((feats.N, R))

    return GuidePack(alpha_high=alpha_high, alpha_mid=alpha_mid, pc_basis=base,
                     centered=centrada, tau=cfg.tau, R=R)
