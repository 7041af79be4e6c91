# apps/modelo/atencion.py
"""
Atención guiada del decodificador espacial y desplazamiento temporal.

- Auto-atención por frame entre los M tokens del frame, con α_high sumado
  a los logits de cada token clave.
- Atención cruzada por frame: los tokens del video preguntan, los tokens
  de la consulta responden; la cabeza r recibe el mapa α_mid[:, r].
"""

import math

import numpy as np

from apps.tensores import tensor as tg
from hero_vql.excepciones import ConfiguracionError, DimensionError
from .capas import Lineal, Modulo, NormaCapa


# ==================== PARÁMETROS ====================
class AtencionPropiaGuiada(Modulo):

    def __init__(self, d, rng):
        self.norma = NormaCapa(d)
        self.w_q = Lineal(d, d, rng)
        self.w_k = Lineal(d, d, rng)
        self.w_v = Lineal(d, d, rng)
        self.w_o = Lineal(d, d, rng)


class AtencionCruzadaGuiada(Modulo):

    def __init__(self, d, n_cabezas, rng):
        if d % n_cabezas:
            raise ConfiguracionError(f'd_model={d} no es divisible por n_heads={n_cabezas}')
        self.n_cabezas = n_cabezas
        self.norma = NormaCapa(d)
        self.w_q = Lineal(d, d, rng)
        self.w_k = Lineal(d, d, rng)
        self.w_v = Lineal(d, d, rng)
        self.w_o = Lineal(d, d, rng)


# ==================== OPERACIONES ====================
def guided_self_attention(x, alpha_high, params, devolver_pesos=False):
    """
    x: T×M×D; alpha_high: T×M o None (sin guía).

    A = softmax(Q·Kᵀ/√D + α_high[t] sobre cada clave); salida = x + (A·V)·W_o
    con Q, K, V proyectados desde la norma de x.
    """
    x = tg.as_tensor(x)
    T, M, D = x.shape
    h = params.norma(x)
    q, k, v = params.w_q(h), params.w_k(h), params.w_v(h)
    logits = tg.matmul(q, tg.transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(D))
    if alpha_high is not None:
        guia = np.asarray(getattr(alpha_high, 'data', alpha_high))
        if guia.shape != (T, M):
            raise DimensionError(f'alpha_high {guia.shape} no coincide con el video {(T, M)}')
        logits = logits + guia.reshape(T, 1, M)
    pesos = tg.softmax(logits, axis=-1)
    salida = x + params.w_o(tg.matmul(pesos, v))
    return (salida, pesos) if devolver_pesos else salida


def guided_cross_attention(x, z_query, alpha_mid, params, devolver_pesos=False):
    """
    x: T×M×D (preguntas), z_query: N×D (claves y valores), alpha_mid: N×R o None.

    Cabeza r: A^r = softmax(Q^r·K^rᵀ/√(D/R) + α_mid[:, r] en cada fila).
    Las cabezas se concatenan y se proyectan; salida con residual.
    """
    x, z_query = tg.as_tensor(x), tg.as_tensor(z_query)
    T, M, D = x.shape
    N = z_query.shape[0]
    R = params.n_cabezas
    dh = D // R

    h = params.norma(x)
    q = tg.transpose(tg.reshape(params.w_q(h), (T, M, R, dh)), (0, 2, 1, 3))          # T×R×M×dh
    k = tg.transpose(tg.reshape(params.w_k(z_query), (N, R, dh)), (1, 2, 0))          # R×dh×N
    v = tg.transpose(tg.reshape(params.w_v(z_query), (N, R, dh)), (1, 0, 2))          # R×N×dh

    logits = tg.matmul(q, k) * (1.0 / math.sqrt(dh))                                  # T×R×M×N
    if alpha_mid is not None:
        guia = np.asarray(getattr(alpha_mid, 'data', alpha_mid))
        if guia.ndim != 2 or guia.shape[1] != R:
            raise ConfiguracionError(
                f'Hay {R} cabezas de atención y {guia.shape[-1] if guia.ndim else 0} mapas de guía'
            )
        if guia.shape[0] != N:
            raise DimensionError(f'alpha_mid tiene {guia.shape[0]} tokens, la consulta {N}')
        logits = logits + guia.T[None, :, None, :]
    pesos = tg.softmax(logits, axis=-1)
    contexto = tg.reshape(tg.transpose(tg.matmul(pesos, v), (0, 2, 1, 3)), (T, M, D))
    salida = x + params.w_o(contexto)
    return (salida, pesos) if devolver_pesos else salida


def temporal_shift(w, shift_fraction):
    """
    Desplaza ⌊D·f/2⌋ canales hacia adelante en el tiempo (t → t+1) y el
    bloque siguiente hacia atrás (t → t−1); los bordes se rellenan con ceros.
    """
    if not 0.0 < shift_fraction <= 0.5:
        raise ConfiguracionError(f'shift_fraction fuera de (0, 0.5]: {shift_fraction}')
    w = tg.as_tensor(w)
    T, M, D = w.shape
    pliegue = int(math.floor(D * shift_fraction / 2.0))
    if pliegue == 0:
        return w

    cero = tg.zeros((1, M, pliegue))
    if T > 1:
        adelante = tg.concatenate([cero, w[:-1, :, :pliegue]], axis=0)
        atras = tg.concatenate([w[1:, :, pliegue:2 * pliegue], cero], axis=0)
    else:
        adelante = tg.zeros((T, M, pliegue))
        atras = tg.zeros((T, M, pliegue))
    return tg.concatenate([adelante, atras, w[:, :, 2 * pliegue:]], axis=2)
