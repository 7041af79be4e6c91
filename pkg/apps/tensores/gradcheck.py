# apps/tensores/gradcheck.py
"""
Chequeo de gradientes por diferencias finitas centrales.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tg
from .tensor import Tensor


@dataclass
class ResultadoGradiente:
    nombre: str
    error_relativo: float
    tolerancia: float

    @property
    def aprobado(self):
        return bool(np.isfinite(self.error_relativo) and self.error_relativo < self.tolerancia)


def error_relativo(analitico, numerico, piso=1e-6):
    """Máximo de |a − n| / max(|a| + |n|, piso) elemento a elemento"""
    analitico = np.asarray(analitico, dtype=np.float64)
    numerico = np.asarray(numerico, dtype=np.float64)
    denominador = np.maximum(np.abs(analitico) + np.abs(numerico), piso)
    return float(np.max(np.abs(analitico - numerico) / denominador)) if analitico.size else 0.0


def gradiente_numerico(funcion, tensores, indice, paso=1e-3):
    """Derivada central de funcion() respecto de tensores[indice], elemento a elemento"""
    objetivo = tensores[indice]
    plano = objetivo.data.reshape(-1)
    resultado = np.zeros(plano.shape, dtype=np.float64)
    for i in range(plano.size):
        original = plano[i]
        plano[i] = original + paso
        arriba = float(funcion(*tensores).data.sum())
        plano[i] = original - paso
        abajo = float(funcion(*tensores).data.sum())
        plano[i] = original
        resultado[i] = (arriba - abajo) / (2.0 * paso)
    return resultado.reshape(objetivo.shape)


def verificar_gradiente(funcion, tensores, paso=1e-3, indices=None):
    """
    Compara el gradiente analítico de sum(funcion(*tensores)) con diferencias
    finitas centrales. Retorna el máximo error relativo sobre los tensores
    indicados (todos por defecto).
    """
    for t in tensores:
        t.requires_grad = True
        t.zero_grad()
    salida = funcion(*tensores)
    raiz = salida if salida.size == 1 else salida.sum()
    raiz.backward()

    indices = range(len(tensores)) if indices is None else indices
    peor = 0.0
    for i in indices:
        analitico = tensores[i].grad if tensores[i].grad is not None else np.zeros_like(tensores[i].data)
        numerico = gradiente_numerico(funcion, tensores, i, paso=paso)
        peor = max(peor, error_relativo(analitico, numerico))
    return peor


def tensor_aleatorio(rng, forma, bajo=-2.0, alto=2.0):
    """Tensor con valores uniformes en [bajo, alto] que participa en la cinta"""
    return Tensor(rng.uniform(bajo, alto, size=forma), requires_grad=True)


# Casos por operación: funciones escalares de dos tensores 3×3
CASOS_OPERACIONES = {
    'add': lambda a, b: (a + b).sum(),
    'sub': lambda a, b: (a - b * 2.0).sum(),
    'mul': lambda a, b: (a * b).sum(),
    'div': lambda a, b: (a / (b * b + 1.0)).sum(),
    'matmul': lambda a, b: (a @ b.transpose()).sum(),
    'exp': lambda a, b: (tg.exp(a) * b).sum(),
    'tanh': lambda a, b: (tg.tanh(a) * b).sum(),
    'gelu': lambda a, b: (tg.gelu(a) * b).sum(),
    'sigmoid': lambda a, b: (tg.sigmoid(a) * b).sum(),
    'log_sigmoid': lambda a, b: (tg.log_sigmoid(a) * b).sum(),
    'softmax': lambda a, b: (tg.softmax(a, axis=1) * b).sum(),
    'log_softmax': lambda a, b: (tg.log_softmax(a, axis=1) * b).sum(),
    'pow': lambda a, b: ((a * a + 1.0) ** 1.5 * b).sum(),
    'log': lambda a, b: (tg.log(a * a + 0.5) * b).sum(),
    'mean': lambda a, b: (a.mean(axis=0) * b.sum(axis=0)).sum(),
    'transpose': lambda a, b: (a.transpose() @ b).sum(),
    'reshape': lambda a, b: (a.reshape(-1) * b.reshape(-1)).sum(),
    'getitem': lambda a, b: (a[1:, :2] * b[:2, 1:]).sum(),
    'take': lambda a, b: (tg.take(a, [2, 0, 1], axis=0) * b).sum(),
    'concat': lambda a, b: (tg.concatenate([a, b], axis=1) ** 2).sum(),
    'layer_norm': lambda a, b: (tg.layer_norm(a, b[0], b[1]) * b).sum(),
    'entropia': lambda a, b: (tg.entropia(a, axis=1) * b[:, 0]).sum(),
}
