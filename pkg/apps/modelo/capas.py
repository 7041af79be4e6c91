# apps/modelo/capas.py
"""
Capas entrenables sobre el kernel de tensores.
"""

import numpy as np

from apps.tensores import tensor as tg
from apps.tensores.tensor import Tensor


class Modulo:
    """
    Base de las capas: los parámetros son los atributos Tensor con
    requires_grad; los submódulos (y listas de submódulos) se recorren
    con nombres punteados.
    """

    def parametros(self, prefijo=''):
        encontrados = {}
        for nombre, valor in vars(self).items():
            clave = f'{prefijo}{nombre}'
            if isinstance(valor, Tensor) and valor.requires_grad:
                encontrados[clave] = valor
            elif isinstance(valor, Modulo):
                encontrados.update(valor.parametros(f'{clave}.'))
            elif isinstance(valor, (list, tuple)):
                for i, elemento in enumerate(valor):
                    if isinstance(elemento, Modulo):
                        encontrados.update(elemento.parametros(f'{clave}.{i}.'))
        return encontrados

    def zero_grad(self):
        for p in self.parametros().values():
            p.zero_grad()


def parametro(valores):
    return Tensor(valores, requires_grad=True)


class Lineal(Modulo):
    """y = x·W + b, con W inicializada Xavier-uniforme"""

    def __init__(self, d_entrada, d_salida, rng, sesgo=True, escala=1.0):
        limite = escala * np.sqrt(6.0 / (d_entrada + d_salida))
        self.peso = parametro(rng.uniform(-limite, limite, size=(d_entrada, d_salida)))
        self.sesgo = parametro(np.zeros(d_salida)) if sesgo else None

    def __call__(self, x):
        x = tg.as_tensor(x)
        if x.ndim > 2:
            # un solo GEMM sobre los tokens aplanados
            forma = x.shape[:-1] + (self.peso.shape[1],)
            y = tg.reshape(tg.matmul(tg.reshape(x, (-1, x.shape[-1])), self.peso), forma)
        else:
            y = tg.matmul(x, self.peso)
        return y + self.sesgo if self.sesgo is not None else y


class NormaCapa(Modulo):

    def __init__(self, d, eps=1e-5):
        self.gamma = parametro(np.ones(d))
        self.beta = parametro(np.zeros(d))
        self.eps = eps

    def __call__(self, x):
        return tg.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class Perceptron(Modulo):
    """Dos capas lineales con GELU en medio"""

    def __init__(self, d_entrada, d_oculta, d_salida, rng):
        self.entrada = Lineal(d_entrada, d_oculta, rng)
        self.salida = Lineal(d_oculta, d_salida, rng)

    def __call__(self, x):
        return self.salida(tg.gelu(self.entrada(x)))
