# apps/tensores/optim.py
"""
Optimizador AdamW y programación lineal del learning rate.

Valores por defecto de la tabla de hiperparámetros: β₁=0.9, β₂=0.999,
weight decay 0.005, warm-up lineal seguido de decaimiento lineal.
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)


class ProgramaLineal:
    """Warm-up lineal durante `warmup` pasos y decaimiento lineal hasta 0 en `total` pasos"""

    def __init__(self, lr_base, warmup, total):
        self.lr_base = float(lr_base)
        self.warmup = max(int(warmup), 0)
        self.total = max(int(total), 1)

    def __call__(self, paso):
        if self.warmup and paso < self.warmup:
            return self.lr_base * (paso + 1) / self.warmup
        restantes = max(self.total - paso, 0)
        return self.lr_base * restantes / max(self.total - self.warmup, 1)


class AdamW:
    """
    AdamW con decaimiento de pesos desacoplado.

    parametros: dict nombre → Tensor (requires_grad=True)
    """

    def __init__(self, parametros, lr=3e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.005, programa=None):
        self.parametros = dict(parametros)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.programa = programa
        self.paso = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.parametros.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in self.parametros.items()}

    def zero_grad(self):
        for p in self.parametros.values():
            p.zero_grad()

    def lr_actual(self):
        return self.programa(self.paso) if self.programa else self.lr

    def step(self):
        """Aplica una actualización con los gradientes acumulados"""
        lr = self.lr_actual()
        self.paso += 1
        correccion1 = 1.0 - self.beta1 ** self.paso
        correccion2 = 1.0 - self.beta2 ** self.paso

        for nombre, p in self.parametros.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[nombre] = self.beta1 * self._m[nombre] + (1.0 - self.beta1) * g
            v = self._v[nombre] = self.beta2 * self._v[nombre] + (1.0 - self.beta2) * g * g
            m_hat = m / correccion1
            v_hat = v / correccion2
            p.data = (p.data * (1.0 - lr * self.weight_decay)
                      - lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

        logger.debug(f'AdamW paso {self.paso} lr={lr:.6g}')
        return lr
