# apps/perdidas/perdidas.py
"""
Funciones de pérdida.

- Tarea: L1 + GIoU sobre los frames con ocurrencia y focal (núcleo BCE de
  objetivo suave) sobre todos los frames válidos.
- Consistencia: la misma pérdida de tarea con el clip original, sin
  gradiente, como objetivo del clip reordenado realineado.
- TAG: entropía por token (a minimizar) y entropía de los mapas promediados
  (a maximizar).
- Total: β·L_task + γ·L_task' + λ·L_CT + μ·L_TAG.
"""

from dataclasses import dataclass, fields
import logging

import numpy as np

from apps.aumentos.muestras import inversa, validar_permutacion
from apps.guias.guia import tag_score_maps
from apps.tensores import tensor as tg
from apps.tensores.tensor import Tensor
from hero_vql.excepciones import ConfiguracionError, DimensionError

logger = logging.getLogger(__name__)


# ==================== TIPOS ====================
@dataclass(frozen=True)
class LossWeights:
    beta: float = 1.0 / 6.0
    gamma: float = 1.0 / 6.0
    lambda_ct: float = 2.0 / 3.0
    mu: float = 0.1
    lambda_token: float = 1.0
    lambda_map: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    w_l1: float = 1.0
    w_giou: float = 1.0

    def __post_init__(self):
        negativos = [f.name for f in fields(self) if getattr(self, f.name) < 0]
        if negativos:
            raise ConfiguracionError(f'Pesos de pérdida negativos: {negativos}')

    @classmethod
    def desde_config(cls, cfg):
        return cls(**{f.name: getattr(cfg, f.name) for f in fields(cls)})


@dataclass
class TaskTargets:
    """
    cajas: T×4 [y1, x1, y2, x2] (filas sin caja en cero)
    presentes: T bool, hay caja GT en el frame
    occurrence: T en [0, 1] (etiqueta dura o suave)
    validos: T bool, False en frames de relleno
    """
    cajas: np.ndarray
    presentes: np.ndarray
    occurrence: np.ndarray
    validos: np.ndarray = None

    def __post_init__(self):
        self.cajas = np.asarray(self.cajas, dtype=np.float64).reshape(-1, 4)
        self.presentes = np.asarray(self.presentes, dtype=bool)
        self.occurrence = np.asarray(self.occurrence, dtype=np.float64)
        T = self.cajas.shape[0]
        if self.validos is None:
            self.validos = np.ones(T, dtype=bool)
        self.validos = np.asarray(self.validos, dtype=bool)
        if not (self.presentes.shape == self.occurrence.shape == self.validos.shape == (T,)):
            raise DimensionError(f'Objetivos con longitudes inconsistentes para {T} frames')
        if np.any(self.presentes & (self.occurrence <= 0)):
            raise ConfiguracionError('Hay cajas GT en frames con ocurrencia 0')

    @property
    def T(self):
        return self.cajas.shape[0]

    @classmethod
    def desde_clip(cls, sample):
        cajas = np.zeros((sample.T, 4))
        for i, caja in enumerate(sample.gt_boxes):
            if caja is not None:
                cajas[i] = caja.como_lista()
        return cls(cajas, [c is not None for c in sample.gt_boxes], sample.etiquetas(), sample.mascara_valida())

    @classmethod
    def desde_predicciones(cls, preds, validos=None):
        """Objetivo suave a partir de predicciones (sin gradiente)"""
        return cls(preds.cajas.data, np.ones(preds.T, dtype=bool), preds.scores, validos)


# ==================== COMPONENTES ====================
def giou_tensor(pred, gt):
    """GIoU fila a fila entre esquinas K×4 (pred diferenciable, gt constante)"""
    gt = tg.as_tensor(gt)
    py1, px1, py2, px2 = (pred[:, i] for i in range(4))
    gy1, gx1, gy2, gx2 = (gt[:, i] for i in range(4))
    area_p = (py2 - py1) * (px2 - px1)
    area_g = (gy2 - gy1) * (gx2 - gx1)
    alto = tg.relu(tg.minimum(py2, gy2) - tg.maximum(py1, gy1))
    ancho = tg.relu(tg.minimum(px2, gx2) - tg.maximum(px1, gx1))
    interseccion = alto * ancho
    union = tg.maximum(area_p + area_g - interseccion, 1e-12)
    envolvente = tg.maximum(
        (tg.maximum(py2, gy2) - tg.minimum(py1, gy1)) * (tg.maximum(px2, gx2) - tg.minimum(px1, gx1)),
        1e-12,
    )
    return interseccion / union - (envolvente - union) / envolvente


def termino_cajas(cajas_pred, targets, weights):
    """w_l1·mean|pred − gt| + w_giou·mean(1 − GIoU) sobre frames con ocurrencia"""
    indices = np.flatnonzero(targets.presentes & (targets.occurrence > 0) & targets.validos)
    if indices.size == 0:
        return Tensor(0.0)
    pred = tg.take(cajas_pred, indices, axis=0)
    gt = targets.cajas[indices]
    l1 = tg.mean(tg.abs_(pred - gt))
    giou = tg.mean(1.0 - giou_tensor(pred, gt))
    return weights.w_l1 * l1 + weights.w_giou * giou


def focal(logits, objetivo, weights, validos=None):
    """
    α·|t − p|^γ·BCE(t, p) promediada sobre los frames válidos, con el BCE
    calculado desde los logits. Con γ = 0 es α·BCE.
    """
    objetivo = np.asarray(objetivo, dtype=np.float64)
    validos = np.ones(objetivo.shape, dtype=bool) if validos is None else np.asarray(validos, dtype=bool)
    indices = np.flatnonzero(validos)
    if indices.size == 0:
        return Tensor(0.0)
    z = tg.take(logits, indices, axis=0)
    t = objetivo[indices]
    bce = -(t * tg.log_sigmoid(z) + (1.0 - t) * tg.log_sigmoid(-z))
    if weights.focal_gamma > 0:
        diferencia = t - tg.sigmoid(z)
        bce = tg.power(diferencia * diferencia, weights.focal_gamma / 2.0) * bce
    return weights.focal_alpha * tg.mean(bce)


# ==================== PÉRDIDAS ====================
def task_loss(targets, preds, weights):
    """Término de cajas + término de puntaje"""
    if targets.T != preds.T:
        raise DimensionError(f'{targets.T} objetivos para {preds.T} predicciones')
    return termino_cajas(preds.cajas, targets, weights) + focal(preds.logits, targets.occurrence, weights,
                                                                  targets.validos)


def ct_loss(preds_original, preds_reordered, permutation, weights, validos=None):
    """
    Realinea Ĉ′ al orden original (permutation[i] = posición del frame i) y lo
    compara con Ĉ sin gradiente usado como objetivo.
    """
    perm = validar_permutacion(permutation, preds_original.T)
    if preds_reordered.T != preds_original.T:
        raise DimensionError(f'Clips de {preds_original.T} y {preds_reordered.T} frames')
    alineadas = preds_reordered.tomar(perm)
    objetivo = TaskTargets.desde_predicciones(preds_original.detenidas(), validos)
    return task_loss(objetivo, alineadas, weights)


def tag_loss(s_tag, weights):
    """λ_token·(1/N)Σ H(softmax(S[i,:])) − λ_map·H(softmax((1/N)Σ S[i,:]))"""
    s_tag = tg.as_tensor(s_tag)
    if s_tag.ndim != 2 or s_tag.shape[1] < 2:
        raise ConfiguracionError(f'La pérdida TAG requiere R ≥ 2 mapas, llegó {s_tag.shape}')
    l_token = tg.mean(tg.entropia(s_tag, axis=1))
    l_map = -tg.entropia(tg.mean(s_tag, axis=0), axis=0)
    return weights.lambda_token * l_token + weights.lambda_map * l_map


def total_loss(pair, preds_original, preds_reordered, s_tag, weights):
    """
    Pérdida completa de entrenamiento. Sin clip reordenado (EgoACT apagado) queda
    (β + γ)·L_task + μ·L_TAG. Retorna (Tensor escalar, dict de componentes).
    """
    objetivo = TaskTargets.desde_clip(pair.original)
    l_task = task_loss(objetivo, preds_original, weights)
    l_tag = tag_loss(s_tag, weights) if s_tag is not None else Tensor(0.0)

    if preds_reordered is None:
        total = (weights.beta + weights.gamma) * l_task + weights.mu * l_tag
        l_task_r = l_ct = Tensor(0.0)
    else:
        l_task_r = task_loss(TaskTargets.desde_clip(pair.reordered), preds_reordered, weights)
        l_ct = ct_loss(preds_original, preds_reordered, pair.permutation, weights,
                       validos=pair.original.mascara_valida())
        total = (weights.beta * l_task + weights.gamma * l_task_r
                 + weights.lambda_ct * l_ct + weights.mu * l_tag)

    componentes = {
        'L_task': l_task.item(),
        "L_task'": l_task_r.item(),
        'L_CT': l_ct.item(),
        'L_TAG': l_tag.item(),
        'total': total.item(),
    }
    return total, componentes


# ==================== PASO COMPLETO ====================
def mapas_tag(preds, R, tau, validos=None):
    """S_TAG desde los tokens de consulta adaptados (centrados) y la salida Y del decodificador"""
    consulta = preds.consulta
    centrada = consulta - tg.mean(consulta, axis=0, keepdims=True)
    y = preds.y.data
    if validos is not None:
        y = y[np.asarray(validos, dtype=bool)]
    return tag_score_maps(centrada, y, R, tau)


def evaluar_par(modelo, feats, guias, pair, weights, usar_egoact=True, usar_tag=True):
    """
    Forward del clip original y, con EgoACT, del reordenado (features y
    α_high permutadas, α_mid compartida); retorna (total, componentes).
    """
    preds = modelo(feats, guias)
    preds_r = None
    if usar_egoact:
        inv = inversa(pair.permutation)
        preds_r = modelo(feats.permutada(inv), guias.permutada(inv) if guias is not None else None)
    s_tag = None
    if usar_tag and weights.mu > 0:
        s_tag = mapas_tag(preds, modelo.cfg.n_heads, guias.tau if guias is not None else 1.0,
                          pair.original.mascara_valida())
    return total_loss(pair, preds, preds_r, s_tag, weights)
