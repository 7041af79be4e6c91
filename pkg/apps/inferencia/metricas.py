# apps/inferencia/metricas.py
"""
Métricas de evaluación: tAP₂₅, stAP₂₅, recovery y success.

- tIoU: frames compartidos / frames de la unión de los segmentos.
- stIoU: Σ intersecciones / Σ uniones sobre la unión de los segmentos; un
  frame con una sola caja aporta 0 a la intersección y el área de esa caja
  a la unión.
- AP: un candidato por consulta ordenado por π_h (empates por query_id),
  interpolación sobre todos los puntos.
"""

from dataclasses import dataclass
import logging

import numpy as np

from apps.geometria.cajas import interseccion, iou_por_frame
from hero_vql.excepciones import ConsultaError

logger = logging.getLogger(__name__)


class MetricaConstants:
    UMBRAL_AP = 0.25
    UMBRAL_RECOVERY = 0.5
    UMBRAL_SUCCESS = 0.05


@dataclass(frozen=True)
class EvalResult:
    """Valores en [0, 1]; se reportan ×100"""
    tap25: float
    stap25: float
    recovery_pct: float
    success_pct: float

    def como_porcentajes(self):
        return {
            'tAP25': round(100.0 * self.tap25, 4),
            'stAP25': round(100.0 * self.stap25, 4),
            'recovery': round(100.0 * self.recovery_pct, 4),
            'success': round(100.0 * self.success_pct, 4),
        }


# ==================== IoU TEMPORAL Y ESPACIO-TEMPORAL ====================
def tiou(segmento_a, segmento_b):
    """IoU de segmentos inclusivos en cantidad de frames"""
    comun = max(min(segmento_a[1], segmento_b[1]) - max(segmento_a[0], segmento_b[0]) + 1, 0)
    largo_a = segmento_a[1] - segmento_a[0] + 1
    largo_b = segmento_b[1] - segmento_b[0] + 1
    return comun / (largo_a + largo_b - comun)


def stiou(track_a, track_b):
    """Σ_t |A_t ∩ B_t| / Σ_t |A_t ∪ B_t| sobre los frames de ambos tracks"""
    if track_a is None or track_b is None:
        return 0.0
    cajas_a, cajas_b = track_a.cajas_por_frame(), track_b.cajas_por_frame()
    suma_inter = suma_union = 0.0
    for t in set(cajas_a) | set(cajas_b):
        a, b = cajas_a.get(t), cajas_b.get(t)
        if a is not None and b is not None:
            inter = interseccion(a, b)
            suma_inter += inter
            suma_union += a.area + b.area - inter
        else:
            suma_union += (a or b).area
    return suma_inter / suma_union if suma_union > 0 else 0.0


# ==================== AP ====================
def interpolated_prec_rec(precision, recall):
    """AP con interpolación sobre todos los puntos"""
    mprec = np.hstack([[0.0], precision, [0.0]])
    mrec = np.hstack([[0.0], recall, [1.0]])
    for i in range(len(mprec) - 1)[::-1]:
        mprec[i] = max(mprec[i], mprec[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mprec[idx]))


def average_precision(aciertos, n_gt):
    """aciertos: booleanos de los candidatos ya ordenados por puntaje"""
    if n_gt == 0 or len(aciertos) == 0:
        return 0.0
    tp = np.cumsum(np.asarray(aciertos, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(aciertos, dtype=np.float64))
    return interpolated_prec_rec(tp / (tp + fp), tp / n_gt)


def ranking(preds):
    """query_ids con predicción no vacía, por puntaje descendente y query_id"""
    candidatos = [q for q, track in preds.items() if track is not None]
    return sorted(candidatos, key=lambda q: (-preds[q].peak_score, q))


# ==================== EVALUACIÓN ====================
def evaluate(preds, gts):
    """
    preds: dict query_id → ResponseTrack o None; gts: dict query_id → ResponseTrack.
    """
    if set(preds) != set(gts):
        faltan = sorted(set(gts) - set(preds))
        sobran = sorted(set(preds) - set(gts))
        raise ConsultaError(f'Consultas distintas: faltan {faltan[:5]}, sobran {sobran[:5]}')
    if not gts:
        raise ConsultaError('No hay consultas que evaluar')

    orden = ranking(preds)
    aciertos_t = [tiou(preds[q].segment, gts[q].segment) >= MetricaConstants.UMBRAL_AP for q in orden]
    aciertos_st = [stiou(preds[q], gts[q]) >= MetricaConstants.UMBRAL_AP for q in orden]

    recuperados = total_gt = 0
    exitos = 0
    for q in sorted(gts):
        gt, pred = gts[q], preds[q]
        cajas_pred = pred.cajas_por_frame() if pred is not None else {}
        alineadas = [cajas_pred.get(t) for t in gt.frames]
        recuperados += int(np.sum(iou_por_frame(alineadas, gt.boxes) > MetricaConstants.UMBRAL_RECOVERY))
        total_gt += len(gt.boxes)
        if stiou(pred, gt) > MetricaConstants.UMBRAL_SUCCESS:
            exitos += 1

    resultado = EvalResult(
        tap25=average_precision(aciertos_t, len(gts)),
        stap25=average_precision(aciertos_st, len(gts)),
        recovery_pct=recuperados / total_gt if total_gt else 0.0,
        success_pct=exitos / len(gts),
    )
    logger.info(f'Evaluación de {len(gts)} consultas: {resultado.como_porcentajes()}')
    return resultado
