# apps/aumentos/egoaug.py
"""
Aumentación egocéntrica.

QueryAug: reemplaza la consulta por otra instancia GT del mismo objeto.
MotionAug: reordena los frames GT del clip maximizando el desplazamiento
de la caja entre frames consecutivos.
"""

from dataclasses import replace
import logging

import numpy as np

from apps.geometria.cajas import displacement
from hero_vql.excepciones import ConfiguracionError
from .muestras import AugmentedPair, aplicar_permutacion

logger = logging.getLogger(__name__)


# ==================== CONSTANTES ====================
class EstrategiasConsulta:
    ALEATORIA = 'random'
    MENOS_SIMILAR = 'least_similar'
    MAS_SIMILAR = 'most_similar'
    TODAS = (ALEATORIA, MENOS_SIMILAR, MAS_SIMILAR)


class EstrategiasMovimiento:
    MAX_DESPLAZAMIENTO = 'max_displacement'
    ALEATORIA = 'random'
    NINGUNA = 'none'
    TODAS = (MAX_DESPLAZAMIENTO, ALEATORIA, NINGUNA)


# ==================== QUERYAUG ====================
def query_aug(sample, p, rng, estrategia=EstrategiasConsulta.ALEATORIA, similitud=None):
    """
    Con probabilidad p devuelve una instancia de sample.object_instances,
    si no, la consulta original.

    similitud(a, b) -> float es necesaria para las estrategias por similitud.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfiguracionError(f'Probabilidad de QueryAug fuera de [0, 1]: {p}')
    if estrategia not in EstrategiasConsulta.TODAS:
        raise ConfiguracionError(f'Estrategia de QueryAug desconocida: {estrategia}')

    reemplazar = rng.random() < p
    if not reemplazar:
        return sample.query_ref

    instancias = list(sample.object_instances)
    if not instancias:
        logger.warning(f'Clip {sample.clip_id}: sin instancias del objeto, se conserva la consulta original')
        return sample.query_ref

    if estrategia == EstrategiasConsulta.ALEATORIA:
        return instancias[int(rng.integers(len(instancias)))]

    if similitud is None:
        raise ConfiguracionError(f'La estrategia {estrategia} requiere una función de similitud')
    puntajes = np.array([similitud(sample.query_ref, inst) for inst in instancias])
    elegido = np.argmin(puntajes) if estrategia == EstrategiasConsulta.MENOS_SIMILAR else np.argmax(puntajes)
    return instancias[int(elegido)]


# ==================== MOTIONAUG ====================
def orden_max_desplazamiento(cajas):
    """
    Orden voraz: parte de la primera caja y agrega cada vez la restante con
    mayor desplazamiento total respecto de la última elegida. Empates: la de
    menor índice.
    """
    restantes = list(range(1, len(cajas)))
    orden = [0] if cajas else []
    while restantes:
        ultima = cajas[orden[-1]]
        mejor, mejor_total = restantes[0], displacement(ultima, cajas[restantes[0]]).total
        for k in restantes[1:]:
            total = displacement(ultima, cajas[k]).total
            if total > mejor_total:
                mejor, mejor_total = k, total
        orden.append(mejor)
        restantes.remove(mejor)
    return orden


def motion_aug(sample, estrategia=EstrategiasMovimiento.MAX_DESPLAZAMIENTO, rng=None):
    """
    Reordena los frames GT entre las posiciones GT; los demás frames quedan en
    su lugar. Retorna el AugmentedPair con permutation[frame original] = posición.
    """
    if estrategia not in EstrategiasMovimiento.TODAS:
        raise ConfiguracionError(f'Estrategia de MotionAug desconocida: {estrategia}')
    gt = sample.indices_gt
    if not gt:
        raise ConfiguracionError(f'Clip {sample.clip_id}: MotionAug requiere al menos un frame GT')

    cajas = [sample.gt_boxes[i] for i in gt]
    if estrategia == EstrategiasMovimiento.MAX_DESPLAZAMIENTO:
        orden = orden_max_desplazamiento(cajas)
    elif estrategia == EstrategiasMovimiento.ALEATORIA:
        if rng is None:
            raise ConfiguracionError('MotionAug aleatorio requiere un generador')
        orden = [int(k) for k in rng.permutation(len(gt))]
    else:
        orden = list(range(len(gt)))

    permutation = list(range(sample.T))
    for posicion, k in zip(gt, orden):
        permutation[gt[k]] = posicion

    reordered = replace(
        sample,
        clip_id=f'{sample.clip_id}_motionaug',
        frames=tuple(aplicar_permutacion(sample.frames, permutation)),
        gt_boxes=tuple(aplicar_permutacion(sample.gt_boxes, permutation)),
        occurrence=tuple(aplicar_permutacion(sample.occurrence, permutation)),
        valid=tuple(aplicar_permutacion(sample.valid, permutation)),
    )
    logger.debug(f'MotionAug {sample.clip_id}: orden GT {[gt[k] for k in orden]}')
    return AugmentedPair(
        original=sample,
        reordered=reordered,
        permutation=tuple(permutation),
        query_used=sample.query_ref,
    )


def make_training_pair(sample, p, rng, estrategia_consulta=EstrategiasConsulta.ALEATORIA,
                       estrategia_movimiento=EstrategiasMovimiento.MAX_DESPLAZAMIENTO, similitud=None):
    """QueryAug seguido de MotionAug; ambos clips comparten la consulta resultante"""
    consulta = query_aug(sample, p, rng, estrategia=estrategia_consulta, similitud=similitud)
    return motion_aug(sample.con_consulta(consulta), estrategia=estrategia_movimiento, rng=rng)


# ==================== MÉTRICAS DEL REORDENAMIENTO ====================
def desplazamiento_acumulado(cajas):
    """Suma de Δ_total entre cajas consecutivas de una secuencia"""
    return float(sum(displacement(a, b).total for a, b in zip(cajas, cajas[1:])))
