# apps/consultas/verificacion.py
"""
Suite de gradientes por diferencias finitas que corre el comando `gradcheck`.

Todo en float64: operaciones y pérdidas con tolerancia 1e-3, y el paso
completo (modelo + guías + pérdida total) sobre la configuración mínima
(T=4, M=9, N=4, D=8, R=2) con tolerancia 1e-2.
"""

from types import SimpleNamespace
import logging

import numpy as np

from apps.aumentos.egoaug import motion_aug
from apps.aumentos.muestras import ClipSample, QueryRef
from apps.geometria.cajas import BBox
from apps.guias.guia import EncoderFeatures, build_guides, mid_level_guide, pc_decompose, tag_score_maps
from apps.modelo.atencion import (
    AtencionCruzadaGuiada,
    AtencionPropiaGuiada,
    guided_cross_attention,
    guided_self_attention,
    temporal_shift,
)
from apps.modelo.localizador import DecoderConfig, Localizador, Predictions
from apps.perdidas.perdidas import LossWeights, TaskTargets, ct_loss, evaluar_par, giou_tensor, tag_loss, \
    task_loss, total_loss
from apps.tensores.gradcheck import CASOS_OPERACIONES, ResultadoGradiente, tensor_aleatorio, verificar_gradiente
from apps.tensores.tensor import Tensor, precision

logger = logging.getLogger(__name__)


class VerificacionConstants:
    TOLERANCIA_OPERACION = 1e-3
    TOLERANCIA_COMPLETA = 1e-2
    PASO_COMPLETO = 1e-5


def _esquinas(rng, T):
    y1, x1 = rng.uniform(0, 0.5, size=(2, T))
    h, w = rng.uniform(0.05, 0.45, size=(2, T))
    return np.stack([y1, x1, y1 + h, x1 + w], axis=1)


def clip_minimo():
    """Cuatro frames GT que MotionAug reordena 0, 3, 1, 2"""
    cajas = (BBox(0.1, 0.1, 0.3, 0.3), BBox(0.1, 0.15, 0.3, 0.35), BBox(0.4, 0.4, 0.6, 0.6), BBox(0.7, 0.7, 0.9, 0.9))
    return ClipSample('gradcheck', 'v', (0, 1, 2, 3), cajas, (True,) * 4, QueryRef('v', 0, cajas[0], 'obj'))


def features_minimas(rng, T=4, grid=(3, 3), N=4, D=8):
    return EncoderFeatures(
        z_video=rng.normal(size=(T, grid[0] * grid[1], D)),
        z_query=rng.normal(size=(N, D)),
        z_cls=rng.normal(size=D),
        w_q=np.linalg.qr(rng.normal(size=(D, D)))[0],
        w_k=np.linalg.qr(rng.normal(size=(D, D)))[0],
        grid=grid,
    )


def _operaciones(rng):
    for nombre, funcion in CASOS_OPERACIONES.items():
        a, b = tensor_aleatorio(rng, (3, 3)), tensor_aleatorio(rng, (3, 3))
        yield nombre, verificar_gradiente(funcion, [a, b]), VerificacionConstants.TOLERANCIA_OPERACION


def _capas(rng):
    tol = VerificacionConstants.TOLERANCIA_OPERACION
    propia = AtencionPropiaGuiada(8, rng)
    guia = rng.uniform(size=(2, 9))
    pesos = rng.normal(size=(2, 9, 8))
    x = Tensor(rng.normal(size=(2, 9, 8)))
    yield 'guided_self_attention', verificar_gradiente(
        lambda t: (guided_self_attention(t, guia, propia) * pesos).sum(), [x]), tol

    cruzada = AtencionCruzadaGuiada(8, 2, rng)
    alpha_mid = rng.uniform(size=(4, 2))
    consulta = Tensor(rng.normal(size=(4, 8)))
    x = Tensor(rng.normal(size=(2, 9, 8)))
    yield 'guided_cross_attention', verificar_gradiente(
        lambda t, q: (guided_cross_attention(t, q, alpha_mid, cruzada) * pesos).sum(), [x, consulta]), tol

    w = Tensor(rng.normal(size=(4, 3, 8)))
    pesos_w = rng.normal(size=(4, 3, 8))
    yield 'temporal_shift', verificar_gradiente(lambda t: (temporal_shift(t, 0.25) * pesos_w).sum(), [w]), tol

    centrada, base = pc_decompose(rng.normal(size=(6, 8)), 2)
    pesos_m = rng.normal(size=(6, 2))
    yield 'mid_level_guide', verificar_gradiente(
        lambda c: (mid_level_guide(c, base, 1.0) * pesos_m).sum(), [Tensor(centrada)]), tol
    y = rng.normal(size=(3, 4, 8))
    yield 'tag_score_maps', verificar_gradiente(
        lambda c: (tag_score_maps(c, y, 2, 1.0) * pesos_m).sum(), [Tensor(centrada)]), tol


def _perdidas(rng):
    tol = VerificacionConstants.TOLERANCIA_OPERACION
    pesos = LossWeights()
    clip = clip_minimo()
    par = motion_aug(clip)
    objetivos = TaskTargets.desde_clip(clip)

    gt = _esquinas(rng, 4)
    yield 'giou', verificar_gradiente(lambda c: giou_tensor(c, gt).sum(), [Tensor(_esquinas(rng, 4))], paso=1e-6), tol
    cajas, logits = Tensor(_esquinas(rng, 4)), Tensor(rng.normal(size=4))
    yield 'task_loss', verificar_gradiente(lambda c, z: task_loss(objetivos, Predictions(c, z), pesos),
                                           [cajas, logits], paso=1e-6), tol

    original = Predictions(Tensor(_esquinas(rng, 4)), Tensor(rng.normal(size=4)))
    cajas, logits = Tensor(_esquinas(rng, 4)), Tensor(rng.normal(size=4))
    yield 'ct_loss', verificar_gradiente(
        lambda c, z: ct_loss(original, Predictions(c, z), par.permutation, pesos), [cajas, logits], paso=1e-6), tol

    s = Tensor(rng.uniform(size=(6, 4)))
    yield 'tag_loss', verificar_gradiente(lambda t: tag_loss(t, pesos), [s]), tol

    tensores = [Tensor(_esquinas(rng, 4)), Tensor(rng.normal(size=4)),
                Tensor(_esquinas(rng, 4)), Tensor(rng.normal(size=4)), Tensor(rng.uniform(size=(4, 2)))]
    yield 'total_loss', verificar_gradiente(
        lambda c, z, c2, z2, st: total_loss(par, Predictions(c, z), Predictions(c2, z2), st, pesos)[0],
        tensores, paso=1e-6), tol


def _paso_completo(rng):
    feats = features_minimas(rng)
    guias = build_guides(feats, SimpleNamespace(n_heads=2, tau=1.0, use_high_guide=True,
                                                use_mid_guide=True, repair_tokens=True))
    modelo = Localizador(DecoderConfig(d_model=8, n_heads=2, n_layers=2, ffn_mult=2, shift_fraction=0.25), seed=3)
    par = motion_aug(clip_minimo())
    pesos = LossWeights()
    objetivos = {
        'completo/atencion_propia.w_q': modelo.capas[0].atencion_propia.w_q.peso,
        'completo/atencion_cruzada.w_k': modelo.capas[1].atencion_cruzada.w_k.peso,
        'completo/adaptador_consulta': modelo.adaptador_consulta.peso,
    }
    for nombre, peso in objetivos.items():
        err = verificar_gradiente(lambda _: evaluar_par(modelo, feats, guias, par, pesos)[0], [peso],
                                  paso=VerificacionConstants.PASO_COMPLETO)
        yield nombre, err, VerificacionConstants.TOLERANCIA_COMPLETA


def suite_gradientes(semilla=0):
    """Lista de ResultadoGradiente de toda la suite"""
    resultados = []
    with precision(np.float64):
        rng = np.random.default_rng(semilla)
        for grupo in (_operaciones, _capas, _perdidas, _paso_completo):
            for nombre, error, tolerancia in grupo(rng):
                resultado = ResultadoGradiente(nombre, error, tolerancia)
                logger.debug(f'{nombre}: error relativo {error:.2e} (tolerancia {tolerancia:.0e})')
                resultados.append(resultado)
    return resultados
