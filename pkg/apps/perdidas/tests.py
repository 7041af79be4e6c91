import math
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from apps.aumentos.egoaug import motion_aug
from apps.aumentos.muestras import ClipSample, QueryRef
from apps.geometria.cajas import BBox, giou
from apps.modelo.localizador import Predictions
from apps.tensores import tensor as tg
from apps.tensores.gradcheck import verificar_gradiente
from apps.tensores.tensor import Tensor, precision
from hero_vql.excepciones import ConfiguracionError, PermutacionError
from .perdidas import (
    LossWeights,
    TaskTargets,
    ct_loss,
    focal,
    giou_tensor,
    tag_loss,
    task_loss,
    total_loss,
)


def esquinas_aleatorias(rng, T):
    y1, x1 = rng.uniform(0, 0.5, size=(2, T))
    h, w = rng.uniform(0.05, 0.45, size=(2, T))
    return np.stack([y1, x1, y1 + h, x1 + w], axis=1)


def predicciones_aleatorias(rng, T):
    return Predictions(Tensor(esquinas_aleatorias(rng, T), requires_grad=True),
                       Tensor(rng.normal(size=T) * 2.0, requires_grad=True))


def clip_con_gt(rng, T=6):
    cajas = [None] * T
    for i in sorted(rng.choice(T, size=4, replace=False)):
        cajas[i] = BBox.desde_lista(esquinas_aleatorias(rng, 1)[0])
    return ClipSample('c', 'v', tuple(range(T)), tuple(cajas), tuple(c is not None for c in cajas),
                      QueryRef('v', 0, BBox(0, 0, 0.5, 0.5)))


def bce_numpy(t, p):
    return -(t * np.log(p) + (1 - t) * np.log(1 - p))


def tarea_numpy(targets, cajas, probabilidades, w):
    """Pérdida de tarea escrita en línea recta con la geometría escalar"""
    indices = [i for i in range(targets.T) if targets.presentes[i] and targets.validos[i]]
    caja = 0.0
    if indices:
        l1 = np.mean([np.abs(cajas[i] - targets.cajas[i]).mean() for i in indices])
        g = np.mean([1.0 - giou(BBox.desde_lista(cajas[i]), BBox.desde_lista(targets.cajas[i])) for i in indices])
        caja = w.w_l1 * l1 + w.w_giou * g
    t, p = targets.occurrence[targets.validos], probabilidades[targets.validos]
    puntaje = w.focal_alpha * np.mean(np.abs(t - p) ** w.focal_gamma * bce_numpy(t, p))
    return caja + puntaje


class TaskLossTests(SimpleTestCase):

    def test_prediccion_perfecta_saturada(self):
        cajas = np.array([[0.1, 0.1, 0.5, 0.5], [0.2, 0.3, 0.6, 0.9], [0.0, 0.0, 0.2, 0.2]])
        targets = TaskTargets(cajas, [True, True, False], [1.0, 1.0, 0.0])
        preds = Predictions.desde_probabilidades(cajas, [1 - 1e-9, 1 - 1e-9, 1e-9])
        self.assertLess(task_loss(targets, preds, LossWeights()).item(), 1e-6)

    def test_focal_se_reduce_a_bce(self):
        with precision(np.float64):
            rng = np.random.default_rng(0)
            pesos = replace(LossWeights(), focal_alpha=1.0, focal_gamma=0.0)
            for _ in range(20):
                z = rng.normal(size=7) * 3
                t = rng.uniform(size=7)
                p = 1 / (1 + np.exp(-z))
                self.assertAlmostEqual(focal(Tensor(z), t, pesos).item(), bce_numpy(t, p).mean(), delta=1e-6)

    def test_valor_escalar(self):
        with precision(np.float64):
            targets = TaskTargets([[0.0, 0.0, 1.0, 1.0]], [True], [1.0])
            preds = Predictions.desde_probabilidades([[0.0, 0.0, 1.0, 1.0]], [0.9])
            pesos = LossWeights()
            self.assertAlmostEqual(task_loss(targets, preds, pesos).item(), 0.25 * 0.01 * -math.log(0.9), delta=1e-9)
            self.assertAlmostEqual(task_loss(targets, preds, pesos).item(), 2.634e-4, delta=1e-7)

    def test_frames_sin_ocurrencia_solo_puntuan(self):
        targets = TaskTargets(np.zeros((2, 4)), [False, False], [0.0, 0.0])
        preds = Predictions.desde_probabilidades(esquinas_aleatorias(np.random.default_rng(1), 2), [0.3, 0.6])
        with precision(np.float64):
            esperado = tarea_numpy(targets, preds.cajas.data, preds.scores, LossWeights())
        self.assertAlmostEqual(task_loss(targets, preds, LossWeights()).item(), esperado, places=5)

    def test_coincide_con_version_escalar(self):
        with precision(np.float64):
            for semilla in range(10):
                rng = np.random.default_rng(semilla)
                clip = clip_con_gt(rng)
                preds = predicciones_aleatorias(rng, clip.T)
                targets = TaskTargets.desde_clip(clip)
                esperado = tarea_numpy(targets, preds.cajas.data, preds.scores, LossWeights())
                self.assertAlmostEqual(task_loss(targets, preds, LossWeights()).item(), esperado, delta=1e-9)

    def test_gradientes(self):
        with precision(np.float64):
            rng = np.random.default_rng(2)
            clip = clip_con_gt(rng)
            targets = TaskTargets.desde_clip(clip)
            cajas = Tensor(esquinas_aleatorias(rng, clip.T))
            logits = Tensor(rng.normal(size=clip.T))
            err = verificar_gradiente(lambda c, z: task_loss(targets, Predictions(c, z), LossWeights()),
                                      [cajas, logits], paso=1e-6)
            self.assertLess(err, 1e-3)

    def test_giou_tensor_coincide_con_escalar(self):
        rng = np.random.default_rng(3)
        a, b = esquinas_aleatorias(rng, 50), esquinas_aleatorias(rng, 50)
        with precision(np.float64):
            valores = giou_tensor(Tensor(a), b).data
        for i in range(50):
            self.assertAlmostEqual(valores[i], giou(BBox.desde_lista(a[i]), BBox.desde_lista(b[i])), places=9)


class CTLossTests(SimpleTestCase):

    def test_cajas_alineadas_identicas(self):
        rng = np.random.default_rng(4)
        original = predicciones_aleatorias(rng, 5)
        perm = [0, 3, 1, 4, 2]
        inversa = np.argsort(perm)
        reordenadas = Predictions(Tensor(original.cajas.data[inversa], requires_grad=True),
                                  Tensor(rng.normal(size=5), requires_grad=True))
        pesos = replace(LossWeights(), focal_alpha=0.0)
        self.assertEqual(ct_loss(original, reordenadas, perm, pesos).item(), 0.0)

    def test_gradiente_nulo_en_el_acuerdo(self):
        with precision(np.float64):
            z = Tensor(np.array([-1.2, 0.3, 2.5]), requires_grad=True)
            objetivo = 1 / (1 + np.exp(-z.data))
            focal(z, objetivo, LossWeights()).backward()
            np.testing.assert_allclose(z.grad, 0.0, atol=1e-12)
            z.zero_grad()
            focal(z, objetivo, replace(LossWeights(), focal_gamma=0.0)).backward()
            np.testing.assert_allclose(z.grad, 0.0, atol=1e-12)

    def test_equivale_a_tarea_con_objetivo_detenido(self):
        with precision(np.float64):
            rng = np.random.default_rng(5)
            original = predicciones_aleatorias(rng, 6)
            reordenadas = predicciones_aleatorias(rng, 6)
            perm = [int(v) for v in rng.permutation(6)]
            objetivo = TaskTargets(original.cajas.data, np.ones(6, dtype=bool), original.scores)
            alineadas = Predictions(tg.take(reordenadas.cajas, perm), tg.take(reordenadas.logits, perm))
            self.assertAlmostEqual(ct_loss(original, reordenadas, perm, LossWeights()).item(),
                                   task_loss(objetivo, alineadas, LossWeights()).item(), delta=1e-6)

    def test_sin_gradiente_hacia_el_original(self):
        rng = np.random.default_rng(6)
        original = predicciones_aleatorias(rng, 4)
        reordenadas = predicciones_aleatorias(rng, 4)
        ct_loss(original, reordenadas, [1, 0, 3, 2], LossWeights()).backward()
        self.assertIsNone(original.cajas.grad)
        self.assertIsNone(original.logits.grad)
        self.assertIsNotNone(reordenadas.logits.grad)

    def test_permutacion_no_biyectiva(self):
        rng = np.random.default_rng(7)
        with self.assertRaises(PermutacionError):
            ct_loss(predicciones_aleatorias(rng, 3), predicciones_aleatorias(rng, 3), [0, 0, 2], LossWeights())


class TagLossTests(SimpleTestCase):

    def test_mapas_en_cero(self):
        with precision(np.float64):
            pesos = replace(LossWeights(), lambda_token=0.7, lambda_map=0.4)
            self.assertAlmostEqual(tag_loss(np.zeros((5, 3)), pesos).item(), (0.7 - 0.4) * math.log(3), delta=1e-9)
            self.assertAlmostEqual(tag_loss(np.zeros((5, 3)), replace(pesos, lambda_map=0.0)).item(),
                                   0.7 * math.log(3), delta=1e-9)
            self.assertAlmostEqual(tag_loss(np.zeros((5, 3)), replace(pesos, lambda_token=0.0)).item(),
                                   -0.4 * math.log(3), delta=1e-9)

    def test_un_mapa_dominante_por_token(self):
        with precision(np.float64):
            s = np.zeros((8, 4))
            for i in range(8):
                s[i, i % 4] = 20.0
            l_token = tag_loss(s, replace(LossWeights(), lambda_map=0.0)).item()
            l_map = tag_loss(s, replace(LossWeights(), lambda_token=0.0)).item()
        self.assertLess(l_token, 1e-5)
        self.assertAlmostEqual(l_map, -math.log(4), delta=1e-6)

    def test_gradiente(self):
        with precision(np.float64):
            s = Tensor(np.random.default_rng(8).uniform(0, 1, size=(6, 4)))
            self.assertLess(verificar_gradiente(lambda x: tag_loss(x, LossWeights()), [s]), 1e-3)

    def test_requiere_dos_mapas(self):
        with self.assertRaises(ConfiguracionError):
            tag_loss(np.zeros((4, 1)), LossWeights())

    def test_cota_inferior(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            valor = tag_loss(rng.uniform(size=(6, 4)), LossWeights()).item()
            self.assertGreaterEqual(valor, -math.log(4) - 1e-6)


class TotalLossTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(10)
        self.par = motion_aug(clip_con_gt(rng))
        self.original = predicciones_aleatorias(rng, 6)
        self.reordenadas = predicciones_aleatorias(rng, 6)
        self.s_tag = Tensor(rng.uniform(size=(4, 2)))

    def test_pesos_en_cero(self):
        ceros = LossWeights(0, 0, 0, 0, 0, 0, 0, 0, 0, 0)
        total, _ = total_loss(self.par, self.original, self.reordenadas, self.s_tag, ceros)
        self.assertEqual(total.item(), 0.0)

    def test_sin_ct_ni_tag(self):
        pesos = replace(LossWeights(), lambda_ct=0.0, mu=0.0)
        total, c = total_loss(self.par, self.original, self.reordenadas, self.s_tag, pesos)
        self.assertAlmostEqual(total.item(), pesos.beta * c['L_task'] + pesos.gamma * c["L_task'"], delta=1e-6)

    def test_sin_egoact(self):
        pesos = LossWeights()
        total, c = total_loss(self.par, self.original, None, self.s_tag, pesos)
        self.assertEqual(c['L_CT'], 0.0)
        self.assertAlmostEqual(total.item(), (pesos.beta + pesos.gamma) * c['L_task'] + pesos.mu * c['L_TAG'],
                               delta=1e-6)

    def test_valor_de_referencia(self):
        with precision(np.float64):
            rng = np.random.default_rng(11)
            par = motion_aug(clip_con_gt(rng))
            original = predicciones_aleatorias(rng, 6)
            reordenadas = predicciones_aleatorias(rng, 6)
            s = rng.uniform(size=(4, 2))
            pesos = LossWeights()
            total, _ = total_loss(par, original, reordenadas, Tensor(s), pesos)

            perm = list(par.permutation)
            l_task = tarea_numpy(TaskTargets.desde_clip(par.original), original.cajas.data, original.scores, pesos)
            l_task_r = tarea_numpy(TaskTargets.desde_clip(par.reordered), reordenadas.cajas.data,
                                   reordenadas.scores, pesos)
            objetivo_ct = TaskTargets(original.cajas.data, np.ones(6, dtype=bool), original.scores)
            l_ct = tarea_numpy(objetivo_ct, reordenadas.cajas.data[perm], reordenadas.scores[perm], pesos)

            def entropia(v):
                p = np.exp(v - v.max())
                p /= p.sum()
                return -(p * np.log(p)).sum()
            l_tag = np.mean([entropia(fila) for fila in s]) - entropia(s.mean(axis=0))
            esperado = pesos.beta * l_task + pesos.gamma * l_task_r + pesos.lambda_ct * l_ct + pesos.mu * l_tag
            self.assertAlmostEqual(total.item(), esperado, delta=1e-9)

    def test_cotas_inferiores(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            clip = clip_con_gt(rng)
            a, b = predicciones_aleatorias(rng, clip.T), predicciones_aleatorias(rng, clip.T)
            self.assertGreaterEqual(task_loss(TaskTargets.desde_clip(clip), a, LossWeights()).item(), 0.0)
            self.assertGreaterEqual(ct_loss(a, b, list(range(clip.T)), LossWeights()).item(), 0.0)
