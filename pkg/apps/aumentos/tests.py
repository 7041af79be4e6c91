import numpy as np
from django.test import SimpleTestCase

from apps.geometria.cajas import BBox, displacement
from hero_vql.excepciones import AnotacionError, ConfiguracionError, PermutacionError
from .egoaug import (
    EstrategiasConsulta,
    EstrategiasMovimiento,
    desplazamiento_acumulado,
    make_training_pair,
    motion_aug,
    query_aug,
)
from .muestras import ClipSample, QueryRef, aplicar_permutacion, inversa, validar_permutacion


def caja_centrada(cx, cy, w=0.1, h=0.1):
    return BBox(cy - h / 2, cx - w / 2, cy + h / 2, cx + w / 2)


def construir_clip(cajas, clip_id='c0', instancias=None):
    """cajas: lista por frame de BBox o None"""
    consulta = QueryRef('v0', 0, BBox(0.1, 0.1, 0.3, 0.3), 'obj')
    if instancias is None:
        instancias = tuple(QueryRef('v0', 100 + k, BBox(0.2, 0.2, 0.4, 0.4), 'obj') for k in range(4))
    return ClipSample(
        clip_id=clip_id,
        video_id='v0',
        frames=tuple(range(len(cajas))),
        gt_boxes=tuple(cajas),
        occurrence=tuple(c is not None for c in cajas),
        query_ref=consulta,
        object_instances=instancias,
    )


def clip_aleatorio(rng, T=8, max_gt=6):
    cajas = [None] * T
    n_gt = int(rng.integers(1, max_gt + 1))
    for i in sorted(rng.choice(T, size=n_gt, replace=False)):
        y1, x1 = rng.uniform(0, 0.6, size=2)
        h, w = rng.uniform(0.05, 0.4, size=2)
        cajas[i] = BBox(y1, x1, y1 + h, x1 + w)
    return construir_clip(cajas)


def oraculo_voraz(cajas):
    """Argmax explícito paso a paso sobre todos los candidatos restantes"""
    orden, restantes = [0], set(range(1, len(cajas)))
    while restantes:
        totales = {k: displacement(cajas[orden[-1]], cajas[k]).total for k in restantes}
        maximo = max(totales.values())
        elegido = min(k for k, v in totales.items() if v == maximo)
        orden.append(elegido)
        restantes.discard(elegido)
    return orden


class ClipSampleTests(SimpleTestCase):

    def test_caja_sin_ocurrencia_rechazada(self):
        with self.assertRaises(AnotacionError):
            ClipSample('c', 'v', (0, 1), (BBox(0, 0, 1, 1), None), (False, False),
                       QueryRef('v', 0, BBox(0, 0, 1, 1)))

    def test_relleno_marcado_invalido(self):
        clip = ClipSample('c', 'v', (4, 5, -1), (None, None, None), (False, False, False),
                          QueryRef('v', 0, BBox(0, 0, 1, 1)))
        self.assertEqual(clip.valid, (True, True, False))


class PermutacionTests(SimpleTestCase):

    def test_inversa_e_ida_y_vuelta(self):
        perm = [2, 0, 1, 3]
        valores = ['a', 'b', 'c', 'd']
        reubicados = aplicar_permutacion(valores, perm)
        self.assertEqual(reubicados, ['b', 'c', 'a', 'd'])
        self.assertEqual([reubicados[p] for p in perm], valores)
        self.assertEqual(inversa(perm).tolist(), [1, 2, 0, 3])

    def test_no_biyectiva(self):
        with self.assertRaises(PermutacionError):
            validar_permutacion([0, 0, 1])


class QueryAugTests(SimpleTestCase):

    def test_probabilidad_cero(self):
        clip = construir_clip([caja_centrada(0.5, 0.5)])
        rng = np.random.default_rng(0)
        for _ in range(50):
            self.assertEqual(query_aug(clip, 0.0, rng), clip.query_ref)

    def test_probabilidad_uno(self):
        clip = construir_clip([caja_centrada(0.5, 0.5)])
        rng = np.random.default_rng(1)
        for _ in range(50):
            self.assertIn(query_aug(clip, 1.0, rng), clip.object_instances)

    def test_frecuencia_monte_carlo(self):
        clip = construir_clip([caja_centrada(0.5, 0.5)])
        rng = np.random.default_rng(2)
        reemplazos = sum(query_aug(clip, 0.5, rng) != clip.query_ref for _ in range(10000))
        self.assertAlmostEqual(reemplazos / 10000, 0.5, delta=0.02)

    def test_sin_instancias_conserva_original(self):
        clip = construir_clip([caja_centrada(0.5, 0.5)], instancias=())
        with self.assertLogs('apps.aumentos.egoaug', level='WARNING'):
            self.assertEqual(query_aug(clip, 1.0, np.random.default_rng(0)), clip.query_ref)

    def test_estrategias_por_similitud(self):
        instancias = tuple(QueryRef('v0', f, BBox(0, 0, 1, 1), 'obj') for f in (10, 20, 30))
        clip = construir_clip([caja_centrada(0.5, 0.5)], instancias=instancias)

        def similitud(a, b):
            return -abs(b.frame - 18)
        rng = np.random.default_rng(0)
        mas = query_aug(clip, 1.0, rng, EstrategiasConsulta.MAS_SIMILAR, similitud)
        menos = query_aug(clip, 1.0, rng, EstrategiasConsulta.MENOS_SIMILAR, similitud)
        self.assertEqual(mas.frame, 20)
        self.assertEqual(menos.frame, 30)

    def test_probabilidad_invalida(self):
        clip = construir_clip([caja_centrada(0.5, 0.5)])
        with self.assertRaises(ConfiguracionError):
            query_aug(clip, 1.5, np.random.default_rng(0))


class MotionAugTests(SimpleTestCase):

    def test_un_frame_gt_identidad(self):
        clip = construir_clip([None, caja_centrada(0.3, 0.3), None])
        par = motion_aug(clip)
        self.assertEqual(par.permutation, (0, 1, 2))

    def test_orden_por_maximo_desplazamiento(self):
        clip = construir_clip([caja_centrada(0.1, 0.1), caja_centrada(0.15, 0.1), caja_centrada(0.9, 0.9)])
        par = motion_aug(clip)
        self.assertEqual(par.reordered.gt_boxes, (clip.gt_boxes[0], clip.gt_boxes[2], clip.gt_boxes[1]))
        self.assertEqual(par.permutation, (0, 2, 1))

    def test_frames_no_gt_quedan_en_su_lugar(self):
        clip = construir_clip([None, caja_centrada(0.1, 0.1), None, caja_centrada(0.2, 0.1),
                               caja_centrada(0.9, 0.9), None])
        par = motion_aug(clip)
        for i in (0, 2, 5):
            self.assertEqual(par.permutation[i], i)
            self.assertIsNone(par.reordered.gt_boxes[i])

    def test_oraculo_voraz(self):
        for semilla in range(100):
            clip = clip_aleatorio(np.random.default_rng(semilla))
            gt = clip.indices_gt
            esperado = [clip.gt_boxes[gt[k]] for k in oraculo_voraz([clip.gt_boxes[i] for i in gt])]
            par = motion_aug(clip)
            with self.subTest(semilla=semilla):
                self.assertEqual([par.reordered.gt_boxes[i] for i in gt], esperado)

    def test_conserva_multiconjunto_y_biyeccion(self):
        for semilla in range(30):
            clip = clip_aleatorio(np.random.default_rng(100 + semilla))
            par = motion_aug(clip)
            validar_permutacion(par.permutation, clip.T)
            for i in range(clip.T):
                self.assertEqual(par.reordered.gt_boxes[par.permutation[i]], clip.gt_boxes[i])

    def test_amplifica_el_movimiento(self):
        for semilla in range(30):
            rng = np.random.default_rng(200 + semilla)
            centro = np.array([0.5, 0.5])
            cajas = []
            for _ in range(6):
                centro = np.clip(centro + rng.normal(scale=0.03, size=2), 0.2, 0.8)
                cajas.append(caja_centrada(*centro))
            par = motion_aug(construir_clip(cajas))
            self.assertGreaterEqual(desplazamiento_acumulado(list(par.reordered.gt_boxes)),
                                    desplazamiento_acumulado(cajas) - 1e-12)

    def test_estrategias_alternativas(self):
        clip = clip_aleatorio(np.random.default_rng(5), T=8, max_gt=6)
        ninguna = motion_aug(clip, EstrategiasMovimiento.NINGUNA)
        self.assertEqual(ninguna.permutation, tuple(range(clip.T)))
        aleatoria = motion_aug(clip, EstrategiasMovimiento.ALEATORIA, rng=np.random.default_rng(0))
        validar_permutacion(aleatoria.permutation, clip.T)


class ParEntrenamientoTests(SimpleTestCase):

    def test_par_identico_sin_aumentos(self):
        clip = construir_clip([None, caja_centrada(0.4, 0.4), None])
        par = make_training_pair(clip, 0.0, np.random.default_rng(0))
        self.assertEqual(par.original, clip)
        self.assertEqual(par.reordered.gt_boxes, clip.gt_boxes)
        self.assertEqual(par.reordered.frames, clip.frames)

    def test_ida_y_vuelta_de_la_permutacion(self):
        clip = clip_aleatorio(np.random.default_rng(9))
        par = make_training_pair(clip, 0.5, np.random.default_rng(9))
        restaurado = [par.reordered.gt_boxes[p] for p in par.permutation]
        self.assertEqual(tuple(restaurado), clip.gt_boxes)

    def test_consulta_compartida(self):
        clip = clip_aleatorio(np.random.default_rng(3))
        par = make_training_pair(clip, 1.0, np.random.default_rng(3))
        self.assertEqual(par.original.query_ref, par.query_used)
        self.assertEqual(par.reordered.query_ref, par.query_used)

    def test_determinismo(self):
        clip = clip_aleatorio(np.random.default_rng(4))
        uno = make_training_pair(clip, 0.5, np.random.default_rng(42))
        dos = make_training_pair(clip, 0.5, np.random.default_rng(42))
        self.assertEqual(uno, dos)
