import math
import tempfile
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase
from PIL import Image

from apps.tensores.gradcheck import verificar_gradiente
from apps.tensores.tensor import Tensor, precision
from .guia import (
    EncoderFeatures,
    build_guides,
    high_level_guide,
    mid_level_guide,
    pc_decompose,
    phi,
    puntajes_alto_nivel,
    repair_tokens,
    tag_score_maps,
)
from .mapas import guardar_mapas


def features_aleatorias(rng, T=3, grid=(3, 3), N=4, D=8):
    M = grid[0] * grid[1]
    return EncoderFeatures(
        z_video=rng.normal(size=(T, M, D)),
        z_query=rng.normal(size=(N, D)),
        z_cls=rng.normal(size=D),
        w_q=np.linalg.qr(rng.normal(size=(D, D)))[0],
        w_k=np.linalg.qr(rng.normal(size=(D, D)))[0],
        grid=grid,
    )


def config_guias(**cambios):
    base = dict(n_heads=2, tau=1.0, use_high_guide=True, use_mid_guide=True, repair_tokens=True)
    base.update(cambios)
    return SimpleNamespace(**base)


class RepairTokensTests(SimpleTestCase):

    def test_normas_uniformes_sin_cambios(self):
        rng = np.random.default_rng(0)
        tokens = rng.normal(size=(36, 5))
        tokens /= np.linalg.norm(tokens, axis=1, keepdims=True)
        np.testing.assert_array_equal(repair_tokens(tokens, (6, 6)), tokens)

    def test_token_atipico_reemplazado(self):
        rng = np.random.default_rng(1)
        tokens = rng.normal(size=(36, 5))
        tokens /= np.linalg.norm(tokens, axis=1, keepdims=True)
        tokens *= rng.uniform(0.8, 1.2, size=(36, 1))
        tokens[14] *= 100.0
        reparados = repair_tokens(tokens, (6, 6))

        fila, columna = divmod(14, 6)
        vecinos = [(fila + df) * 6 + columna + dc for df in (-1, 0, 1) for dc in (-1, 0, 1) if (df, dc) != (0, 0)]
        self.assertAlmostEqual(np.linalg.norm(reparados[14]), np.linalg.norm(tokens[vecinos], axis=1).mean())
        direccion = (tokens[vecinos] / np.linalg.norm(tokens[vecinos], axis=1, keepdims=True)).mean(axis=0)
        np.testing.assert_allclose(reparados[14] / np.linalg.norm(reparados[14]),
                                   direccion / np.linalg.norm(direccion), atol=1e-9)
        otros = [i for i in range(36) if i != 14]
        np.testing.assert_array_equal(reparados[otros], tokens[otros])

    def test_atipico_oculto_se_repara_en_la_pasada_siguiente(self):
        tokens = np.zeros((36, 4))
        tokens[:, 0] = 1.0
        tokens[0, 0] = 1000.0
        tokens[35, 0] = 5.0
        normas = np.linalg.norm(tokens, axis=1)
        # el primer umbral (inflado por el token 0) no alcanza al 35
        self.assertLess(normas[35], normas.mean() + 3.0 * normas.std())
        reparados = repair_tokens(tokens, (6, 6))
        esperado = np.zeros((36, 4))
        esperado[:, 0] = 1.0
        np.testing.assert_allclose(reparados, esperado, atol=1e-12)

    def test_idempotencia(self):
        for semilla in range(50):
            rng = np.random.default_rng(semilla)
            tokens = rng.normal(size=(36, 6)) * rng.lognormal(sigma=0.3, size=(36, 1))
            tokens[rng.integers(36)] *= 50.0
            una = repair_tokens(tokens, (6, 6))
            np.testing.assert_array_equal(repair_tokens(una, (6, 6)), una)


class HighLevelGuideTests(SimpleTestCase):

    def test_puntajes_constantes_dan_medio(self):
        D = 4
        feats = EncoderFeatures(
            z_video=np.ones((2, 4, D)), z_query=np.ones((2, D)), z_cls=np.arange(D, dtype=float),
            w_q=np.eye(D), w_k=np.eye(D), grid=(2, 2),
        )
        np.testing.assert_allclose(high_level_guide(feats), 0.5, atol=1e-12)

    def test_rango_y_argmax_al_escalar_cls(self):
        rng = np.random.default_rng(2)
        feats = features_aleatorias(rng)
        alfa = high_level_guide(feats)
        feats.z_cls = feats.z_cls * 2.0
        alfa_doble = high_level_guide(feats)
        self.assertTrue(np.all((alfa_doble > 0) & (alfa_doble < 1)))
        np.testing.assert_array_equal(alfa.argmax(axis=1), alfa_doble.argmax(axis=1))

    def test_caso_a_mano(self):
        feats = EncoderFeatures(
            z_video=np.array([[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.0]]]),
            z_query=np.zeros((1, 2)),
            z_cls=np.array([2.0, 1.0]),
            w_q=np.eye(2), w_k=np.array([[1.0, 0.0], [0.0, 2.0]]), grid=(2, 2),
        )
        # q = [2, 1]; k = [[1,0],[0,2],[1,2],[-1,0]] → s = [2, 2, 4, -2], media 1.5
        esperado = [1 / (1 + math.exp(-v)) for v in (0.5, 0.5, 2.5, -3.5)]
        np.testing.assert_allclose(high_level_guide(feats)[0], esperado, atol=1e-12)

    def test_puntajes_centrados_suman_cero(self):
        feats = features_aleatorias(np.random.default_rng(3))
        s = puntajes_alto_nivel(feats)
        centrados = s - s.mean(axis=1, keepdims=True)
        np.testing.assert_allclose(centrados.sum(axis=1), 0.0, atol=1e-5)


class PCDecomposeTests(SimpleTestCase):

    def test_tokens_identicos(self):
        z = np.tile(np.array([0.1, -0.3, 0.7]), (5, 1))
        centrada, base = pc_decompose(z, 2)
        np.testing.assert_allclose(centrada, 0.0, atol=1e-12)
        np.testing.assert_array_equal(base, np.zeros((3, 2)))

    def test_rango_uno_reconstruye(self):
        rng = np.random.default_rng(4)
        z = np.outer(rng.normal(size=6), rng.normal(size=5)) + rng.normal(size=5)
        centrada, base = pc_decompose(z, 1)
        np.testing.assert_allclose(centrada @ base @ base.T, centrada, atol=1e-4)

    def test_base_ortonormal(self):
        rng = np.random.default_rng(5)
        _, base = pc_decompose(rng.normal(size=(16, 8)), 4)
        np.testing.assert_allclose(base.T @ base, np.eye(4), atol=1e-4)

    def test_columnas_extra_en_cero(self):
        rng = np.random.default_rng(6)
        z = np.outer(rng.normal(size=4), rng.normal(size=6))
        _, base = pc_decompose(z, 3)
        np.testing.assert_array_equal(base[:, 1:], 0.0)

    def test_convencion_de_signo(self):
        _, base = pc_decompose(np.random.default_rng(7).normal(size=(10, 6)), 3)
        for r in range(3):
            self.assertGreater(base[np.argmax(np.abs(base[:, r])), r], 0)


class MidLevelGuideTests(SimpleTestCase):

    def test_valores_escalares(self):
        self.assertEqual(phi(0.0, 1.0).item(), 0.0)
        with precision(np.float64):
            self.assertAlmostEqual(phi(1.0, 1.0).item(), 1 - math.exp(-1), delta=1e-6)
            x = np.linspace(-3, 3, 13)
            np.testing.assert_allclose(phi(x, 0.7).data, phi(-x, 0.7).data)

    def test_invariante_al_signo_de_la_base(self):
        rng = np.random.default_rng(8)
        centrada, base = pc_decompose(rng.normal(size=(6, 5)), 2)
        volteada = base * np.array([-1.0, 1.0])
        np.testing.assert_allclose(mid_level_guide(centrada, base, 1.0).data,
                                   mid_level_guide(centrada, volteada, 1.0).data)

    def test_rango_semiabierto(self):
        rng = np.random.default_rng(9)
        centrada, base = pc_decompose(rng.normal(size=(8, 6)), 3)
        alfa = mid_level_guide(centrada, base, 0.5).data
        self.assertTrue(np.all((alfa >= 0) & (alfa < 1)))


class TagScoreMapsTests(SimpleTestCase):

    def test_salida_constante_da_ceros(self):
        rng = np.random.default_rng(10)
        y = np.tile(rng.normal(size=8), (2, 3, 1))
        centrada, _ = pc_decompose(rng.normal(size=(4, 8)), 2)
        np.testing.assert_array_equal(tag_score_maps(centrada, y, 2, 1.0).data, 0.0)

    def test_rango(self):
        rng = np.random.default_rng(11)
        centrada, _ = pc_decompose(rng.normal(size=(4, 8)), 2)
        s = tag_score_maps(centrada, rng.normal(size=(3, 5, 8)), 2, 1.0).data
        self.assertTrue(np.all((s >= 0) & (s < 1)))

    def test_gradiente_respecto_de_la_consulta(self):
        with precision(np.float64):
            rng = np.random.default_rng(12)
            y = Tensor(rng.normal(size=(2, 4, 6)))
            z = Tensor(rng.uniform(-2, 2, size=(4, 6)))
            err = verificar_gradiente(lambda q: tag_score_maps(q, y, 2, 1.0).mean(), [z])
            self.assertLess(err, 1e-3)


class BuildGuidesTests(SimpleTestCase):

    def test_formas_y_rangos(self):
        feats = features_aleatorias(np.random.default_rng(13))
        guias = build_guides(feats, config_guias())
        self.assertEqual(guias.alpha_high.shape, (3, 9))
        self.assertEqual(guias.alpha_mid.shape, (4, 2))
        self.assertTrue(np.all((guias.alpha_high > 0) & (guias.alpha_high < 1)))
        self.assertTrue(np.all((guias.alpha_mid >= 0) & (guias.alpha_mid < 1)))

    def test_guias_desactivadas(self):
        feats = features_aleatorias(np.random.default_rng(14))
        guias = build_guides(feats, config_guias(use_high_guide=False, use_mid_guide=False))
        self.assertFalse(guias.alpha_high.any())
        self.assertFalse(guias.alpha_mid.any())

    def test_mapas_en_disco(self):
        feats = features_aleatorias(np.random.default_rng(15), T=2, N=4)
        guias = build_guides(feats, config_guias())
        with tempfile.TemporaryDirectory() as tmp:
            rutas = guardar_mapas(guias, 'clip7', feats.grid, (2, 2), tmp, frames=[10, 11])
            nombres = sorted(Path(r).name for r in rutas)
            self.assertIn('clip7_high_f10.pgm', nombres)
            self.assertIn('clip7_mid_r1.pgm', nombres)
            with open(Path(tmp) / 'clip7_high_f11.pgm', 'rb') as f:
                self.assertEqual(f.read(2), b'P5')
            with Image.open(Path(tmp) / 'clip7_mid_r0.pgm') as imagen:
                self.assertEqual(imagen.mode, 'L')
