import itertools
import tempfile
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase

from apps.aumentos.egoaug import motion_aug
from apps.consultas.verificacion import clip_minimo, features_minimas
from apps.guias.guia import build_guides
from apps.perdidas.perdidas import LossWeights, evaluar_par
from apps.tensores.gradcheck import verificar_gradiente
from apps.tensores.tensor import Tensor, precision
from hero_vql.excepciones import ConfiguracionError
from .atencion import (
    AtencionCruzadaGuiada,
    AtencionPropiaGuiada,
    guided_cross_attention,
    guided_self_attention,
    temporal_shift,
)
from .checkpoints import cargar_checkpoint, guardar_checkpoint
from .localizador import DecoderConfig, Localizador, centros_de_grid
from .proveedor import ProveedorSintetico, synthetic_feature_provider

CONFIG_MINIMA = DecoderConfig(d_model=8, n_heads=2, n_layers=2, ffn_mult=2, shift_fraction=0.25)
CONFIG_MEDIA = DecoderConfig(d_model=8, n_heads=2, n_layers=2, ffn_mult=2, shift_fraction=0.25, head_pooling='mean')


def guias_minimas(feats, **cambios):
    cfg = dict(n_heads=2, tau=1.0, use_high_guide=True, use_mid_guide=True, repair_tokens=True)
    cfg.update(cambios)
    return build_guides(feats, SimpleNamespace(**cfg))


class AutoAtencionTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.params = AtencionPropiaGuiada(8, self.rng)
        self.x = Tensor(self.rng.normal(size=(3, 9, 8)))

    def test_guia_cero_equivale_a_sin_guia(self):
        con_cero = guided_self_attention(self.x, np.zeros((3, 9)), self.params)
        sin_guia = guided_self_attention(self.x, None, self.params)
        self.assertLess(np.abs(con_cero.data - sin_guia.data).max(), 1e-6)

    def test_filas_suman_uno(self):
        _, pesos = guided_self_attention(self.x, self.rng.uniform(size=(3, 9)), self.params, devolver_pesos=True)
        np.testing.assert_allclose(pesos.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_guia_grande_domina(self):
        for semilla in range(20):
            rng = np.random.default_rng(semilla)
            params = AtencionPropiaGuiada(8, rng)
            x = Tensor(rng.normal(size=(2, 9, 8)))
            guia = np.zeros((2, 9))
            clave = int(rng.integers(9))
            guia[:, clave] = 10.0
            _, pesos = guided_self_attention(x, guia, params, devolver_pesos=True)
            self.assertTrue(np.all(pesos.data.argmax(axis=-1) == clave))


class AtencionCruzadaTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.params = AtencionCruzadaGuiada(8, 2, self.rng)
        self.x = Tensor(self.rng.normal(size=(3, 9, 8)))
        self.consulta = Tensor(self.rng.normal(size=(4, 8)))

    def test_guia_cero_equivale_a_sin_guia(self):
        con_cero = guided_cross_attention(self.x, self.consulta, np.zeros((4, 2)), self.params)
        sin_guia = guided_cross_attention(self.x, self.consulta, None, self.params)
        self.assertLess(np.abs(con_cero.data - sin_guia.data).max(), 1e-6)

    def test_filas_de_cada_cabeza_suman_uno(self):
        _, pesos = guided_cross_attention(self.x, self.consulta, self.rng.uniform(size=(4, 2)), self.params,
                                          devolver_pesos=True)
        self.assertEqual(pesos.shape, (3, 2, 9, 4))
        np.testing.assert_allclose(pesos.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_mapas_distintos_por_cabeza(self):
        guia = np.zeros((4, 2))
        guia[1, 0] = 30.0
        guia[3, 1] = 30.0
        _, pesos = guided_cross_attention(self.x, self.consulta, guia, self.params, devolver_pesos=True)
        self.assertTrue(np.all(pesos.data[:, 0].argmax(axis=-1) == 1))
        self.assertTrue(np.all(pesos.data[:, 1].argmax(axis=-1) == 3))

    def test_cabezas_y_mapas_distintos(self):
        with self.assertRaises(ConfiguracionError):
            guided_cross_attention(self.x, self.consulta, np.zeros((4, 3)), self.params)


class TemporalShiftTests(SimpleTestCase):

    def test_un_frame(self):
        w = Tensor(np.random.default_rng(2).normal(size=(1, 3, 8)))
        salida = temporal_shift(w, 0.25).data
        np.testing.assert_array_equal(salida[:, :, :2], 0.0)
        np.testing.assert_array_equal(salida[:, :, 2:], w.data[:, :, 2:])

    def test_suma_sin_los_bordes(self):
        w = np.random.default_rng(3).normal(size=(5, 3, 8))
        salida = temporal_shift(Tensor(w), 0.25).data
        esperado = w.sum() - w[-1, :, :1].sum() - w[0, :, 1:2].sum()
        self.assertAlmostEqual(float(salida.sum()), float(esperado), places=4)

    def test_desplazamiento_opuesto_restaura_el_interior(self):
        w = np.random.default_rng(4).normal(size=(6, 2, 8))
        canje = [1, 0] + list(range(2, 8))
        ida = temporal_shift(Tensor(w), 0.25).data
        vuelta = temporal_shift(Tensor(ida[:, :, canje]), 0.25).data[:, :, canje]
        np.testing.assert_array_equal(vuelta[1:-1], w[1:-1].astype(vuelta.dtype))

    def test_fraccion_invalida(self):
        with self.assertRaises(ConfiguracionError):
            temporal_shift(Tensor(np.zeros((2, 2, 8))), 0.7)


class LocalizadorTests(SimpleTestCase):

    def test_config_invalida(self):
        with self.assertRaises(ConfiguracionError):
            DecoderConfig(d_model=10, n_heads=4)
        with self.assertRaises(ConfiguracionError):
            DecoderConfig(n_layers=0)

    def test_formas_y_rangos(self):
        for (T, grid, N), cfg in itertools.product(((4, (3, 3), 4), (1, (2, 2), 9), (7, (3, 2), 5)),
                                                   (CONFIG_MINIMA, CONFIG_MEDIA)):
            feats = features_minimas(np.random.default_rng(T), T=T, grid=grid, N=N)
            preds = Localizador(cfg)(feats, guias_minimas(feats))
            self.assertEqual(preds.cajas.shape, (T, 4))
            self.assertEqual(preds.scores.shape, (T,))
            self.assertEqual(len(preds.boxes), T)
            self.assertTrue(np.all((preds.scores > 0) & (preds.scores < 1)))
            for caja in preds.boxes:
                self.assertTrue(all(0.0 <= c <= 1.0 for c in caja.como_lista()))

    def test_guias_cero_igual_a_decodificador_sin_guia(self):
        feats = features_minimas(np.random.default_rng(5))
        modelo = Localizador(CONFIG_MINIMA, seed=1)
        ceros = guias_minimas(feats, use_high_guide=False, use_mid_guide=False)
        con_ceros = modelo(feats, ceros)
        sin_guia = modelo(feats, None)
        self.assertLess(np.abs(con_ceros.cajas.data - sin_guia.cajas.data).max(), 1e-6)
        self.assertLess(np.abs(con_ceros.logits.data - sin_guia.logits.data).max(), 1e-6)

    def test_equivariancia_antes_del_modulo_temporal(self):
        feats = features_minimas(np.random.default_rng(6))
        guias = guias_minimas(feats)
        modelo = Localizador(CONFIG_MINIMA, seed=2)
        inversa = np.array([2, 0, 3, 1])
        original = modelo(feats, guias)
        permutado = modelo(feats.permutada(inversa), guias.permutada(inversa))
        np.testing.assert_allclose(permutado.y.data, original.y.data[inversa], atol=1e-5)

    def test_salidas_y_gradientes_finitos(self):
        pesos = LossWeights()
        for semilla in range(10):
            rng = np.random.default_rng(100 + semilla)
            feats = features_minimas(rng)
            modelo = Localizador(CONFIG_MINIMA, seed=semilla)
            par = motion_aug(clip_minimo())
            total, componentes = evaluar_par(modelo, feats, guias_minimas(feats), par, pesos)
            total.backward()
            self.assertTrue(all(np.isfinite(v) for v in componentes.values()))
            for nombre, p in modelo.parametros().items():
                if p.grad is not None:
                    self.assertTrue(np.all(np.isfinite(p.grad)), nombre)

    def test_gradiente_extremo_a_extremo(self):
        with precision(np.float64):
            feats = features_minimas(np.random.default_rng(7))
            guias = guias_minimas(feats)
            modelo = Localizador(CONFIG_MINIMA, seed=3)
            par = motion_aug(clip_minimo())
            pesos = LossWeights()
            objetivos = [
                modelo.capas[0].atencion_propia.w_q.peso,
                modelo.capas[1].atencion_cruzada.w_k.peso,
                modelo.adaptador_consulta.peso,
            ]
            for peso in objetivos:
                err = verificar_gradiente(lambda _: evaluar_par(modelo, feats, guias, par, pesos)[0], [peso],
                                          paso=1e-5)
                self.assertLess(err, 1e-2)

    def test_nombres_de_parametros(self):
        nombres = Localizador(CONFIG_MINIMA).parametros()
        self.assertIn('capas.1.atencion_cruzada.w_q.peso', nombres)
        self.assertIn('cabeza_puntaje.salida.sesgo', nombres)
        self.assertIn('temporal.norma.gamma', nombres)
        self.assertIn('cabeza_mapa.peso', nombres)
        self.assertNotIn('cabeza_mapa.peso', Localizador(CONFIG_MEDIA).parametros())

    def test_agrupamiento_invalido(self):
        with self.assertRaises(ConfiguracionError):
            DecoderConfig(d_model=8, n_heads=2, head_pooling='max')

    def test_cabezas_en_cero_dan_la_caja_central(self):
        feats = features_minimas(np.random.default_rng(9))
        for cfg in (CONFIG_MINIMA, CONFIG_MEDIA):
            modelo = Localizador(cfg, seed=5)
            modelo.cabeza_caja.salida.peso.data[:] = 0.0
            modelo.cabeza_caja.salida.sesgo.data[:] = 0.0
            if modelo.cabeza_mapa is not None:
                modelo.cabeza_mapa.peso.data[:] = 0.0
            preds = modelo(feats, guias_minimas(feats))
            np.testing.assert_allclose(preds.cajas.data, np.tile([0.25, 0.25, 0.75, 0.75], (feats.T, 1)), atol=1e-5)

    def test_referencia_sigue_al_token_dominante(self):
        modelo = Localizador(CONFIG_MINIMA, seed=6)
        modelo.cabeza_mapa.peso.data[:] = 0.0
        modelo.cabeza_mapa.peso.data[0, 0] = 50.0
        grid = (3, 4)
        centros = centros_de_grid(grid)
        w = np.zeros((2, 12, 8))
        w[0, 5, 0] = 1.0
        w[1, 10, 0] = 1.0
        resumen, referencia, pesos = modelo.agrupar(Tensor(w), grid)
        np.testing.assert_allclose(pesos.data.argmax(axis=1), [5, 10])
        np.testing.assert_allclose(referencia.data, centros[[5, 10]], atol=1e-4)
        np.testing.assert_allclose(resumen.data, w[[0, 1], [5, 10]], atol=1e-4)
        np.testing.assert_allclose(centros[5], [(1 + 0.5) / 4, (1 + 0.5) / 3])


class CheckpointTests(SimpleTestCase):

    def test_guardar_y_cargar(self):
        feats = features_minimas(np.random.default_rng(8))
        guias = guias_minimas(feats)
        modelo = Localizador(CONFIG_MINIMA, seed=4)
        configuracion = {'d_model': 8, 'n_heads': 2, 'n_layers': 2, 'ffn_mult': 2, 'shift_fraction': 0.25,
                         'seed': 99}
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'modelo.hvqf'
            guardar_checkpoint(modelo, ruta, configuracion)
            self.assertTrue((Path(tmp) / 'modelo.hvqf.json').exists())
            cargado, leida = cargar_checkpoint(ruta)
        self.assertEqual(leida, configuracion)
        np.testing.assert_allclose(cargado(feats, guias).logits.data, modelo(feats, guias).logits.data, atol=1e-6)


class ProveedorTests(SimpleTestCase):

    def escena(self, color):
        frames = np.full((3, 48, 48, 3), 0.2)
        frames[:, 10:20, 12:24] = color
        recorte = np.full((10, 12, 3), 0.2)
        recorte[2:8, 2:10] = color
        return SimpleNamespace(frames=frames, recorte=recorte)

    def test_determinismo(self):
        uno = synthetic_feature_provider(self.escena((0.9, 0.1, 0.1)), seed=5)
        dos = synthetic_feature_provider(self.escena((0.9, 0.1, 0.1)), seed=5)
        self.assertEqual(uno.z_video.tobytes(), dos.z_video.tobytes())
        self.assertEqual(uno.z_query.tobytes(), dos.z_query.tobytes())

    def test_color_distinto_cambia_la_consulta(self):
        rojo = synthetic_feature_provider(self.escena((0.9, 0.1, 0.1)), seed=5)
        azul = synthetic_feature_provider(self.escena((0.1, 0.1, 0.9)), seed=5)
        self.assertFalse(np.allclose(rojo.z_query, azul.z_query))

    def test_tokens_por_grid(self):
        feats = synthetic_feature_provider(self.escena((0.5, 0.5, 0.5)), seed=0)
        self.assertEqual(feats.M, feats.grid[0] * feats.grid[1])
        self.assertEqual(feats.grid, (6, 6))
        self.assertEqual(feats.N, 16)

    def test_relleno_en_cero_y_proyecciones_ortogonales(self):
        proveedor = ProveedorSintetico(d_model=16, seed=3)
        escena = self.escena((0.3, 0.8, 0.3))
        feats = proveedor.features(escena.frames, escena.recorte, validos=[True, True, False])
        self.assertFalse(feats.z_video[2].any())
        np.testing.assert_allclose(feats.w_q @ feats.w_q.T, np.eye(16), atol=1e-10)
        np.testing.assert_allclose(feats.w_k @ feats.w_k.T, np.eye(16), atol=1e-10)
