import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.aumentos.muestras import FRAME_RELLENO
from apps.inferencia.intercambio import cargar_tracks
from apps.inferencia.pipeline import slice_clips
from apps.modelo.checkpoints import cargar_checkpoint
from hero_vql.excepciones import AnotacionError, ConfiguracionError
from .anotaciones import ArchivoAnotaciones, cargar_anotaciones, guardar_anotaciones
from .configuracion import Config, cargar_config, construir
from .entrenamiento import Entrenador, ablacion, config_de_variante, entrenar, proveedor_para, ruta_csv_de
from .sintetico import (
    DatasetSintetico,
    SinteticoConstants,
    escribir_dataset,
    generate_synthetic_dataset,
    rasterizar,
)

AJUSTES_MINIMOS = ['d_model=8', 'n_heads=2', 'n_layers=1', 'ffn_mult=2', 'clip_len=16',
                   'batch_size=2', 'warmup_iters=1', 'patch_size=8', 'query_size=16']


def config_minima(**cambios):
    return cargar_config(None, AJUSTES_MINIMOS + [f'{k}={v}' for k, v in cambios.items()])


def ultimo_tramo(frames):
    """Último tramo de frames consecutivos, recorriendo desde el final"""
    ordenados = sorted(frames)
    fin = ordenados[-1]
    inicio = fin
    for f in reversed(ordenados[:-1]):
        if f != inicio - 1:
            break
        inicio = f
    return inicio, fin


class ConfigTests(SimpleTestCase):

    def test_valores_por_defecto(self):
        cfg = cargar_config(None)
        self.assertEqual((cfg.clip_len, cfg.median_k, cfg.peak_ratio, cfg.tau), (32, 5, 0.7, 1.0))
        self.assertEqual((cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.shift_fraction), (64, 4, 3, 0.25))
        self.assertAlmostEqual(cfg.beta, 1 / 6)
        self.assertAlmostEqual(cfg.lambda_ct, 2 / 3)
        self.assertEqual((cfg.mu, cfg.focal_alpha, cfg.focal_gamma, cfg.p_queryaug), (0.1, 0.25, 2.0, 0.5))
        self.assertEqual((cfg.ffn_mult, cfg.w_l1, cfg.w_giou, cfg.head_pooling), (4, 1.0, 1.0, 'attention'))

    def test_clave_desconocida(self):
        with self.assertRaises(ConfiguracionError):
            cargar_config(None, ['learning_rate=0.1'])

    def test_rangos_y_combinaciones(self):
        for override in ('median_k=4', 'd_model=10', 'peak_ratio=1.5', 'p_queryaug=-0.1', 'tau=0',
                         'queryaug_strategy=nearest', 'n_heads=1', 'head_pooling=max'):
            with self.subTest(override=override), self.assertRaises(ConfiguracionError):
                cargar_config(None, [override])
        self.assertEqual(cargar_config(None, ['n_heads=1', 'mu=0']).n_heads, 1)

    def test_archivo_y_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'exp.cfg'
            ruta.write_text('# experimento\nepochs=3\nuse_egoact=false\nlr=0.001\n', encoding='utf-8')
            cfg = cargar_config(ruta, ['lr=0.01'])
        self.assertEqual(cfg.epochs, 3)
        self.assertFalse(cfg.use_egoact)
        self.assertEqual(cfg.lr, 0.01)

    def test_texto_se_relee_igual(self):
        cfg = config_minima(mu=0.25, seed=7)
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'cfg.txt'
            ruta.write_text(cfg.como_texto(), encoding='utf-8')
            self.assertEqual(cargar_config(ruta), cfg)

    def test_errores_de_entrada(self):
        with self.assertRaises(ConfiguracionError):
            cargar_config(None, ['sin_igual'])
        with self.assertRaises(ConfiguracionError):
            cargar_config('/no/existe.cfg')
        with self.assertRaises(ConfiguracionError):
            construir({'epochs': -1})


class AnotacionesTests(SimpleTestCase):

    def setUp(self):
        self.anotaciones, _ = generate_synthetic_dataset(2, seed=3)
        self.tmp = tempfile.TemporaryDirectory()
        self.ruta = Path(self.tmp.name) / 'annotations.json'

    def tearDown(self):
        self.tmp.cleanup()

    def reescribir(self, cambio):
        contenido = self.anotaciones.model_dump(mode='json')
        cambio(contenido)
        self.ruta.write_text(json.dumps(contenido), encoding='utf-8')

    def test_archivo_de_anotaciones_por_defecto(self):
        self.assertEqual(ArchivoAnotaciones(videos=[]).version, 1)

    def test_carga_y_normalizacion(self):
        guardar_anotaciones(self.ruta, self.anotaciones)
        _, videos = cargar_anotaciones(self.ruta)
        self.assertEqual(len(videos), 2)
        for v in videos:
            self.assertTrue(all(0.0 <= c.y1 <= c.y2 <= 1.0 and 0.0 <= c.x1 <= c.x2 <= 1.0 for c in v.cajas.values()))
            self.assertIn(v.query_ref.frame, v.cajas)

    def test_caja_fuera_de_la_imagen(self):
        def cambio(c):
            c['videos'][0]['queries'][0]['frames'][0]['box'] = [0, 0, 10, 60]
        self.reescribir(cambio)
        with self.assertRaises(AnotacionError):
            cargar_anotaciones(self.ruta)

    def test_segmento_inconsistente(self):
        def cambio(c):
            c['videos'][0]['queries'][0]['segment'] = [0, 0]
        self.reescribir(cambio)
        with self.assertRaises(AnotacionError):
            cargar_anotaciones(self.ruta)

    def test_esquema(self):
        self.reescribir(lambda c: c.update(version=2))
        with self.assertRaises(AnotacionError):
            cargar_anotaciones(self.ruta)
        self.reescribir(lambda c: c['videos'][0].update(fps=30))
        with self.assertRaises(AnotacionError):
            cargar_anotaciones(self.ruta)


class SinteticoTests(SimpleTestCase):

    def test_misma_semilla_mismos_bytes(self):
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            escribir_dataset(a, 4, seed=11)
            escribir_dataset(b, 4, seed=11)
            for nombre in (SinteticoConstants.ESCENAS, SinteticoConstants.ANOTACIONES, SinteticoConstants.GT):
                self.assertEqual((Path(a) / nombre).read_bytes(), (Path(b) / nombre).read_bytes())
            escribir_dataset(b, 4, seed=12)
            self.assertNotEqual((Path(a) / SinteticoConstants.ESCENAS).read_bytes(),
                                (Path(b) / SinteticoConstants.ESCENAS).read_bytes())

    def test_toda_escena_tiene_ocurrencias_y_segmento_correcto(self):
        anotaciones, _ = generate_synthetic_dataset(30, seed=5)
        for video in anotaciones.videos:
            consulta = video.queries[0]
            self.assertGreaterEqual(len(consulta.frames), 1)
            self.assertEqual(tuple(consulta.segment), ultimo_tramo([cf.frame for cf in consulta.frames]))

    def test_instancias_son_todos_los_frames_visibles_menos_la_consulta(self):
        anotaciones, _ = generate_synthetic_dataset(20, seed=9)
        for video in anotaciones.videos:
            consulta = video.queries[0]
            visibles = [cf.frame for cf in consulta.frames]
            instancias = [cf.frame for cf in consulta.instances]
            self.assertEqual(len(instancias), len(visibles) - 1)
            self.assertEqual(sorted(instancias), [t for t in visibles if t != consulta.query_frame])
        with tempfile.TemporaryDirectory() as tmp:
            escribir_dataset(tmp, 3, seed=9)
            for anotacion in DatasetSintetico(tmp).videos:
                self.assertEqual(len(anotacion.object_instances), len(anotacion.cajas) - 1)

    def test_oclusiones(self):
        anotaciones, _ = generate_synthetic_dataset(30, seed=5)
        ocluidos = [v.num_frames - len(v.queries[0].frames) for v in anotaciones.videos]
        self.assertTrue(all(n > 0 for n in ocluidos))

    def test_rasterizado(self):
        _, escenas = generate_synthetic_dataset(3, seed=2)
        for escena in escenas.escenas:
            frames = rasterizar(escena)
            self.assertEqual(frames.shape, (escena.num_frames, 48, 48, 3))
            color = np.asarray(escena.objetivo.color) / 255.0
            for t, caja in enumerate(escena.objetivo.cajas):
                hay_color = np.all(np.isclose(frames[t], color), axis=-1)
                if caja is None:
                    self.assertFalse(hay_color.any())
                else:
                    y1, x1, y2, x2 = caja
                    self.assertTrue(hay_color[y1:y2, x1:x2].all())
                    self.assertEqual(int(hay_color.sum()), (y2 - y1) * (x2 - x1))
            np.testing.assert_array_equal(frames, rasterizar(escena))


class DatasetTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        escribir_dataset(cls.tmp.name, 3, seed=1)
        cls.dataset = DatasetSintetico(cls.tmp.name)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_features_de_clip(self):
        cfg = config_minima()
        proveedor = proveedor_para(cfg, self.dataset)
        video = self.dataset.videos[0]
        clip = slice_clips(video, 64)[-1]
        feats = self.dataset.features_de_clip(clip, proveedor)
        self.assertEqual(feats.z_video.shape, (64, 36, 8))
        self.assertEqual(feats.z_query.shape, (4, 8))
        relleno = [t for t, f in enumerate(clip.frames) if f == FRAME_RELLENO]
        self.assertTrue(np.all(feats.z_video[relleno] == 0.0))

    def test_recorte_de_consulta(self):
        video = self.dataset.videos[0]
        recorte = self.dataset.recorte(video.query_ref)
        caja = video.query_ref.box
        alto = round(caja.y2 * 48) - round(caja.y1 * 48)
        ancho = round(caja.x2 * 48) - round(caja.x1 * 48)
        self.assertEqual(recorte.shape[:2], (alto, ancho))
        self.assertTrue(np.allclose(recorte, np.asarray(self.dataset.escenas[video.video_id].objetivo.color) / 255.0))

    def test_sin_epocas_guarda_modelo_sin_entrenar(self):
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'modelo.hvqf'
            _, historial = entrenar(config_minima(epochs=0), self.dataset, ruta, progreso=False)
            self.assertEqual(historial, [])
            self.assertEqual(ruta_csv_de(ruta).read_text(encoding='utf-8').strip(), "epoch,L_task,L_task',L_CT,L_TAG,total")
            modelo, configuracion = cargar_checkpoint(ruta)
            self.assertEqual(configuracion['d_model'], 8)
            self.assertEqual(modelo.cfg.n_layers, 1)

    def test_entrenamiento_corto_finito_y_determinista(self):
        cfg = config_minima(epochs=2)
        primero = Entrenador(cfg, self.dataset, progreso=False).entrenar()
        segundo = Entrenador(cfg, self.dataset, progreso=False).entrenar()
        self.assertEqual(len(primero), 2)
        self.assertEqual(primero, segundo)
        for fila in primero:
            self.assertTrue(all(np.isfinite(fila[c]) for c in ('L_task', "L_task'", 'L_CT', 'L_TAG', 'total')))

    def test_linea_base_sin_ct_ni_tag(self):
        cfg = config_minima(epochs=1, use_egoact='false', mu=0, lambda_ct=0)
        fila = Entrenador(cfg, self.dataset, progreso=False).entrenar()[0]
        self.assertEqual((fila['L_CT'], fila['L_TAG'], fila["L_task'"]), (0.0, 0.0, 0.0))

    def test_la_perdida_baja_en_varias_epocas(self):
        historial = Entrenador(config_minima(epochs=8, lr=0.01), self.dataset, progreso=False).entrenar()
        self.assertEqual(len(historial), 8)
        self.assertLess(historial[-1]['total'], historial[0]['total'])

    def test_cache_igual_a_features_de_clip(self):
        entrenador = Entrenador(config_minima(epochs=0), self.dataset, progreso=False)
        clip = entrenador.clips[0]
        otra = self.dataset.videos[0].object_instances[0]
        for consulta in (None, otra):
            directas = self.dataset.features_de_clip(clip, entrenador.proveedor, consulta)
            memorizadas = entrenador.cache.features(clip, consulta)
            np.testing.assert_allclose(memorizadas.z_video, directas.z_video, atol=1e-6)
            np.testing.assert_array_equal(memorizadas.z_query, directas.z_query)
        self.assertEqual(len(entrenador.cache), 1)
        self.assertIs(entrenador.cache.features(clip).z_video, entrenador.cache.features(clip, otra).z_video)

    def test_ablacion_con_una_semilla(self):
        cfg = config_minima(epochs=1)
        resultados = ablacion(cfg, self.dataset, self.dataset, semillas=1)
        self.assertEqual(set(resultados), {'completo', 'base'})
        for valores in resultados.values():
            self.assertEqual(len(valores), 1)
            self.assertTrue(0.0 <= valores[0] <= 1.0)
        base = config_de_variante(cfg, 'base')
        self.assertFalse(base.use_egoact or base.use_high_guide or base.use_mid_guide)
        fila = Entrenador(base, self.dataset, progreso=False).entrenar()[0]
        self.assertEqual((fila['L_CT'], fila['L_TAG']), (0.0, 0.0))
        with self.assertRaises(ConfiguracionError):
            ablacion(cfg, self.dataset, self.dataset, semillas=0)
        with self.assertRaises(ConfiguracionError):
            config_de_variante(cfg, 'sin_guias')


class ComandosTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def correr(self, *args):
        salida = io.StringIO()
        call_command(*args, stdout=salida)
        return salida.getvalue()

    def test_eval_de_archivos_identicos(self):
        self.correr('gen', '--out', str(self.dir / 'data'), '--videos', '3', '--seed', '4')
        gt = str(self.dir / 'data' / SinteticoConstants.GT)
        salida = self.correr('eval', '--pred', gt, '--gt', gt)
        self.assertEqual(salida.count('100.0'), 4)
        metricas = json.loads(self.correr('eval', '--pred', gt, '--gt', gt, '--json'))
        self.assertEqual(set(metricas.values()), {100.0})

    def test_train_infer_guides_augment(self):
        datos = str(self.dir / 'data')
        ckpt = str(self.dir / 'modelo.hvqf')
        self.correr('gen', '--out', datos, '--videos', '2', '--seed', '0')
        ajustes = [a for par in (('--set', s) for s in AJUSTES_MINIMOS + ['epochs=0']) for a in par]
        self.correr('train', '--data', datos, '--out', ckpt, '--sin-progreso', *ajustes)
        self.assertTrue(Path(ckpt).exists())

        pred = self.dir / 'pred.json'
        self.correr('infer', '--data', datos, '--ckpt', ckpt, '--out', str(pred), '--sin-progreso')
        self.assertEqual(set(cargar_tracks(pred)), set(cargar_tracks(Path(datos) / SinteticoConstants.GT)))
        primera = pred.read_bytes()
        self.correr('infer', '--data', datos, '--ckpt', ckpt, '--out', str(pred), '--sin-progreso', '--trabajadores', '3')
        self.assertEqual(pred.read_bytes(), primera)

        _, videos = cargar_anotaciones(Path(datos) / SinteticoConstants.ANOTACIONES)
        clip_id = slice_clips(videos[0], 16)[0].clip_id
        self.correr('guides', '--data', datos, '--ckpt', ckpt, '--clip', clip_id, '--out', str(self.dir / 'mapas'))
        self.assertTrue((self.dir / 'mapas' / f'{clip_id}_guias.csv').exists())
        self.assertEqual(len(list((self.dir / 'mapas').glob(f'{clip_id}_mid_r*.pgm'))), 2)

        self.correr('augment', '--data', datos, '--seed', '3', '--out', str(self.dir / 'pares'), *ajustes)
        pares = json.loads((self.dir / 'pares' / 'pairs.json').read_text(encoding='utf-8'))
        for par in pares['pairs']:
            self.assertEqual(sorted(par['permutation']), list(range(16)))

    def test_errores_con_diagnostico(self):
        with self.assertRaises(CommandError):
            self.correr('eval', '--pred', str(self.dir / 'no.json'), '--gt', str(self.dir / 'no.json'))
        with self.assertRaises(CommandError):
            self.correr('train', '--data', str(self.dir), '--out', str(self.dir / 'm.hvqf'), '--set', 'd_model=10')
        with self.assertRaises(CommandError):
            self.correr('train', '--data', str(self.dir / 'vacio'), '--out', str(self.dir / 'm.hvqf'))

    def test_ablate_json(self):
        datos = str(self.dir / 'data')
        self.correr('gen', '--out', datos, '--videos', '2', '--seed', '0')
        ajustes = [a for par in (('--set', s) for s in AJUSTES_MINIMOS + ['epochs=1']) for a in par]
        salida = json.loads(self.correr('ablate', '--train', datos, '--val', datos, '--seeds', '1', '--json',
                                        *ajustes))
        self.assertEqual(set(salida), {'success_medio', 'por_semilla'})
        self.assertEqual(set(salida['success_medio']), {'completo', 'base'})
        self.assertEqual({k: len(v) for k, v in salida['por_semilla'].items()}, {'completo': 1, 'base': 1})
        for nombre, media in salida['success_medio'].items():
            self.assertAlmostEqual(media, 100.0 * salida['por_semilla'][nombre][0], places=3)

    def test_gradcheck(self):
        salida = self.correr('gradcheck')
        self.assertNotIn('FALLA', salida)
        self.assertIn('chequeos aprobados', salida)


class ConfigPydanticTests(SimpleTestCase):

    def test_congelada(self):
        cfg = Config()
        with self.assertRaises(Exception):
            cfg.seed = 3
        self.assertEqual(cfg.con_cambios(seed=3).seed, 3)
        self.assertEqual(cfg.seed, 0)
