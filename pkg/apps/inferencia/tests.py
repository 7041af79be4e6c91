import json
import tempfile
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase

from apps.aumentos.muestras import FRAME_RELLENO, QueryRef
from apps.geometria.cajas import BBox
from apps.guias.guia import EncoderFeatures
from apps.modelo.localizador import DecoderConfig, Localizador
from hero_vql.excepciones import ConfiguracionError, ConsultaError, FormatoError
from .intercambio import cargar_tracks, guardar_tracks
from .metricas import average_precision, evaluate, stiou, tiou
from .pipeline import (
    ResponseTrack,
    VideoAnnotation,
    extract_last_segment,
    inferir_video,
    median_filter,
    slice_clips,
)

CAJA = BBox(0.1, 0.1, 0.5, 0.5)
LEJANA = BBox(0.6, 0.6, 0.9, 0.9)


def video(num_frames, frames_gt, query_id='q0'):
    cajas = {t: CAJA.con_frame(t) for t in frames_gt}
    return VideoAnnotation(query_id, 'v0', num_frames, cajas, QueryRef('v0', 0, CAJA, 'obj'))


def track(inicio, fin, caja=CAJA, puntaje=1.0):
    return ResponseTrack((inicio, fin), tuple(caja.con_frame(t) for t in range(inicio, fin + 1)), puntaje)


def ap_enumerado(aciertos, n_gt):
    """Suma, por cada acierto del ranking, la mejor precisión alcanzada desde ese rango"""
    precisiones = [sum(aciertos[:k + 1]) / (k + 1) for k in range(len(aciertos))]
    total = 0.0
    for k, acierto in enumerate(aciertos):
        if acierto:
            total += max(precisiones[k:])
    return total / n_gt


class SliceClipsTests(SimpleTestCase):

    def test_video_exacto(self):
        clips = slice_clips(video(64, [3]), 32)
        self.assertEqual(len(clips), 2)
        self.assertEqual(clips[1].frames, tuple(range(32, 64)))
        self.assertTrue(all(c.mascara_valida().all() for c in clips))

    def test_relleno_del_ultimo_clip(self):
        clips = slice_clips(video(70, [3]), 32)
        self.assertEqual(len(clips), 3)
        ultimo = clips[-1]
        self.assertEqual(ultimo.T, 32)
        self.assertEqual(int((~ultimo.mascara_valida()).sum()), 26)
        self.assertEqual(ultimo.frames[:6], tuple(range(64, 70)))
        self.assertTrue(all(f == FRAME_RELLENO for f in ultimo.frames[6:]))
        self.assertFalse(any(ultimo.occurrence[6:]))

    def test_filtro_de_entrenamiento(self):
        v = video(100, [40, 41, 99])
        self.assertEqual(len(slice_clips(v, 32)), 4)
        entrenamiento = slice_clips(v, 32, entrenamiento=True)
        self.assertEqual([c.clip_id for c in entrenamiento], ['q0_c001', 'q0_c003'])

    def test_cajas_en_su_frame(self):
        clip = slice_clips(video(40, [35]), 32)[1]
        self.assertEqual(clip.indices_gt, [3])
        self.assertEqual(clip.gt_boxes[3], CAJA.con_frame(35))

    def test_video_vacio_y_longitud_invalida(self):
        self.assertEqual(slice_clips(video(0, []), 32), [])
        with self.assertRaises(ConfiguracionError):
            slice_clips(video(10, []), 0)


class MedianFilterTests(SimpleTestCase):

    def test_constante(self):
        np.testing.assert_array_equal(median_filter([0.4] * 9), [0.4] * 9)

    def test_pico_aislado(self):
        np.testing.assert_array_equal(median_filter([0, 0, 9, 0, 0], 5), [0, 0, 0, 0, 0])

    def test_oraculo_por_ordenamiento(self):
        rng = np.random.default_rng(0)
        for k in (1, 3, 5, 7):
            x = rng.uniform(size=50)
            r = k // 2
            esperado = []
            for i in range(50):
                ventana = sorted(x[min(max(j, 0), 49)] for j in range(i - r, i + r + 1))
                esperado.append(ventana[r])
            np.testing.assert_allclose(median_filter(x, k), esperado)

    def test_kernel_par(self):
        with self.assertRaises(ConfiguracionError):
            median_filter([1.0, 2.0], 4)


class ExtractLastSegmentTests(SimpleTestCase):

    def cajas(self, n):
        return [CAJA] * n

    def test_bloque_unico(self):
        t = extract_last_segment([0.0, 0.1, 0.8, 0.9, 0.85, 0.1], self.cajas(6))
        self.assertEqual(t.segment, (2, 4))
        self.assertAlmostEqual(t.peak_score, 0.9)

    def test_ultimo_tramo(self):
        t = extract_last_segment([.1, .9, .1, .1, .8, .1], self.cajas(6))
        self.assertEqual(t.segment, (4, 4))
        self.assertAlmostEqual(t.peak_score, 0.9)

    def test_invariante_a_escala(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = rng.uniform(size=20)
            base = extract_last_segment(s, self.cajas(20))
            for c in (0.01, 3.0, 250.0):
                self.assertEqual(extract_last_segment(s * c, self.cajas(20)).segment, base.segment)

    def test_sin_pico(self):
        self.assertIsNone(extract_last_segment([0.0, 0.0, 0.0], self.cajas(3)))

    def test_frames_del_video(self):
        t = extract_last_segment([0.2, 0.9, 0.9], self.cajas(3), frames=[30, 31, 32])
        self.assertEqual(t.segment, (31, 32))
        self.assertEqual([c.frame for c in t.boxes], [31, 32])


class MetricasTests(SimpleTestCase):

    def test_tiou(self):
        self.assertAlmostEqual(tiou((0, 9), (5, 14)), 5 / 15)
        self.assertEqual(tiou((0, 3), (4, 8)), 0.0)
        self.assertEqual(tiou((7, 7), (7, 7)), 1.0)

    def test_stiou(self):
        self.assertAlmostEqual(stiou(track(0, 9), track(0, 9)), 1.0)
        self.assertEqual(stiou(track(0, 4), track(5, 9)), 0.0)
        self.assertEqual(stiou(None, track(0, 4)), 0.0)
        # mitad de los frames compartidos con la misma caja
        self.assertAlmostEqual(stiou(track(0, 9), track(5, 14)), 5 / 15)

    def test_detector_perfecto(self):
        gts = {f'q{i}': track(i, i + 5) for i in range(4)}
        r = evaluate(dict(gts), gts)
        self.assertEqual((r.tap25, r.stap25, r.recovery_pct, r.success_pct), (1.0, 1.0, 1.0, 1.0))

    def test_predicciones_vacias(self):
        gts = {f'q{i}': track(i, i + 5) for i in range(4)}
        r = evaluate({q: None for q in gts}, gts)
        self.assertEqual((r.tap25, r.stap25, r.recovery_pct, r.success_pct), (0.0, 0.0, 0.0, 0.0))

    def test_cinco_consultas_contra_enumeracion(self):
        gts = {f'q{i}': track(10, 19) for i in range(1, 6)}
        preds = {
            'q1': track(10, 19, puntaje=0.9),
            'q2': track(40, 49, puntaje=0.8),
            'q3': track(10, 19, LEJANA, puntaje=0.7),
            'q4': track(60, 69, puntaje=0.6),
            'q5': None,
        }
        r = evaluate(preds, gts)
        self.assertAlmostEqual(r.tap25, ap_enumerado([True, False, True, False], 5))
        self.assertAlmostEqual(r.tap25, (1 + 2 / 3) / 5)
        self.assertAlmostEqual(r.stap25, ap_enumerado([True, False, False, False], 5))
        self.assertAlmostEqual(r.recovery_pct, 10 / 50)
        self.assertAlmostEqual(r.success_pct, 1 / 5)

    def test_ap_contra_enumeracion_aleatoria(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            aciertos = list(rng.random(8) < 0.5)
            self.assertAlmostEqual(average_precision(aciertos, 10), ap_enumerado(aciertos, 10))

    def test_invariante_al_orden_de_consultas(self):
        rng = np.random.default_rng(3)
        gts, preds = {}, {}
        for i in range(8):
            inicio = int(rng.integers(0, 20))
            gts[f'q{i}'] = track(inicio, inicio + 6)
            desplazado = inicio + int(rng.integers(-4, 5))
            preds[f'q{i}'] = track(max(desplazado, 0), max(desplazado, 0) + 6, puntaje=float(rng.uniform()))
        base = evaluate(preds, gts)
        claves = list(gts)
        rng.shuffle(claves)
        self.assertEqual(evaluate({q: preds[q] for q in claves}, {q: gts[q] for q in reversed(claves)}), base)

    def test_mejorar_una_caja_no_empeora(self):
        gts = {'q0': track(0, 4), 'q1': track(0, 4)}
        lejos = BBox(0.3, 0.3, 0.7, 0.7)
        preds = {'q0': track(0, 4, lejos, 0.9), 'q1': track(0, 4, LEJANA, 0.5)}
        antes = evaluate(preds, gts)
        mejor = dict(preds, q0=track(0, 4, BBox(0.15, 0.15, 0.5, 0.5), 0.9))
        despues = evaluate(mejor, gts)
        for campo in ('tap25', 'stap25', 'recovery_pct', 'success_pct'):
            self.assertGreaterEqual(getattr(despues, campo), getattr(antes, campo))

    def test_consultas_distintas(self):
        with self.assertRaises(ConsultaError):
            evaluate({'q0': None}, {'q1': track(0, 1)})


class IntercambioTests(SimpleTestCase):

    def test_prediccion_vacia_y_lectura(self):
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'pred.json'
            guardar_tracks(ruta, [('q1', 'v1', track(3, 5, puntaje=0.7)), ('q0', 'v0', None)])
            contenido = json.loads(ruta.read_text(encoding='utf-8'))
            self.assertEqual(contenido['queries'][0],
                             {'query_id': 'q0', 'video_id': 'v0', 'segment': None, 'boxes': [], 'score': 0.0})
            tracks = cargar_tracks(ruta)
        self.assertIsNone(tracks['q0'])
        self.assertEqual(tracks['q1'].segment, (3, 5))
        self.assertEqual(tracks['q1'].boxes[0].frame, 3)

    def test_archivo_invalido(self):
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'pred.json'
            ruta.write_text('{"queries": [{"query_id": "q", "video_id": "v", "segment": [2, 4], "boxes": []}]}',
                            encoding='utf-8')
            with self.assertRaises(FormatoError):
                cargar_tracks(ruta)
            with self.assertRaises(FormatoError):
                cargar_tracks(Path(tmp) / 'no_existe.json')


class InferirVideoTests(SimpleTestCase):

    def test_track_dentro_del_video(self):
        rng = np.random.default_rng(4)
        D = 8
        w = np.linalg.qr(rng.normal(size=(D, D)))[0]

        def features_de_clip(clip):
            return EncoderFeatures(
                z_video=rng.normal(size=(clip.T, 4, D)) * clip.mascara_valida()[:, None, None],
                z_query=rng.normal(size=(4, D)), z_cls=rng.normal(size=D),
                w_q=w, w_k=w, grid=(2, 2), grid_consulta=(2, 2),
            )

        modelo = Localizador(DecoderConfig(8, 2, 1, 2, 0.25), seed=0)
        cfg = SimpleNamespace(clip_len=4, median_k=3, peak_ratio=0.7, n_heads=2, tau=1.0,
                              use_high_guide=True, use_mid_guide=True, repair_tokens=True)
        t = inferir_video(modelo, video(10, [2, 3]), features_de_clip, cfg)
        self.assertIsNotNone(t)
        self.assertGreaterEqual(t.segment[0], 0)
        self.assertLessEqual(t.segment[1], 9)
        self.assertTrue(0.0 < t.peak_score < 1.0)
