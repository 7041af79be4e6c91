import math

import numpy as np
from django.test import SimpleTestCase

from hero_vql.excepciones import CajaError
from .cajas import BBox, displacement, giou, iou

RESOLUCION = 64


def caja(*coords):
    return BBox.desde_lista(coords)


def mascara(b):
    """Celdas de una grilla RESOLUCION×RESOLUCION cuyo centro cae dentro de la caja"""
    centros = (np.arange(RESOLUCION) + 0.5) / RESOLUCION
    ys, xs = np.meshgrid(centros, centros, indexing='ij')
    return (ys >= b.y1) & (ys < b.y2) & (xs >= b.x1) & (xs < b.x2)


def caja_en_grilla(rng):
    y = np.sort(rng.integers(0, RESOLUCION + 1, size=2)) / RESOLUCION
    x = np.sort(rng.integers(0, RESOLUCION + 1, size=2)) / RESOLUCION
    return BBox(y[0], x[0], y[1], x[1])


class BBoxTests(SimpleTestCase):

    def test_vista_xywh(self):
        b = caja(0.1, 0.2, 0.5, 0.6)
        vista = b.xywh()
        self.assertAlmostEqual(vista['x'], 0.2)
        self.assertAlmostEqual(vista['y'], 0.1)
        self.assertAlmostEqual(vista['w'], 0.4)
        self.assertAlmostEqual(vista['h'], 0.4)

    def test_degenerada_marcada(self):
        self.assertTrue(caja(0.3, 0.3, 0.3, 0.8).degenerada)
        self.assertFalse(caja(0.0, 0.0, 1.0, 1.0).degenerada)

    def test_caja_invertida(self):
        with self.assertRaises(CajaError):
            caja(0.5, 0.0, 0.2, 1.0)

    def test_coordenadas_no_finitas(self):
        with self.assertRaises(CajaError):
            caja(0.0, 0.0, float('nan'), 1.0)

    def test_desde_centro_recorta(self):
        b = BBox.desde_centro(0.95, 0.5, 0.2, 0.2)
        self.assertEqual(b.x2, 1.0)
        self.assertAlmostEqual(b.x1, 0.85)


class IoUTests(SimpleTestCase):

    def test_identidad(self):
        b = caja(0.1, 0.1, 0.4, 0.7)
        self.assertAlmostEqual(iou(b, b), 1.0)

    def test_disjuntas(self):
        self.assertEqual(iou(caja(0, 0, 1, 1), caja(0, 2, 1, 3)), 0.0)

    def test_un_tercio(self):
        self.assertAlmostEqual(iou(caja(0, 0, 2, 2), caja(0, 1, 2, 3)), 1 / 3)

    def test_union_vacia(self):
        self.assertEqual(iou(caja(0.2, 0.2, 0.2, 0.2), caja(0.5, 0.5, 0.5, 0.5)), 0.0)

    def test_grilla_de_pixeles(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            a, b = caja_en_grilla(rng), caja_en_grilla(rng)
            ma, mb = mascara(a), mascara(b)
            union = np.logical_or(ma, mb).sum()
            esperado = np.logical_and(ma, mb).sum() / union if union else 0.0
            self.assertAlmostEqual(iou(a, b), esperado, delta=1e-3)
            self.assertAlmostEqual(iou(a, b), iou(b, a))


class GIoUTests(SimpleTestCase):

    def test_identidad(self):
        b = caja(0.2, 0.1, 0.6, 0.3)
        self.assertAlmostEqual(giou(b, b), 1.0)

    def test_esquinas_opuestas(self):
        self.assertAlmostEqual(giou(caja(0, 0, 1, 1), caja(1, 1, 2, 2)), -0.5)

    def test_anidadas_igual_iou(self):
        exterior = caja(0.0, 0.0, 1.0, 1.0)
        interior = caja(0.2, 0.3, 0.5, 0.9)
        self.assertAlmostEqual(giou(exterior, interior), iou(exterior, interior))

    def test_ambas_degeneradas(self):
        self.assertEqual(giou(caja(0.1, 0.1, 0.1, 0.9), caja(0.2, 0.2, 0.8, 0.2)), 0.0)

    def test_grilla_de_pixeles(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            a, b = caja_en_grilla(rng), caja_en_grilla(rng)
            if a.degenerada and b.degenerada:
                continue
            ma, mb = mascara(a), mascara(b)
            mc = mascara(BBox(min(a.y1, b.y1), min(a.x1, b.x1), max(a.y2, b.y2), max(a.x2, b.x2)))
            union = np.logical_or(ma, mb).sum()
            envolvente = mc.sum()
            iou_grilla = np.logical_and(ma, mb).sum() / union if union else 0.0
            esperado = iou_grilla - (envolvente - union) / envolvente if envolvente else 0.0
            self.assertAlmostEqual(giou(a, b), esperado, delta=1e-3)
            self.assertLessEqual(giou(a, b), iou(a, b) + 1e-12)
            self.assertAlmostEqual(giou(a, b), giou(b, a))


class DisplacementTests(SimpleTestCase):

    def test_identidad(self):
        b = caja(0.1, 0.2, 0.3, 0.4)
        self.assertEqual(displacement(b, b).total, 0.0)

    def test_valores_calculados(self):
        d = displacement(caja(0, 0, 2, 2), caja(0, 0, 2, 4))
        self.assertAlmostEqual(d.D, 1.0)
        self.assertAlmostEqual(abs(d.dw), 2.0)
        self.assertAlmostEqual(abs(d.dh), 0.0)
        self.assertAlmostEqual(abs(d.sw), math.log(2))
        self.assertAlmostEqual(abs(d.sh), 0.0)
        self.assertAlmostEqual(d.total, 2.0 + 1.0 + math.log(2), places=4)

    def test_ancho_cero(self):
        d = displacement(caja(0.1, 0.5, 0.4, 0.5), caja(0.1, 0.1, 0.4, 0.6))
        self.assertEqual(d.sw, 0.0)
        self.assertTrue(math.isfinite(d.total))

    def test_simetria_del_total(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a, b = caja_en_grilla(rng), caja_en_grilla(rng)
            ida, vuelta = displacement(a, b), displacement(b, a)
            self.assertAlmostEqual(ida.total, vuelta.total)
            self.assertAlmostEqual(ida.dw, -vuelta.dw)
