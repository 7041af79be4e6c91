import io
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from hero_vql.excepciones import DimensionError, FormatoError
from . import hvqf
from . import tensor as tg
from .gradcheck import CASOS_OPERACIONES, error_relativo, verificar_gradiente
from .optim import AdamW, ProgramaLineal
from .tensor import Tensor, precision


class MatmulTests(SimpleTestCase):

    def test_identidad(self):
        eye = Tensor(np.eye(2))
        np.testing.assert_allclose(tg.matmul(eye, eye).data, np.eye(2))

    def test_producto_conocido(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [1.0]])
        np.testing.assert_allclose((a @ b).data, [[3.0], [7.0]])

    def test_extensiones_incompatibles(self):
        with self.assertRaises(DimensionError):
            tg.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradiente_vs_diferencias_finitas(self):
        with precision(np.float64):
            for semilla in range(5):
                rng = np.random.default_rng(semilla)
                a = Tensor(rng.uniform(-2, 2, (4, 5)))
                b = Tensor(rng.uniform(-2, 2, (5, 3)))
                err = verificar_gradiente(lambda x, y: tg.matmul(x, y).sum(), [a, b])
                self.assertLess(err, 1e-3)


class SoftmaxTests(SimpleTestCase):

    def test_simetria(self):
        salida = tg.softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(salida.data, [1 / 3] * 3, atol=1e-6)

    def test_estabilidad(self):
        salida = tg.softmax(Tensor([1000.0, 0.0]))
        self.assertTrue(np.all(np.isfinite(salida.data)))
        np.testing.assert_allclose(salida.data, [1.0, 0.0], atol=1e-6)

    def test_filas_suman_uno(self):
        rng = np.random.default_rng(3)
        salida = tg.softmax(Tensor(rng.normal(size=(5, 7))), axis=-1)
        np.testing.assert_allclose(salida.data.sum(axis=-1), np.ones(5), atol=1e-6)

    def test_gradiente(self):
        with precision(np.float64):
            rng = np.random.default_rng(0)
            x = Tensor(rng.uniform(-2, 2, (3, 4)))
            pesos = Tensor(rng.normal(size=(3, 4)))
            err = verificar_gradiente(lambda t: (tg.softmax(t, axis=1) * pesos).sum(), [x])
            self.assertLess(err, 1e-3)


class StopGradientTests(SimpleTestCase):

    def test_regla_del_producto_con_constante(self):
        x = Tensor([1.5, -2.0, 3.0], requires_grad=True)
        y = (tg.stop_gradient(x) * x).sum()
        y.backward()
        np.testing.assert_allclose(x.grad, x.data)

    def test_rama_detenida_no_acumula(self):
        x = Tensor([2.0], requires_grad=True)
        detenido = tg.stop_gradient(x)
        self.assertFalse(detenido.requires_grad)
        (detenido * 5.0 + x).sum().backward()
        np.testing.assert_allclose(x.grad, [1.0])

    def test_idempotencia(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        una = tg.stop_gradient(x)
        dos = tg.stop_gradient(tg.stop_gradient(x))
        np.testing.assert_array_equal(una.data, dos.data)
        self.assertFalse(dos.requires_grad)


class CintaTests(SimpleTestCase):

    def test_subexpresion_compartida_acumula(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x
        z = (y + y * 2.0).sum()
        z.backward()
        # dz/dx = 3 * 2x
        np.testing.assert_allclose(x.grad, [18.0])

    def test_broadcast_reduce_gradiente(self):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        (a * b).sum().backward()
        self.assertEqual(b.grad.shape, (4,))
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))

    def test_indexado_con_repeticiones_acumula(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        (x[np.array([0, 0, 2])].sum() + x[1:3].sum() + x[3]).backward()
        np.testing.assert_allclose(x.grad, [2.0, 1.0, 2.0, 1.0])

    def test_layer_norm_contra_la_formula(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(2, 3, 5))
        gamma, beta = rng.normal(size=5), rng.normal(size=5)
        with precision(np.float64):
            salida = tg.layer_norm(Tensor(x), Tensor(gamma), Tensor(beta)).data
        media = x.mean(axis=-1, keepdims=True)
        esperado = (x - media) / np.sqrt(x.var(axis=-1, keepdims=True) + 1e-5) * gamma + beta
        np.testing.assert_allclose(salida, esperado, atol=1e-10)

    def test_backward_requiere_raiz_escalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with self.assertRaises(DimensionError):
            (x * 2.0).backward()

    def test_gradientes_finitos(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(6, 5)) * 30.0, requires_grad=True)
        perdida = (tg.log_sigmoid(x) + tg.softmax(x) + tg.sigmoid(x)).sum()
        perdida.backward()
        self.assertTrue(np.all(np.isfinite(x.grad)))


class OperacionesGradienteTests(SimpleTestCase):
    """Cada operación diferenciable contra diferencias centrales en float64"""

    def test_todas_las_operaciones(self):
        with precision(np.float64):
            for nombre, funcion in CASOS_OPERACIONES.items():
                for semilla in range(3):
                    rng = np.random.default_rng(semilla)
                    a = Tensor(rng.uniform(-2, 2, (3, 3)))
                    b = Tensor(rng.uniform(-2, 2, (3, 3)))
                    with self.subTest(operacion=nombre, semilla=semilla):
                        self.assertLess(verificar_gradiente(funcion, [a, b]), 1e-3)

    def test_error_relativo_con_piso(self):
        self.assertEqual(error_relativo(np.zeros(3), np.zeros(3)), 0.0)
        self.assertAlmostEqual(error_relativo([1.0], [1.0 + 1e-4]), 1e-4 / (2.0 + 1e-4), places=8)


class PrecisionTests(SimpleTestCase):

    def test_contexto_restaura(self):
        anterior = tg.obtener_precision()
        with precision(np.float64):
            self.assertEqual(Tensor([1.0]).data.dtype, np.float64)
        self.assertIs(tg.obtener_precision(), anterior)

    def test_item(self):
        self.assertEqual(Tensor([[2.5]]).item(), 2.5)
        with self.assertRaises(DimensionError):
            Tensor([1.0, 2.0]).item()


class OptimizadorTests(SimpleTestCase):

    def test_programa_lineal(self):
        programa = ProgramaLineal(1.0, warmup=4, total=12)
        self.assertAlmostEqual(programa(0), 0.25)
        self.assertAlmostEqual(programa(3), 1.0)
        self.assertAlmostEqual(programa(8), 0.5)
        self.assertEqual(programa(12), 0.0)

    def test_adamw_minimiza_cuadratica(self):
        w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        optimizador = AdamW({'w': w}, lr=0.1, weight_decay=0.0,
                            programa=ProgramaLineal(0.1, warmup=0, total=400))
        for _ in range(400):
            optimizador.zero_grad()
            (w * w).sum().backward()
            optimizador.step()
        self.assertLess(float((w.data ** 2).sum()), 0.1)


class HVQFTests(SimpleTestCase):

    def test_cabecera_y_payload(self):
        arreglo = np.arange(6, dtype=np.float32).reshape(2, 3)
        buffer = io.BytesIO()
        hvqf.escribir_tensor(buffer, arreglo)
        crudo = buffer.getvalue()
        self.assertEqual(crudo[:4], b'HVQF')
        self.assertEqual(int.from_bytes(crudo[4:8], 'little'), 2)
        self.assertEqual(int.from_bytes(crudo[8:12], 'little'), 2)
        self.assertEqual(int.from_bytes(crudo[12:16], 'little'), 3)
        self.assertEqual(len(crudo), 16 + 6 * 4)

    def test_contenedor_en_disco(self):
        with tempfile.TemporaryDirectory() as tmp:
            ruta = Path(tmp) / 'ckpt.hvqf'
            hvqf.guardar_contenedor(ruta, {'b': np.ones(3), 'a': np.zeros((2, 2))})
            leidos = hvqf.cargar_contenedor(ruta)
        self.assertEqual(sorted(leidos), ['a', 'b'])
        np.testing.assert_array_equal(leidos['b'], np.ones(3, dtype=np.float32))

    def test_archivo_truncado(self):
        buffer = io.BytesIO()
        hvqf.escribir_tensor(buffer, np.ones(4))
        with self.assertRaises(FormatoError):
            hvqf.leer_tensor(io.BytesIO(buffer.getvalue()[:-3]))

    def test_magic_invalido(self):
        with self.assertRaises(FormatoError):
            hvqf.leer_tensor(io.BytesIO(b'XXXX\x00\x00\x00\x00'))
