# apps/tensores/tensor.py
"""
Kernel mínimo de arreglos densos con diferenciación en modo reverso.

Cada operación crea un nodo de la cinta con sus padres y una clausura
`_retro` que reparte el gradiente de salida entre ellos. `backward()`
recorre la cinta en orden topológico inverso y acumula (suma) gradientes,
por lo que las subexpresiones compartidas quedan bien contadas.
"""

from contextlib import contextmanager
import logging

import numpy as np
from scipy.special import expit

from hero_vql.excepciones import DimensionError

logger = logging.getLogger(__name__)


# ==================== PRECISIÓN ====================
class PrecisionConstants:
    """Tipos de punto flotante admitidos por el kernel"""
    POR_DEFECTO = np.float32
    ADMITIDAS = {
        'float32': np.float32,
        'float64': np.float64,
    }


_precision_actual = PrecisionConstants.POR_DEFECTO


def obtener_precision():
    """Retorna el dtype con el que se construyen los tensores"""
    return _precision_actual


def establecer_precision(nombre):
    """Fija la precisión global a partir de su nombre ('float32' | 'float64')"""
    global _precision_actual
    if nombre not in PrecisionConstants.ADMITIDAS:
        raise ValueError(f'Precisión no admitida: {nombre}')
    _precision_actual = PrecisionConstants.ADMITIDAS[nombre]


@contextmanager
def precision(dtype):
    """
    Cambia temporalmente la precisión de los tensores nuevos.

    Uso:
        with precision(np.float64):
            ...  # chequeos de diferencias finitas
    """
    global _precision_actual
    anterior = _precision_actual
    _precision_actual = np.dtype(dtype).type
    try:
        yield
    finally:
        _precision_actual = anterior


# ==================== TENSOR ====================
class Tensor:
    """
    Arreglo denso con gradiente opcional.

    data: np.ndarray (la forma es data.shape, el contenido es row-major)
    requires_grad: si el tensor participa en la cinta
    grad: np.ndarray de la misma forma, presente tras backward()
    """

    __slots__ = ('data', 'requires_grad', 'grad', '_padres', '_retro', '_op')
    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, _padres=(), _op=''):
        self.data = np.asarray(data, dtype=_precision_actual)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._padres = tuple(_padres)
        self._retro = None
        self._op = _op

    # ---------- propiedades ----------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        """Copia de los valores como np.ndarray"""
        return self.data.copy()

    def item(self):
        if self.data.size != 1:
            raise DimensionError(f'item() requiere un tensor de un elemento, forma {self.shape}')
        return float(self.data.reshape(-1)[0])

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op='{self._op}', requires_grad={self.requires_grad})"

    # ---------- gradientes ----------
    def _acumular(self, grad):
        """Suma un gradiente entrante (DAG con subexpresiones compartidas)"""
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            grad = _reducir_a_forma(grad, self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """
        Propaga gradientes desde este tensor (raíz de la cinta).

        Sin argumento la raíz debe ser escalar y recibe gradiente 1.
        """
        if not self.requires_grad:
            logger.debug('backward() sobre un tensor sin requires_grad; no hay nada que propagar')
            return
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f'backward() sin gradiente requiere una raíz escalar, forma {self.shape}'
                )
            grad = np.ones_like(self.data)
        orden = _orden_topologico(self)
        self._acumular(grad)
        for nodo in reversed(orden):
            if nodo._retro is not None and nodo.grad is not None:
                nodo._retro(nodo.grad)

    # ---------- operadores ----------
    def __add__(self, otro):
        return add(self, otro)

    def __radd__(self, otro):
        return add(otro, self)

    def __sub__(self, otro):
        return sub(self, otro)

    def __rsub__(self, otro):
        return sub(otro, self)

    def __mul__(self, otro):
        return mul(self, otro)

    def __rmul__(self, otro):
        return mul(otro, self)

    def __truediv__(self, otro):
        return div(self, otro)

    def __rtruediv__(self, otro):
        return div(otro, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponente):
        return power(self, exponente)

    def __matmul__(self, otro):
        return matmul(self, otro)

    def __getitem__(self, indice):
        return getitem(self, indice)

    # ---------- atajos ----------
    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *forma):
        if len(forma) == 1 and isinstance(forma[0], (tuple, list)):
            forma = tuple(forma[0])
        return reshape(self, forma)

    def transpose(self, *ejes):
        if len(ejes) == 1 and isinstance(ejes[0], (tuple, list)):
            ejes = tuple(ejes[0])
        return transpose(self, ejes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)

    def detach(self):
        return stop_gradient(self)


# ==================== UTILIDADES INTERNAS ====================
def as_tensor(valor):
    """Envuelve constantes (escalares, listas, arreglos) como tensores sin gradiente"""
    if isinstance(valor, Tensor):
        return valor
    return Tensor(valor)


def _crear(data, padres, retro, op):
    """Crea el nodo de salida y lo engancha a la cinta solo si algún padre lo requiere"""
    requiere = any(p.requires_grad for p in padres)
    salida = Tensor(data, requires_grad=requiere, _padres=padres if requiere else (), _op=op)
    if requiere:
        salida._retro = retro
    return salida


def _reducir_a_forma(grad, forma):
    """Deshace el broadcasting sumando sobre los ejes expandidos"""
    while grad.ndim > len(forma):
        grad = grad.sum(axis=0)
    for eje, extension in enumerate(forma):
        if extension == 1 and grad.shape[eje] != 1:
            grad = grad.sum(axis=eje, keepdims=True)
    return grad


def _orden_topologico(raiz):
    """Orden topológico iterativo (sin recursión, la cinta puede ser profunda)"""
    visitados = set()
    orden = []
    pila = [(raiz, False)]
    while pila:
        nodo, expandido = pila.pop()
        if expandido:
            orden.append(nodo)
            continue
        if id(nodo) in visitados:
            continue
        visitados.add(id(nodo))
        pila.append((nodo, True))
        for padre in nodo._padres:
            if id(padre) not in visitados:
                pila.append((padre, False))
    return orden


def _normalizar_ejes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# ==================== OPERACIONES ELEMENTALES ====================
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def retro(g):
        a._acumular(g)
        b._acumular(g)
    return _crear(a.data + b.data, (a, b), retro, 'add')


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def retro(g):
        a._acumular(g)
        b._acumular(-g)
    return _crear(a.data - b.data, (a, b), retro, 'sub')


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def retro(g):
        a._acumular(g * b.data)
        b._acumular(g * a.data)
    return _crear(a.data * b.data, (a, b), retro, 'mul')


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def retro(g):
        a._acumular(g / b.data)
        b._acumular(-g * a.data / (b.data * b.data))
    return _crear(a.data / b.data, (a, b), retro, 'div')


def neg(a):
    a = as_tensor(a)

    def retro(g):
        a._acumular(-g)
    return _crear(-a.data, (a,), retro, 'neg')


def power(a, exponente):
    """a ** exponente con exponente escalar constante"""
    a = as_tensor(a)
    exponente = float(exponente)

    def retro(g):
        with np.errstate(divide='ignore', invalid='ignore'):
            local = exponente * np.power(a.data, exponente - 1.0)
        # En x = 0 la derivada es 0 si e > 1, 1 si e == 1 y se toma 0 si e < 1
        en_cero = a.data == 0
        if np.any(en_cero):
            local = np.where(en_cero, 1.0 if exponente == 1.0 else 0.0, local)
        a._acumular(g * local)
    return _crear(np.power(a.data, exponente), (a,), retro, 'pow')


def exp(a):
    a = as_tensor(a)
    valor = np.exp(a.data)

    def retro(g):
        a._acumular(g * valor)
    return _crear(valor, (a,), retro, 'exp')


def log(a):
    a = as_tensor(a)

    def retro(g):
        a._acumular(g / a.data)
    return _crear(np.log(a.data), (a,), retro, 'log')


def abs_(a):
    a = as_tensor(a)

    def retro(g):
        a._acumular(g * np.sign(a.data))
    return _crear(np.abs(a.data), (a,), retro, 'abs')


def sigmoid(a):
    a = as_tensor(a)
    valor = expit(a.data)

    def retro(g):
        a._acumular(g * valor * (1.0 - valor))
    return _crear(valor, (a,), retro, 'sigmoid')


def log_sigmoid(a):
    """log(sigmoid(a)) estable: -log(1 + e^{-a})"""
    a = as_tensor(a)

    def retro(g):
        a._acumular(g * expit(-a.data))
    return _crear(-np.logaddexp(0.0, -a.data), (a,), retro, 'log_sigmoid')


def tanh(a):
    a = as_tensor(a)
    valor = np.tanh(a.data)

    def retro(g):
        a._acumular(g * (1.0 - valor * valor))
    return _crear(valor, (a,), retro, 'tanh')


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a):
    """GELU con la aproximación de tanh (suave en todo el dominio)"""
    a = as_tensor(a)
    x = a.data
    interno = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(interno)

    def retro(g):
        derivada = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        a._acumular(g * derivada)
    return _crear(0.5 * x * (1.0 + t), (a,), retro, 'gelu')


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    mascara = a.data >= b.data

    def retro(g):
        a._acumular(g * mascara)
        b._acumular(g * ~mascara)
    return _crear(np.maximum(a.data, b.data), (a, b), retro, 'maximum')


def minimum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    mascara = a.data <= b.data

    def retro(g):
        a._acumular(g * mascara)
        b._acumular(g * ~mascara)
    return _crear(np.minimum(a.data, b.data), (a, b), retro, 'minimum')


def relu(a):
    return maximum(a, 0.0)


def stop_gradient(a):
    """Mismos valores, fuera de la cinta: ningún gradiente atraviesa este nodo"""
    a = as_tensor(a)
    return Tensor(a.data, requires_grad=False, _op='stop_gradient')


# ==================== ÁLGEBRA LINEAL ====================
def matmul(a, b):
    """Producto matricial con semántica de np.matmul (lotes con broadcasting)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError('matmul no admite escalares')
    if a.ndim == 1:
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), b.shape[:-2] + b.shape[-1:])
    if b.ndim == 1:
        return reshape(matmul(a, reshape(b, (b.shape[0], 1))), a.shape[:-1])
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f'matmul: extensiones internas distintas {a.shape} @ {b.shape}')
    try:
        valor = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f'matmul: lotes incompatibles {a.shape} @ {b.shape}') from e

    def retro(g):
        a._acumular(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        b._acumular(np.matmul(np.swapaxes(a.data, -1, -2), g))
    return _crear(valor, (a, b), retro, 'matmul')


# ==================== REDUCCIONES ====================
def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    ejes = _normalizar_ejes(axis, a.ndim)
    valor = np.sum(a.data, axis=ejes, keepdims=keepdims)

    def retro(g):
        if not keepdims:
            g = np.expand_dims(g, ejes)
        a._acumular(np.broadcast_to(g, a.shape))
    return _crear(valor, (a,), retro, 'sum')


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    ejes = _normalizar_ejes(axis, a.ndim)
    cuenta = int(np.prod([a.shape[e] for e in ejes])) if ejes else 1
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / max(cuenta, 1))


def softmax(a, axis=-1):
    """Softmax estabilizado restando el máximo del eje"""
    a = as_tensor(a)
    desplazado = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(desplazado)
    valor = e / np.sum(e, axis=axis, keepdims=True)

    def retro(g):
        a._acumular(valor * (g - np.sum(g * valor, axis=axis, keepdims=True)))
    return _crear(valor, (a,), retro, 'softmax')


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    desplazado = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(desplazado), axis=axis, keepdims=True))
    valor = desplazado - lse

    def retro(g):
        probabilidades = np.exp(valor)
        a._acumular(g - probabilidades * np.sum(g, axis=axis, keepdims=True))
    return _crear(valor, (a,), retro, 'log_softmax')


# ==================== FORMA E INDEXADO ====================
def reshape(a, forma):
    a = as_tensor(a)
    original = a.shape

    def retro(g):
        a._acumular(g.reshape(original))
    return _crear(a.data.reshape(forma), (a,), retro, 'reshape')


def transpose(a, ejes=None):
    a = as_tensor(a)
    if ejes is None:
        ejes = tuple(reversed(range(a.ndim)))
    inversa = tuple(np.argsort(ejes))

    def retro(g):
        a._acumular(np.transpose(g, inversa))
    return _crear(np.transpose(a.data, ejes), (a,), retro, 'transpose')


def _indice_basico(indice):
    """Enteros, slices, None y Ellipsis: sin repeticiones posibles"""
    partes = indice if isinstance(indice, tuple) else (indice,)
    return all(p is None or p is Ellipsis or isinstance(p, (slice, int, np.integer)) for p in partes)


def getitem(a, indice):
    a = as_tensor(a)
    if isinstance(indice, Tensor):
        indice = indice.data.astype(np.int64)
    basico = _indice_basico(indice)

    def retro(g):
        completo = np.zeros_like(a.data)
        if basico:
            completo[indice] = g
        else:
            np.add.at(completo, indice, g)
        a._acumular(completo)
    return _crear(a.data[indice], (a,), retro, 'getitem')


def take(a, indices, axis=0):
    """Gather por permutación (o índices con repetición) a lo largo de un eje"""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    eje = axis % a.ndim

    def retro(g):
        completo = np.zeros_like(a.data)
        selector = (slice(None),) * eje + (indices,)
        np.add.at(completo, selector, g)
        a._acumular(completo)
    return _crear(np.take(a.data, indices, axis=eje), (a,), retro, 'take')


def concatenate(tensores, axis=0):
    tensores = [as_tensor(t) for t in tensores]
    eje = axis % tensores[0].ndim
    cortes = np.cumsum([t.shape[eje] for t in tensores])[:-1]

    def retro(g):
        for t, parte in zip(tensores, np.split(g, cortes, axis=eje)):
            t._acumular(parte)
    return _crear(np.concatenate([t.data for t in tensores], axis=eje), tuple(tensores), retro, 'concat')


def stack(tensores, axis=0):
    tensores = [as_tensor(t) for t in tensores]
    expandidos = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensores]
    return concatenate(expandidos, axis=axis)


def zeros(forma):
    return Tensor(np.zeros(forma))


# ==================== COMPUESTAS ====================
def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalización por capa sobre el último eje (un solo nodo con derivada cerrada)"""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    centrado = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centrado * centrado).mean(axis=-1, keepdims=True) + eps)
    normalizado = centrado * inv_std

    def retro(g):
        gamma._acumular(g * normalizado)
        beta._acumular(g)
        if x.requires_grad:
            gn = g * gamma.data
            x._acumular(inv_std * (gn - gn.mean(axis=-1, keepdims=True)
                                   - normalizado * (gn * normalizado).mean(axis=-1, keepdims=True)))
    return _crear(normalizado * gamma.data + beta.data, (x, gamma, beta), retro, 'layer_norm')


def entropia(logits, axis=-1):
    """Entropía (log natural) de softmax(logits) a lo largo de un eje"""
    log_p = log_softmax(logits, axis=axis)
    return -sum_(exp(log_p) * log_p, axis=axis)
