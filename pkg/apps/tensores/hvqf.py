# apps/tensores/hvqf.py
"""
Formato binario HVQF compartido por todo el repositorio.

Tensor suelto:
    b"HVQF" | u32 LE rango | rango × u32 LE extensiones | payload f32 LE row-major

Contenedor de tensores con nombre (checkpoints):
    repetición de [u32 LE largo del nombre | nombre UTF-8 | tensor HVQF]
"""

from pathlib import Path
import io
import struct

import numpy as np

from hero_vql.excepciones import FormatoError

MAGIC = b'HVQF'


def escribir_tensor(destino, arreglo):
    """Escribe un arreglo en un stream binario abierto"""
    arreglo = np.ascontiguousarray(np.asarray(arreglo), dtype='<f4')
    destino.write(MAGIC)
    destino.write(struct.pack('<I', arreglo.ndim))
    destino.write(struct.pack(f'<{arreglo.ndim}I', *arreglo.shape))
    destino.write(arreglo.tobytes(order='C'))


def leer_tensor(origen):
    """Lee un tensor HVQF desde un stream binario abierto"""
    magic = origen.read(4)
    if magic != MAGIC:
        raise FormatoError(f'Magic inválido: {magic!r}')
    (rango,) = struct.unpack('<I', _leer_exacto(origen, 4))
    forma = struct.unpack(f'<{rango}I', _leer_exacto(origen, 4 * rango)) if rango else ()
    cantidad = int(np.prod(forma)) if forma else 1
    payload = _leer_exacto(origen, 4 * cantidad)
    return np.frombuffer(payload, dtype='<f4').reshape(forma).astype(np.float32)


def _leer_exacto(origen, n):
    datos = origen.read(n)
    if len(datos) != n:
        raise FormatoError(f'Archivo HVQF truncado: se esperaban {n} bytes, llegaron {len(datos)}')
    return datos


def guardar(ruta, arreglo):
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, 'wb') as f:
        escribir_tensor(f, arreglo)


def cargar(ruta):
    with open(ruta, 'rb') as f:
        return leer_tensor(f)


def guardar_contenedor(ruta, tensores):
    """Guarda un dict nombre → arreglo, en orden de nombre para que el archivo sea determinista"""
    ruta = Path(ruta)
    ruta.parent.mkdir(parents=True, exist_ok=True)
    with open(ruta, 'wb') as f:
        for nombre in sorted(tensores):
            crudo = nombre.encode('utf-8')
            f.write(struct.pack('<I', len(crudo)))
            f.write(crudo)
            escribir_tensor(f, tensores[nombre])


def cargar_contenedor(ruta):
    with open(ruta, 'rb') as f:
        contenido = f.read()
    origen = io.BytesIO(contenido)
    tensores = {}
    while origen.tell() < len(contenido):
        (largo,) = struct.unpack('<I', _leer_exacto(origen, 4))
        nombre = _leer_exacto(origen, largo).decode('utf-8')
        tensores[nombre] = leer_tensor(origen)
    return tensores
