# apps/guias/mapas.py
"""
Volcado de las guías como imágenes PGM (escala de grises) y CSV.
"""

from pathlib import Path
import csv
import logging
import math

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)


class MapaConstants:
    ESCALA = 8  # cada token se dibuja como un bloque de ESCALA×ESCALA píxeles


def a_imagen(valores, grid, escala=MapaConstants.ESCALA):
    """Mapa en [0, 1] → imagen 'L' ampliada por vecino más cercano"""
    filas, columnas = grid
    grises = np.clip(np.asarray(valores, dtype=np.float64).reshape(filas, columnas), 0.0, 1.0)
    imagen = Image.fromarray(np.round(grises * 255).astype(np.uint8))
    return imagen.resize((columnas * escala, filas * escala), Image.Resampling.NEAREST)


def grid_cuadrado(n):
    lado = int(math.isqrt(n))
    return (lado, n // lado) if lado * (n // lado) == n else (1, n)


def guardar_mapas(guias, clip_id, grid, grid_consulta, destino, frames=None):
    """
    Escribe `{clip_id}_high_f{frame}.pgm` por frame, `{clip_id}_mid_r{r}.pgm`
    por mapa y `{clip_id}_guias.csv` con todos los valores. Retorna las rutas.
    """
    destino = Path(destino)
    destino.mkdir(parents=True, exist_ok=True)
    grid_consulta = grid_consulta or grid_cuadrado(guias.alpha_mid.shape[0])
    frames = list(range(guias.alpha_high.shape[0])) if frames is None else list(frames)
    escritos = []

    for t, frame in enumerate(frames):
        ruta = destino / f'{clip_id}_high_f{frame}.pgm'
        a_imagen(guias.alpha_high[t], grid).save(ruta, format='PPM')
        escritos.append(ruta)

    for r in range(guias.alpha_mid.shape[1]):
        ruta = destino / f'{clip_id}_mid_r{r}.pgm'
        a_imagen(guias.alpha_mid[:, r], grid_consulta).save(ruta, format='PPM')
        escritos.append(ruta)

    ruta_csv = destino / f'{clip_id}_guias.csv'
    with open(ruta_csv, 'w', newline='') as f:
        escritor = csv.writer(f)
        escritor.writerow(['guia', 'indice', 'token', 'valor'])
        for t, frame in enumerate(frames):
            for m, valor in enumerate(guias.alpha_high[t]):
                escritor.writerow(['high', frame, m, f'{valor:.6f}'])
        for r in range(guias.alpha_mid.shape[1]):
            for n, valor in enumerate(guias.alpha_mid[:, r]):
                escritor.writerow(['mid', r, n, f'{valor:.6f}'])
    escritos.append(ruta_csv)

    logger.info(f'Guías del clip {clip_id}: {len(escritos)} archivos en {destino}')
    return escritos
