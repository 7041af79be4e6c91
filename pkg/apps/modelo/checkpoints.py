# apps/modelo/checkpoints.py
"""
Checkpoints: contenedor HVQF con los parámetros nombrados y un JSON al lado
con la configuración con la que se construyó el modelo.
"""

from pathlib import Path
import json
import logging

from apps.tensores import hvqf
from hero_vql.excepciones import FormatoError
from .localizador import AgrupamientoCabezas, DecoderConfig, Localizador

logger = logging.getLogger(__name__)


def ruta_sidecar(ruta):
    ruta = Path(ruta)
    return ruta.with_name(ruta.name + '.json')


def guardar_checkpoint(modelo, ruta, configuracion):
    """configuracion: dict plano (serializable) de la corrida"""
    ruta = Path(ruta)
    hvqf.guardar_contenedor(ruta, {n: p.data for n, p in modelo.parametros().items()})
    with open(ruta_sidecar(ruta), 'w', encoding='utf-8') as f:
        json.dump(configuracion, f, indent=2, sort_keys=True)
    logger.info(f'Checkpoint guardado en {ruta}')


def cargar_checkpoint(ruta):
    """Retorna (Localizador, dict de configuración)"""
    ruta = Path(ruta)
    sidecar = ruta_sidecar(ruta)
    if not ruta.exists() or not sidecar.exists():
        raise FormatoError(f'Checkpoint incompleto: se necesitan {ruta} y {sidecar}')
    with open(sidecar, encoding='utf-8') as f:
        configuracion = json.load(f)
    cfg = DecoderConfig(
        d_model=configuracion['d_model'],
        n_heads=configuracion['n_heads'],
        n_layers=configuracion['n_layers'],
        ffn_mult=configuracion.get('ffn_mult', 4),
        shift_fraction=configuracion['shift_fraction'],
        head_pooling=configuracion.get('head_pooling', AgrupamientoCabezas.ATENCION),
    )
    modelo = Localizador(cfg, seed=configuracion.get('seed', 0))
    modelo.cargar_parametros(hvqf.cargar_contenedor(ruta))
    logger.info(f'Checkpoint cargado desde {ruta}')
    return modelo, configuracion
