# apps/consultas/configuracion.py
"""
Configuración de experimentos.

Archivo plano `clave=valor` (leído con decouple) más overrides
`--set clave=valor`; los valores los valida y convierte pydantic. Las
claves desconocidas se rechazan.
"""

from pathlib import Path
import logging
from typing import Literal

from decouple import RepositoryEnv
from django.conf import settings
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from apps.aumentos.egoaug import EstrategiasConsulta, EstrategiasMovimiento
from apps.modelo.localizador import AgrupamientoCabezas
from hero_vql.excepciones import ConfiguracionError

logger = logging.getLogger(__name__)


class Config(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    # ---------- pipeline ----------
    clip_len: int = Field(32, ge=1)
    median_k: int = Field(5, ge=1)
    peak_ratio: float = Field(0.7, gt=0.0, le=1.0)

    # ---------- guías ----------
    tau: float = Field(1.0, gt=0.0)
    use_high_guide: bool = True
    use_mid_guide: bool = True
    repair_tokens: bool = True

    # ---------- modelo ----------
    d_model: int = Field(64, ge=1)
    n_heads: int = Field(4, ge=1)
    n_layers: int = Field(3, ge=1)
    ffn_mult: int = Field(4, ge=1)
    shift_fraction: float = Field(0.25, gt=0.0, le=0.5)
    patch_size: int = Field(8, ge=1)
    query_size: int = Field(32, ge=1)
    head_pooling: Literal['attention', 'mean'] = AgrupamientoCabezas.ATENCION

    # ---------- pérdida ----------
    beta: float = Field(1.0 / 6.0, ge=0.0)
    gamma: float = Field(1.0 / 6.0, ge=0.0)
    lambda_ct: float = Field(2.0 / 3.0, ge=0.0)
    mu: float = Field(0.1, ge=0.0)
    lambda_token: float = Field(1.0, ge=0.0)
    lambda_map: float = Field(1.0, ge=0.0)
    focal_alpha: float = Field(0.25, ge=0.0, le=1.0)
    focal_gamma: float = Field(2.0, ge=0.0)
    w_l1: float = Field(1.0, ge=0.0)
    w_giou: float = Field(1.0, ge=0.0)

    # ---------- aumentación ----------
    use_egoact: bool = True
    p_queryaug: float = Field(0.5, ge=0.0, le=1.0)
    queryaug_strategy: Literal['random', 'least_similar', 'most_similar'] = EstrategiasConsulta.ALEATORIA
    motionaug_strategy: Literal['max_displacement', 'random', 'none'] = EstrategiasMovimiento.MAX_DESPLAZAMIENTO

    # ---------- optimización ----------
    lr: float = Field(3e-3, gt=0.0)
    weight_decay: float = Field(0.005, ge=0.0)
    warmup_iters: int = Field(50, ge=0)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(8, ge=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode='after')
    def validar_combinaciones(self):
        if self.median_k % 2 == 0:
            raise ValueError(f'median_k debe ser impar, llegó {self.median_k}')
        if self.d_model % self.n_heads:
            raise ValueError(f'd_model={self.d_model} no es divisible entre n_heads={self.n_heads}')
        if self.mu > 0 and self.n_heads < 2:
            raise ValueError('La pérdida TAG (mu > 0) requiere n_heads ≥ 2')
        if self.query_size % self.patch_size:
            raise ValueError(f'query_size={self.query_size} no es múltiplo de patch_size={self.patch_size}')
        return self

    def con_cambios(self, **cambios):
        return construir(self.model_dump() | cambios)

    def como_texto(self):
        """Representación clave=valor, una por línea y en orden alfabético"""
        return ''.join(f'{k}={v}\n' for k, v in sorted(self.model_dump().items()))


def construir(valores):
    try:
        return Config(**valores)
    except ValidationError as e:
        errores = '; '.join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())
        raise ConfiguracionError(f'Configuración inválida: {errores}') from e


def parsear_overrides(overrides):
    """['clave=valor', ...] → dict"""
    valores = {}
    for item in overrides or ():
        clave, separador, valor = item.partition('=')
        if not separador or not clave.strip():
            raise ConfiguracionError(f'Override mal formado (se espera clave=valor): {item!r}')
        valores[clave.strip()] = valor.strip()
    return valores


def cargar_config(ruta=None, overrides=()):
    """
    Config desde un archivo clave=valor (por defecto HERO_VQL_CONFIG si está
    definido) y overrides. Sin archivo se usan los valores por defecto.
    """
    ruta = ruta or getattr(settings, 'HERO_VQL_CONFIG', '') or None
    valores = {}
    if ruta:
        if not Path(ruta).is_file():
            raise ConfiguracionError(f'No existe el archivo de configuración {ruta}')
        repositorio = RepositoryEnv(str(ruta))
        valores = {clave: repositorio[clave] for clave in repositorio.data}
    valores.update(parsear_overrides(overrides))
    cfg = construir(valores)
    logger.debug(f'Configuración cargada ({ruta or "por defecto"}): {len(valores)} claves explícitas')
    return cfg
