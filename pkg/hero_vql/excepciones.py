"""
Excepciones de dominio de HERO-VQL.

Todas heredan también de ValueError para que el código que solo conoce
las excepciones estándar pueda capturarlas.
"""


class HeroVQLError(ValueError):
    """Error base del proyecto"""


class DimensionError(HeroVQLError):
    """Formas de tensores incompatibles"""


class ConfiguracionError(HeroVQLError):
    """Valor de configuración fuera de rango, clave desconocida o combinación inválida"""


class PermutacionError(HeroVQLError):
    """Permutación de frames que no es biyectiva"""


class ConsultaError(HeroVQLError):
    """Conjuntos de consultas distintos entre predicciones y ground truth"""


class AnotacionError(HeroVQLError):
    """Archivo de anotaciones que no cumple el esquema"""


class FormatoError(HeroVQLError):
    """Archivo binario HVQF corrupto o con magic inválido"""


class CajaError(HeroVQLError):
    """Caja con coordenadas no finitas o invertidas"""
