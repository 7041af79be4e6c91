"""
Django settings for hero_vql project.

Proyecto sin base de datos: Django aporta la configuración, el logging,
los comandos de gestión (gen, train, infer, eval, augment, guides,
gradcheck, ablate) y el runner de pruebas.
"""

from pathlib import Path
from decouple import config
import secrets

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# ============================================
# 🔒 CORE
# ============================================

SECRET_KEY = config('SECRET_KEY', default=secrets.token_urlsafe(50))

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Apps del proyecto
    'apps.tensores',
    'apps.geometria',
    'apps.aumentos',
    'apps.guias',
    'apps.modelo',
    'apps.perdidas',
    'apps.inferencia',
    'apps.consultas',
]

# Sin base de datos: todo el estado vive en archivos (anotaciones JSON,
# contenedores HVQF, CSV de entrenamiento).
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'America/Guayaquil'


# ============================================
# 🧮 HERO-VQL
# ============================================

# Archivo key=value con la configuración del experimento (opcional)
HERO_VQL_CONFIG = config('HERO_VQL_CONFIG', default='')

# Precisión por defecto del kernel de tensores: float32 | float64
HERO_VQL_PRECISION = config('HERO_VQL_PRECISION', default='float32')

HERO_VQL_LOG_LEVEL = config('HERO_VQL_LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO')

LOG_DIR = Path(config('HERO_VQL_LOG_DIR', default=str(BASE_DIR / 'logs')))
LOG_DIR.mkdir(parents=True, exist_ok=True)


# ============================================
# 📝 LOGGING
# ============================================

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOG_DIR / 'hero_vql.log',
            'maxBytes': 1024*1024*15,  # 15MB
            'backupCount': 10,
            'formatter': 'verbose',
        },
        'console': {
            'level': HERO_VQL_LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['file', 'console'],
            'level': HERO_VQL_LOG_LEVEL,
            'propagate': False,
        },
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': True,
        },
    },
}
