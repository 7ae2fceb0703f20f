"""
Django settings for the relscale project.

The project uses Django for configuration, caching, logging and the
management-command CLI only; there is no database and no HTTP surface.
Every tunable is read from the environment with a typed default.
"""
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("RELSCALE_SECRET_KEY", "relscale-local-only")

DEBUG = os.getenv("RELSCALE_DEBUG", "0") == "1"

ALLOWED_HOSTS: list[str] = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',

    'logic',
    'mln',
    'rlr',
    'asymptotics',
    'harness',
]

MIDDLEWARE: list[str] = []

# No persistence layer: models and sample batches live in plain files.
DATABASES: dict = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# ------------------------------------------------------------------------------
# Engine configuration
# ------------------------------------------------------------------------------

ENV = os.getenv("ENV", "dev").lower()

RELSCALE = {
    # Enumeration refuses signatures with more ground atoms than this.
    "WORLD_ATOM_CAP": int(os.getenv("RELSCALE_WORLD_ATOM_CAP", "24")),
    "ARITY_CAP": int(os.getenv("RELSCALE_ARITY_CAP", "3")),
    "PROPOSITION_CAP": int(os.getenv("RELSCALE_PROPOSITION_CAP", "20")),
    "WEIGHT_CLAMP": float(os.getenv("RELSCALE_WEIGHT_CLAMP", "30.0")),
    "LEARNING_TOLERANCE": float(os.getenv("RELSCALE_LEARNING_TOLERANCE", "1e-8")),
    "LEARNING_MAX_ITERATIONS": int(os.getenv("RELSCALE_LEARNING_MAX_ITERATIONS", "100")),
    "BATCH_SIZE": int(os.getenv("RELSCALE_BATCH_SIZE", "4096")),
    # Grounding cells evaluated at once while sampling large domains.
    "SAMPLING_CELL_BUDGET": int(os.getenv("RELSCALE_SAMPLING_CELL_BUDGET", str(1 << 24))),
    "CONSTANT_POOL_PREFIX": "a",
    "FIXTURES_DIR": BASE_DIR / "cmn" / "fixtures",
}


# ------------------------------------------------------------------------------
# Cache Configuration
# ------------------------------------------------------------------------------

CACHES = {
    "default": {
        "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
        "LOCATION": "relscale-default",
    },
    "memo": {
        "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
        "LOCATION": "relscale-memo",
        "TIMEOUT": None,
        "OPTIONS": {"MAX_ENTRIES": int(os.getenv("RELSCALE_MEMO_ENTRIES", "100000"))},
    },
}


# ------------------------------------------------------------------------------
# Logging
# ------------------------------------------------------------------------------

LOG_LEVEL = os.getenv("RELSCALE_LOG_LEVEL", "WARNING").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "stderr": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "plain",
        },
    },
    "loggers": {
        app: {"handlers": ["stderr"], "level": LOG_LEVEL, "propagate": False}
        for app in ("cmn", "logic", "mln", "rlr", "asymptotics", "harness")
    },
}


# ------------------------------------------------------------------------------
# Django REST Framework
# ------------------------------------------------------------------------------
REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
    "COERCE_DECIMAL_TO_STRING": False,
}
