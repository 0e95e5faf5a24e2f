import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY", "django-insecure-change-me-in-production"
)

DEBUG = os.environ.get("DJANGO_DEBUG", "False").lower() in ("true", "1", "yes")

INSTALLED_APPS = [
    "harmonic_filter",
]

# Commands only read and write files.
DATABASES = {}

HEF_THREADS = int(os.environ.get("HEF_THREADS", "1"))

HEF_LOG_LEVEL = os.environ.get("HEF_LOG_LEVEL", "WARNING").upper()

# Spline order of the frequency-plane rotation sampler (1..5).
HEF_INTERPOLATION_ORDER = int(os.environ.get("HEF_INTERPOLATION_ORDER", "3"))

HEF_OUTPUT_DIR = Path(os.environ.get("HEF_OUTPUT_DIR", "output"))

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": HEF_LOG_LEVEL,
    },
    "loggers": {
        "harmonic_filter": {
            "handlers": ["console"],
            "level": HEF_LOG_LEVEL,
            "propagate": False,
        },
    },
}
