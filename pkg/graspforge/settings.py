import os
from pathlib import Path

from dotenv import load_dotenv

# ---------------------------------------------------------------------
# Base paths & environment
# ---------------------------------------------------------------------
BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")

# ---------------------------------------------------------------------
# Core settings
# ---------------------------------------------------------------------
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "graspforge-offline-tool")
DEBUG = os.getenv("DJANGO_DEBUG", "False").strip().lower() == "true"
ALLOWED_HOSTS: list[str] = []

# ---------------------------------------------------------------------
# Installed apps
# ---------------------------------------------------------------------
INSTALLED_APPS = [
    "core",
    "sim",
    "learning",
    "datagen",
]

MIDDLEWARE: list[str] = []

# ---------------------------------------------------------------------
# Database
# ---------------------------------------------------------------------
# No models are stored; the in-memory engine only satisfies Django's checks.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": ":memory:",
    }
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

USE_I18N = False
USE_TZ = True
TIME_ZONE = "UTC"

# ---------------------------------------------------------------------
# graspforge runtime
# ---------------------------------------------------------------------
GRASPFORGE_WORKERS = max(1, int(os.getenv("GRASPFORGE_WORKERS", "1")))
GRASPFORGE_RUN_SLOW = os.getenv("GRASPFORGE_RUN_SLOW", "0").strip() == "1"

# ---------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------
_LOG_LEVELS = {
    "error": "ERROR",
    "warn": "WARNING",
    "warning": "WARNING",
    "info": "INFO",
    "debug": "DEBUG",
}
LOG_LEVEL = _LOG_LEVELS.get(os.getenv("GRASPFORGE_LOG", "info").strip().lower(), "INFO")
if DEBUG:
    LOG_LEVEL = "DEBUG"

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {"format": "[{levelname}] {name}: {message}", "style": "{"},
        "verbose": {
            "format": "{asctime} [{levelname}] {name} ({module}:{lineno}): {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "verbose" if DEBUG else "simple",
        }
    },
    "root": {"handlers": ["console"], "level": LOG_LEVEL},
    "loggers": {
        # worker processes re-import settings; keep matplotlib quiet there too
        "matplotlib": {"handlers": ["console"], "level": "WARNING", "propagate": False},
    },
}
