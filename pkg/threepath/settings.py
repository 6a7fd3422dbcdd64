from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; nothing here is served over a network.
SECRET_KEY = config("SECRET_KEY", default="threepath-offline-key")  # nosec B105

DEBUG = config("DEBUG", default=False, cast=bool)

# Application definition
INSTALLED_APPS = [
    "threepath",
    "optics",
    "photonsim",
    "calibration",
    "experiments",
    "reporting",
]

# Flat files only: Django falls back to its dummy backend.
DATABASES: dict = {}

USE_TZ = True
TIME_ZONE = "UTC"

# Logging
LOG_LEVEL = config("LOG_LEVEL", default="WARNING")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "console": {
            "format": "{levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "console",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": LOG_LEVEL,
    },
}

# Laboratory
THREEPATH_OUTPUT_DIR = config("THREEPATH_OUTPUT_DIR", default="output")

# Photon simulation
THREEPATH_MAX_EXPECTED_EVENTS = config(
    "THREEPATH_MAX_EXPECTED_EVENTS", default=1e9, cast=float
)
THREEPATH_EVENT_CHUNK = config("THREEPATH_EVENT_CHUNK", default=1_000_000, cast=int)
THREEPATH_VERIFY_DEAD_TIME = config(
    "THREEPATH_VERIFY_DEAD_TIME", default=DEBUG, cast=bool
)

# Calibration
THREEPATH_BOOTSTRAP_RESAMPLES = config(
    "THREEPATH_BOOTSTRAP_RESAMPLES", default=1000, cast=int
)

# Parallel runs
THREEPATH_THREADS = config("THREEPATH_THREADS", default=1, cast=int)
