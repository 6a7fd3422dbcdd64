from .settings import *  # noqa: F401,F403

# Disable logging during tests
LOGGING_CONFIG = None

# Test-specific settings
DEBUG = True
SECRET_KEY = "test-secret-key-for-testing-only"  # nosec B105

# Every filtered event stream is checked for dead-time separation
THREEPATH_VERIFY_DEAD_TIME = True

# Small slabs so the streaming path is exercised by short simulations
THREEPATH_EVENT_CHUNK = 50_000

THREEPATH_OUTPUT_DIR = "/tmp/threepath-test-output"  # nosec B108
