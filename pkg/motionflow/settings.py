"""
Django settings for the motionflow project.

Process-level knobs (device, output root, skeleton file, logging level) are
read from the environment or a `.env` file at the project root. Run-level
knobs (schedules, model sizes, training lengths) live in YAML run configs,
see `runs.config`.
"""

from pathlib import Path
import os
import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Initialize environment variables
env = environ.Env(
    DEBUG=(bool, True),
    MOTIONFLOW_RUN_LEDGER=(bool, True),
    MOTIONFLOW_SLOW_TESTS=(bool, False),
)

# Read .env file
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))

# Nothing here is served over HTTP; the key only satisfies Django's checks.
SECRET_KEY = env('SECRET_KEY', default='motionflow-insecure-local-key')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Our apps
    'flows.apps.FlowsConfig',
    'skeleton.apps.SkeletonConfig',
    'tmdit.apps.TmditConfig',
    'motionvae.apps.MotionvaeConfig',
    'corpus.apps.CorpusConfig',
    'training.apps.TrainingConfig',
    'evaluation.apps.EvaluationConfig',
    'runs.apps.RunsConfig',
]

# Database
# The run ledger is the only thing stored; sqlite is plenty.
DATABASES = {
    'default': env.db('DATABASE_URL', default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}"),
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Logging configuration
LOG_LEVEL = env('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': LOG_LEVEL,
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'logs' / 'motionflow.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'] if not DEBUG else ['console'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'] if not DEBUG else ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
        **{
            app: {
                'handlers': ['console', 'file'] if not DEBUG else ['console'],
                'level': LOG_LEVEL,
                'propagate': False,
            }
            for app in ('flows', 'skeleton', 'tmdit', 'motionvae',
                        'corpus', 'training', 'evaluation', 'runs')
        },
    },
}

# Create logs directory
os.makedirs(BASE_DIR / 'logs', exist_ok=True)

# Custom settings
MOTIONFLOW_DEVICE = env('MOTIONFLOW_DEVICE', default='cpu')
MOTIONFLOW_NUM_THREADS = env.int('MOTIONFLOW_NUM_THREADS', default=0)  # 0 keeps torch's default
MOTIONFLOW_OUTPUT_ROOT = Path(env('MOTIONFLOW_OUTPUT_ROOT', default=str(BASE_DIR / 'outputs')))
MOTIONFLOW_SKELETON = Path(env(
    'MOTIONFLOW_SKELETON',
    default=str(BASE_DIR / 'skeleton' / 'data' / 'reference15.json'),
))
MOTIONFLOW_RUN_LEDGER = env('MOTIONFLOW_RUN_LEDGER')
MOTIONFLOW_SLOW_TESTS = env('MOTIONFLOW_SLOW_TESTS')
