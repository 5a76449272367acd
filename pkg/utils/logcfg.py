"""
Process-wide logging: console split by severity, rotating gzip-compressed files under ``LOGS_DIR`` and a
per-run ``run.log`` attached for the lifetime of one command.

``LOG_LEVEL`` 1 turns the package loggers to DEBUG, 2 does the same for root.
"""
import gzip
import logging.config
import os
import shutil
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any

from config import LOGS_DIR, LOG_LEVEL

PACKAGE_LOGGERS = ('formula', 'data', 'separation', 'models', 'sampler', 'diagnostics', 'cli')

FILE_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s [%(threadName)s]'
CONSOLE_FORMAT = '%(levelname)s %(name)s: %(message)s'
MAX_LOG_BYTES = 2_560_000


class MaxLevelFilter(logging.Filter):
    """Passes records strictly below ``below``."""

    def __init__(self, below: int = logging.WARNING):
        super().__init__()
        self.below = below

    def filter(self, rec):
        return rec.levelno < self.below


def _gzip_namer(name: str) -> str:
    return f'{name}.gz'


def _gzip_rotator(source: str, dest: str):
    try:
        with open(source, 'rb') as f_in, gzip.open(dest, 'wb', compresslevel=9) as f_out:
            shutil.copyfileobj(f_in, f_out)
        os.remove(source)
    except OSError as e:
        logging.getLogger('io').warning(f'Could not compress {source}: {e}')


def compressed_file_handler(filename: str | Path, backup_count: int = 5, **kwargs) -> RotatingFileHandler:
    handler = RotatingFileHandler(filename, maxBytes=MAX_LOG_BYTES, backupCount=backup_count, encoding='utf-8',
                                  **kwargs)
    handler.namer = _gzip_namer
    handler.rotator = _gzip_rotator
    return handler


def build_config(level: int = LOG_LEVEL, logs_dir: Path = LOGS_DIR) -> dict[str, Any]:
    package_level = 'DEBUG' if level >= 1 else 'INFO'
    return {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'file': {'format': FILE_FORMAT},
            'console': {'format': CONSOLE_FORMAT},
        },
        'filters': {
            'below_warning': {'()': MaxLevelFilter},
        },
        'handlers': {
            'stdout': {
                'class': 'logging.StreamHandler',
                'formatter': 'console',
                'stream': 'ext://sys.stdout',
                'filters': ['below_warning'],
            },
            'stderr': {
                'class': 'logging.StreamHandler',
                'formatter': 'console',
                'stream': 'ext://sys.stderr',
                'level': 'WARNING',
            },
            'file': {
                '()': compressed_file_handler,
                'filename': logs_dir / 'sepfit.log',
                'formatter': 'file',
            },
            'err_file': {
                '()': compressed_file_handler,
                'filename': logs_dir / 'sepfit-errors.log',
                'formatter': 'file',
                'level': 'WARNING',
            },
        },
        'root': {
            'handlers': ['stdout', 'stderr', 'file', 'err_file'],
            'level': 'DEBUG' if level >= 2 else 'INFO',
        },
        'loggers': {
            # package records reach root, and through it the run log
            **{name: {'level': package_level, 'propagate': True} for name in PACKAGE_LOGGERS},
            'io': {'level': 'WARNING', 'propagate': True},
        },
    }


def apply(level: int = LOG_LEVEL):
    logging.config.dictConfig(build_config(level))


def attach_run_log(run_dir: str | Path) -> logging.Handler:
    """Mirror everything logged during a run into ``<run_dir>/run.log``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_dir / 'run.log', mode='w', encoding='utf-8')
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(FILE_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler):
    logging.getLogger().removeHandler(handler)
    handler.close()
