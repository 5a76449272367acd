import os
from pathlib import Path

PROJECT_DIR = Path(__file__).resolve().parent

OUTPUT_DIR = Path(os.getenv('SEPFIT_OUTPUT_DIR', PROJECT_DIR / "runs"))

LOGS_DIR = Path(os.getenv('LOGS_DIR', PROJECT_DIR / 'log'))
LOG_LEVEL = int(os.getenv('LOG_LEVEL', 0))

# chains and per-column scans share one pool
WORKERS = int(os.getenv('SEPFIT_WORKERS', min(8, os.cpu_count() or 1)))
PROGRESS = os.getenv('SEPFIT_PROGRESS', '1') not in ('0', 'false', 'no')
DEFAULT_SEED = int(os.getenv('SEPFIT_SEED', 20180101))

for _dir in [LOGS_DIR]:
    _dir.mkdir(exist_ok=True, parents=True)
