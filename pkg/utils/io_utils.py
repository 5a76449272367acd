import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, Executor
from pathlib import Path
from typing import TypeVar, Callable, Iterable, Any

import numpy as np

from config import WORKERS

_log = logging.getLogger('io')

_executor = ThreadPoolExecutor(max(1, WORKERS), 'sepfit')

_T = TypeVar('_T')
_R = TypeVar('_R')


def map_ordered(func: Callable[[_T], _R],
                items: Iterable[_T],
                *,
                parallel: bool = True,
                executor: Executor = _executor) -> list[_R]:
    """Apply ``func`` to every item, possibly concurrently; results come back in input order."""
    items = list(items)
    if not parallel or len(items) <= 1:
        return [func(item) for item in items]
    futures = [executor.submit(func, item) for item in items]
    return [future.result() for future in futures]


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open('rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f'Object of type {type(value).__name__} is not JSON serializable')


def _sanitize(value: Any):
    # JSON has no NaN/Infinity; emit null instead
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return _sanitize(value.tolist())
    if isinstance(value, np.floating):
        return _sanitize(float(value))
    return value


def write_text(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    _log.debug(f'Wrote {path}')
    return path


def write_json(path: str | Path, payload: Any) -> Path:
    return write_text(path, json.dumps(_sanitize(payload), indent=2, default=_json_default) + '\n')


def read_json(path: str | Path) -> Any:
    with Path(path).open('r', encoding='utf-8') as f:
        return json.load(f)
