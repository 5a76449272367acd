import logging
import time
from contextlib import contextmanager
from typing import Iterator


class LoggerExt:
    """
    Logging mixin for worker classes (fitters, chain runners, scanners, commands).

    The logger is named after the defining module and class; ``log_tag`` prefixes every message so that
    interleaved output of concurrent chains stays attributable, e.g. ``[chain 2]``.
    """

    def __init__(self, log_tag: str | None = None, logger_name: str | None = None):
        if not logger_name:
            logger_name = f'{self.__class__.__module__}.{self.__class__.__qualname__}'
        self.__logger: logging.Logger = logging.getLogger(logger_name)
        self.__prefix: str = f'[{log_tag}] ' if log_tag else ''

    def __log(self, level: int, msg: object, *args, exc_info=None, **kwargs):
        if not self.__logger.isEnabledFor(level):
            return
        self.__logger.log(level, f'{self.__prefix}{msg}'.replace('\n', '\\n'), *args, exc_info=exc_info, **kwargs)

    def debug(self, msg: object, *args, exc_info=None, **kwargs):
        self.__log(logging.DEBUG, msg, *args, exc_info=exc_info, **kwargs)

    def info(self, msg: object, *args, exc_info=None, **kwargs):
        self.__log(logging.INFO, msg, *args, exc_info=exc_info, **kwargs)

    def warning(self, msg: object, *args, exc_info=None, **kwargs):
        self.__log(logging.WARNING, msg, *args, exc_info=exc_info, **kwargs)

    def error(self, msg: object, *args, exc_info=None, **kwargs):
        self.__log(logging.ERROR, msg, *args, exc_info=exc_info, **kwargs)

    @contextmanager
    def timed(self, label: str) -> Iterator[None]:
        started = time.perf_counter()
        self.debug(f'{label}: started')
        try:
            yield
        finally:
            self.info(f'{label}: finished in {time.perf_counter() - started:.2f}s')
