from threading import Lock
from typing import TypeVar, Generic, Callable

_T = TypeVar('_T')

_UNSET = object()


class Lazy(Generic[_T]):
    """Computes ``factory()`` on first access and caches it; safe to share between chain threads."""

    def __init__(self, factory: Callable[[], _T]):
        self._factory: Callable[[], _T] = factory
        self._value = _UNSET
        self._lock = Lock()

    def get(self) -> _T:
        if self._value is _UNSET:
            with self._lock:
                if self._value is _UNSET:
                    self._value = self._factory()
        return self._value

    def __call__(self) -> _T:
        return self.get()
