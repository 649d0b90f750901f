import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Tuple

from silt_lab.caching.backends.base import NEVER, BaseCache


@dataclass
class Value:
    data: bytes
    ttl_ts: int  # 0 never expires


class SimpleCache(BaseCache):
    """
    In-process LRU cache bounded by the total size of the stored payloads.
    Tables can be large, so eviction counts bytes rather than items.
    """

    def __init__(self, max_bytes: int = 256 * 1024 * 1024, default_timeout: int = NEVER):
        self._store: OrderedDict[str, Value] = OrderedDict()
        self._lock = threading.Lock()
        self._max_bytes = max_bytes
        self._bytes = 0
        self._default_timeout = default_timeout

    def _drop(self, key: str) -> None:
        value = self._store.pop(key)
        self._bytes -= len(value.data)

    def _get(self, key: str) -> Optional[Value]:
        if key not in self._store:
            return None
        self._store.move_to_end(key)
        v = self._store[key]
        if self.is_expired(v.ttl_ts):
            self._drop(key)
            return None
        return v

    def get_with_ttl(self, key: str) -> Tuple[int, Optional[bytes]]:
        with self._lock:
            v = self._get(key)
            if v is None:
                return 0, None
            return (-1 if v.ttl_ts == NEVER else v.ttl_ts - self._now()), v.data

    def get(self, key: str) -> Optional[bytes]:
        with self._lock:
            v = self._get(key)
            return v.data if v is not None else None

    def set(self, key: str, value: bytes, expire: Optional[int] = None) -> None:
        """
        :param key: the key under which to store the data.
        :param value: the payload.
        :param expire: seconds to live, 0 never expires; the default timeout when None.
        """
        if len(value) > self._max_bytes:
            return
        with self._lock:
            if key in self._store:
                self._drop(key)
            while self._store and self._bytes + len(value) > self._max_bytes:
                self._drop(next(iter(self._store)))  # least recently used
            ttl = self.expiry_ts(expire if expire is not None else self._default_timeout)
            self._store[key] = Value(data=value, ttl_ts=ttl)
            self._bytes += len(value)

    def clear(self, namespace: Optional[str] = None, key: Optional[str] = None) -> int:
        with self._lock:
            if key:
                if key in self._store:
                    self._drop(key)
                    return 1
                return 0
            keys = [k for k in self._store if not namespace or k.startswith(namespace)]
            for k in keys:
                self._drop(k)
            return len(keys)

    def size(self) -> int:
        with self._lock:
            return len(self._store)

    @property
    def stored_bytes(self) -> int:
        return self._bytes
