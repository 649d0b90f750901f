import os
import struct
import tempfile
import threading
from typing import Optional, Tuple

from silt_lab.caching.backends.base import NEVER, BaseCache

_EXPIRY = struct.Struct("<q")


class FileCache(BaseCache):
    """
    Directory-backed cache shared between runs.
    One file per key; the first 8 bytes hold the expiry timestamp (0 never expires).
    """

    def __init__(self, directory: str, default_timeout: int = NEVER):
        self._directory = directory
        self._default_timeout = default_timeout
        self._lock = threading.Lock()
        os.makedirs(directory, exist_ok=True)

    @staticmethod
    def _file_name(key: str) -> str:
        return key.replace(':', '__').replace(os.sep, '_') + '.bin'

    def _path(self, key: str) -> str:
        return os.path.join(self._directory, self._file_name(key))

    def _read(self, key: str) -> Tuple[int, Optional[bytes]]:
        path = self._path(key)
        try:
            with open(path, 'rb') as fh:
                payload = fh.read()
        except FileNotFoundError:
            return 0, None
        if len(payload) < _EXPIRY.size:
            return 0, None
        (ttl_ts,) = _EXPIRY.unpack_from(payload)
        if self.is_expired(ttl_ts):
            self._remove(path)
            return 0, None
        return ttl_ts, payload[_EXPIRY.size:]

    @staticmethod
    def _remove(path: str) -> bool:
        try:
            os.remove(path)
            return True
        except FileNotFoundError:
            return False

    def get_with_ttl(self, key: str) -> Tuple[int, Optional[bytes]]:
        with self._lock:
            ttl_ts, data = self._read(key)
        if data is None:
            return 0, None
        return (-1 if ttl_ts == NEVER else ttl_ts - self._now()), data

    def get(self, key: str) -> Optional[bytes]:
        return self.get_with_ttl(key)[1]

    def set(self, key: str, value: bytes, expire: Optional[int] = None) -> None:
        ttl_ts = self.expiry_ts(expire if expire is not None else self._default_timeout)
        with self._lock:
            fd, tmp_path = tempfile.mkstemp(dir=self._directory, suffix='.tmp')
            try:
                with os.fdopen(fd, 'wb') as fh:
                    fh.write(_EXPIRY.pack(ttl_ts))
                    fh.write(value)
                os.replace(tmp_path, self._path(key))
            except BaseException:
                self._remove(tmp_path)
                raise

    def clear(self, namespace: Optional[str] = None, key: Optional[str] = None) -> int:
        with self._lock:
            if key:
                return int(self._remove(self._path(key)))
            prefix = self._file_name(namespace)[:-len('.bin')] if namespace else ''
            count = 0
            for name in os.listdir(self._directory):
                if name.endswith('.bin') and name.startswith(prefix):
                    count += self._remove(os.path.join(self._directory, name))
            return count
