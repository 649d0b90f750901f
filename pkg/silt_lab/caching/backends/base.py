import abc
import time
from typing import Optional, Tuple

NEVER = 0


class BaseCache(abc.ABC):
    @staticmethod
    def _now() -> int:
        return int(time.time())

    @classmethod
    def expiry_ts(cls, expire: int) -> int:
        """Absolute expiry timestamp; NEVER (0) stays 0."""
        return NEVER if expire == NEVER else cls._now() + expire

    @classmethod
    def is_expired(cls, ttl_ts: int) -> bool:
        return ttl_ts != NEVER and ttl_ts < cls._now()

    @abc.abstractmethod
    def get_with_ttl(self, key: str) -> Tuple[int, Optional[bytes]]:
        raise NotImplementedError

    @abc.abstractmethod
    def get(self, key: str) -> Optional[bytes]:
        raise NotImplementedError

    @abc.abstractmethod
    def set(self, key: str, value: bytes, expire: Optional[int] = None) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def clear(self, namespace: Optional[str] = None, key: Optional[str] = None) -> int:
        raise NotImplementedError
