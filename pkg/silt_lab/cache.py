import logging
from functools import wraps
from typing import Callable

from silt_lab.caching import BaseCache, CacheConfig, Coder, key_builder

__all__ = ["TableCache", "CacheConfig"]

logger: logging.Logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


class TableCache:
    """
    Memoizes expensive deterministic tables (transition slices, survival values, eigenpairs)
    keyed by the function and its arguments.
    """

    def __init__(self, config: CacheConfig | None = None) -> None:
        self._config = config if config is not None else CacheConfig()
        self._coder = self._config.coder
        self._backend_cache = self._get_cache_backend()
        self.hits = 0
        self.misses = 0

    def _get_cache_backend(self) -> BaseCache:
        cache_type = self._config.cache_type
        if cache_type == 'SimpleCache':
            from silt_lab.caching.backends import SimpleCache
            return SimpleCache(
                max_bytes=self._config.simple_cache_max_mb * 1024 * 1024,
                default_timeout=self._config.default_timeout
            )

        if cache_type == 'FileCache':
            from silt_lab.caching.backends import FileCache
            return FileCache(
                directory=self._config.file_cache_dir,
                default_timeout=self._config.default_timeout
            )

        raise ValueError(f"unsupported cache_type {cache_type}")

    def cached(self,
               timeout: int = None,
               namespace: str = "",
               coder: type[Coder] | None = None) -> Callable[[Callable], Callable]:
        """
        Decorator caching the result of a function.
        :param timeout: timeout in seconds, `0` never expires. Defaults to the cache config.
        :param namespace: namespace for the cache keys, e.g. "transition" or "survival".
        :param coder: coder for this function's results, overriding the config's coder.
        """
        result_coder = coder or self._coder

        def decorator(func: Callable):
            @wraps(func)
            def wrapper(*args, **kwargs):
                key = key_builder(
                    func,
                    app_space=self._config.app_space,
                    namespace=namespace,
                    args=args,
                    kwargs=kwargs
                )

                try:
                    cached_result = self.get(key)
                except Exception as e:
                    logger.warning(
                        f"Error retrieving cache key '{key}' from backend: {e}",
                        exc_info=True,
                    )
                    cached_result = None

                if cached_result is not None:  # Cache hit
                    self.hits += 1
                    logger.debug(f"cache hit {key}")
                    result = result_coder.decode(cached_result)
                else:  # Cache miss
                    self.misses += 1
                    result = func(*args, **kwargs)
                    self.set(key, result_coder.encode(result), timeout)

                return result

            return wrapper

        return decorator

    def get(self, key: str) -> bytes | None:
        return self._backend_cache.get(key)

    def set(self, key: str, value: bytes, expire: int = None) -> None:
        self._backend_cache.set(key, value, expire)

    def clear(self, namespace: str = None, key: str = None) -> int:
        return self._backend_cache.clear(namespace, key)
