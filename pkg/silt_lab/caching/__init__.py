from silt_lab.caching.backends.base import BaseCache
from silt_lab.caching.coder import Coder, JsonCoder, TableBlob, TableCoder
from silt_lab.caching.config import CacheConfig
from silt_lab.caching.utils import key_builder

__all__ = ["BaseCache", "CacheConfig", "Coder", "JsonCoder", "TableBlob", "TableCoder", "key_builder"]
