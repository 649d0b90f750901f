from silt_lab.caching.backends.base import BaseCache
from silt_lab.caching.backends.filecache import FileCache
from silt_lab.caching.backends.simplecache import SimpleCache

__all__ = ["BaseCache", "SimpleCache", "FileCache"]
