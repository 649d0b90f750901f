import os
from typing import Literal, get_args

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from silt_lab.caching.coder import Coder, JsonCoder

SUPPORTED_CACHE_TYPES = Literal["SimpleCache", "FileCache"]
CACHE_DIR_ENV_KEY = "SILT_LAB_CACHE_DIR"


class CacheConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    cache_type: SUPPORTED_CACHE_TYPES = "SimpleCache"
    default_timeout: int = 0  # 0 never expires; tables are deterministic functions of their arguments
    app_space: str = "silt-lab"
    coder: type[Coder] = JsonCoder

    simple_cache_max_mb: int = 256

    file_cache_dir: str | None = None

    @field_validator('cache_type')
    def validate_cache_type(cls, value):
        """validate that the cache_type is supported"""
        if value not in get_args(SUPPORTED_CACHE_TYPES):
            raise ValueError(f'cache_type must be one of {get_args(SUPPORTED_CACHE_TYPES)}')
        return value

    @field_validator('default_timeout', 'simple_cache_max_mb')
    def validate_non_negative(cls, value):
        if value < 0:
            raise ValueError('must be >= 0')
        return value

    @model_validator(mode='after')
    def validate_file_cache_dir(self):
        if self.cache_type == "FileCache" and not self.file_cache_dir:
            self.file_cache_dir = os.getenv(CACHE_DIR_ENV_KEY) or None
            if not self.file_cache_dir:
                raise ValueError(f'With FileCache, file_cache_dir or {CACHE_DIR_ENV_KEY} must be provided.')
        return self
