import concurrent.futures
import math
import os
import re
import time
from typing import Any, Callable, Iterable, Sequence, TypeVar

from silt_lab.exceptions import BudgetExceededError, DomainError

DEFAULT_MEMORY_MB = 1024
MEMORY_ENV_KEY = 'SILT_LAB_MEMORY_MB'

T = TypeVar('T')
Chunk = tuple[int, int, int]


class Timer:
    def __init__(self):
        self.start = None
        self.end = None
        self.seconds_taken = None
        self.minutes_taken = None

    def __enter__(self):
        self.start_timer()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop_timer()

    def start_timer(self):
        self.start = time.perf_counter()

    def stop_timer(self):
        self.end = time.perf_counter()
        self.seconds_taken = self.end - self.start
        self.minutes_taken = self.seconds_taken / 60


def env_path(env_key: str, default: str) -> str:
    """
    Directory taken from an environment variable, falling back to `default`.
    Example: SILT_LAB_OUTPUT_DIR=/data/runs
    """
    value = os.getenv(env_key, '').strip()
    return value or default


def memory_budget_mb(budget_mb: int | None = None, env_key: str = MEMORY_ENV_KEY) -> int:
    """
    Resolve the memory budget in megabytes: explicit value, then the environment, then the default.
    """
    if budget_mb is not None:
        return int(budget_mb)
    raw = os.getenv(env_key)
    if raw and is_numeric_value(raw):
        return int(float(raw))
    return DEFAULT_MEMORY_MB


def check_memory_budget(n_bytes: int, budget_mb: int | None = None, what: str = 'table') -> None:
    """
    Raise BudgetExceededError when `n_bytes` exceeds the budget.
    :param n_bytes: estimated size of the allocation.
    :param budget_mb: budget in MB, None to read SILT_LAB_MEMORY_MB.
    :param what: name of the allocation, used in the message.
    """
    budget = memory_budget_mb(budget_mb)
    if n_bytes > budget * 1024 * 1024:
        raise BudgetExceededError(
            f"{what} needs {n_bytes / 1024 / 1024:.1f} MB, budget is {budget} MB")


def chunk_bounds(total: int, chunk_size: int) -> list[Chunk]:
    """
    Split `total` samples into (chunk_id, start, stop) triples.
    Sample j always falls in chunk j // chunk_size, whatever the worker count.
    """
    if total < 0:
        raise DomainError(f"sample count must be >= 0, got {total}")
    if chunk_size < 1:
        raise DomainError(f"chunk size must be >= 1, got {chunk_size}")
    return [(i, start, min(start + chunk_size, total))
            for i, start in enumerate(range(0, total, chunk_size))]


def run_chunked(job_func: Callable[[Chunk], T], chunks: Sequence[Chunk], workers: int = 1) -> list[T]:
    """
    Run `job_func` over every chunk and return the results ordered by chunk id.
    With workers > 1 the chunks are spread over a thread pool; numpy releases the GIL in the heavy kernels.
    """
    if workers <= 1 or len(chunks) <= 1:
        return [job_func(chunk) for chunk in chunks]

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(job_func, chunk) for chunk in chunks]
        return [future.result() for future in futures]


def is_numeric_value(value):
    """
    Check if a value is numeric:
    True: 123, 123.456, -123, -123.456, '123', '1e-10', '2.5E3'
    """
    if not value and value != 0:
        return False

    value = str(value).strip()

    pattern = r"^-?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$"

    if re.match(pattern, value):
        return True
    return False


def parse_scalar(value: Any) -> Any:
    """Turn '12' into 12, '0.5' into 0.5, 'true' into True; other strings are returned stripped."""
    if not isinstance(value, str):
        return value
    value = value.strip()
    if value.lower() in ('true', 'false'):
        return value.lower() == 'true'
    if is_numeric_value(value):
        return int(value) if re.match(r"^-?\d+$", value) else float(value)
    return value


def parse_int_list(text: str | int | Iterable[int]) -> list[int]:
    """
    Parse a list of integers.
    Accepts '512,1024,4096', a power-of-two range '2^9..2^12' and a plain range '4..8'.
    """
    if isinstance(text, int):
        return [text]
    if not isinstance(text, str):
        return [int(v) for v in text]

    values = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        if '..' in part:
            low, high = (p.strip() for p in part.split('..', 1))
            if low.startswith('2^') and high.startswith('2^'):
                values.extend(2 ** e for e in range(int(low[2:]), int(high[2:]) + 1))
            else:
                values.extend(range(int(low), int(high) + 1))
        elif part.startswith('2^'):
            values.append(2 ** int(part[2:]))
        else:
            values.append(int(part))
    return values


def parse_float_list(text: str | float | Iterable[float]) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if not isinstance(text, str):
        return [float(v) for v in text]
    return [float(p) for p in text.split(',') if p.strip()]


def log2_exact(n: int) -> int:
    """Return N with n == 2**N, raising DomainError when n is not a power of two."""
    if n < 1 or n & (n - 1):
        raise DomainError(f"{n} is not a power of two")
    return int(math.log2(n))
