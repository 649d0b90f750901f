import numpy as np
import pytest
from pydantic import ValidationError

from silt_lab.cache import TableCache
from silt_lab.caching import CacheConfig, JsonCoder, TableBlob, TableCoder, key_builder
from silt_lab.caching.backends import BaseCache, FileCache, SimpleCache


@pytest.fixture
def clock(monkeypatch):
    now = {'ts': 1_000}
    monkeypatch.setattr(BaseCache, '_now', staticmethod(lambda: now['ts']))
    return now


class TestSimpleCache:
    def test_set_and_get(self):
        cache = SimpleCache()
        cache.set('a', b'payload')
        assert cache.get('a') == b'payload'
        assert cache.get_with_ttl('a') == (-1, b'payload')
        assert cache.get('missing') is None

    def test_evicts_least_recently_used(self):
        cache = SimpleCache(max_bytes=10)
        cache.set('a', b'aaaa')
        cache.set('b', b'bbbb')
        cache.get('a')
        cache.set('c', b'cccc')
        assert cache.get('b') is None
        assert cache.get('a') == b'aaaa'
        assert cache.stored_bytes == 8

    def test_oversized_payload_is_skipped(self):
        cache = SimpleCache(max_bytes=4)
        cache.set('a', b'too large')
        assert cache.size() == 0

    def test_expiry(self, clock):
        cache = SimpleCache()
        cache.set('a', b'x', expire=10)
        assert cache.get_with_ttl('a') == (10, b'x')
        clock['ts'] += 11
        assert cache.get('a') is None
        assert cache.stored_bytes == 0

    def test_clear_namespace(self):
        cache = SimpleCache()
        cache.set('silt-lab:survival:1', b'1')
        cache.set('silt-lab:transition:2', b'2')
        assert cache.clear(namespace='silt-lab:survival') == 1
        assert cache.size() == 1
        assert cache.clear(key='silt-lab:transition:2') == 1


class TestFileCache:
    def test_shared_between_instances(self, tmp_path):
        FileCache(str(tmp_path)).set('silt-lab:survival:abc', b'\x00\x01')
        assert FileCache(str(tmp_path)).get('silt-lab:survival:abc') == b'\x00\x01'

    def test_expiry_removes_the_file(self, tmp_path, clock):
        cache = FileCache(str(tmp_path))
        cache.set('k', b'v', expire=5)
        clock['ts'] += 6
        assert cache.get('k') is None
        assert list(tmp_path.iterdir()) == []

    def test_clear(self, tmp_path):
        cache = FileCache(str(tmp_path))
        cache.set('silt-lab:survival:1', b'1')
        cache.set('silt-lab:eigen:2', b'2')
        assert cache.clear(namespace='silt-lab:survival') == 1
        assert cache.get('silt-lab:eigen:2') == b'2'
        assert cache.clear() == 1


class TestCoders:
    def test_table_coder(self):
        blob = TableBlob(dim=2, horizon=1, low=-1, high=1, values=np.linspace(0, 1, 18))
        decoded = TableCoder.decode(TableCoder.encode(blob))
        assert (decoded.dim, decoded.horizon, decoded.low, decoded.high) == (2, 1, -1, 1)
        assert np.array_equal(decoded.values, blob.values)
        assert decoded.slices().shape == (2, 3, 3)

    def test_table_coder_rejects_other_payloads(self):
        with pytest.raises(ValueError):
            TableCoder.decode(b'short')
        payload = TableCoder.encode(TableBlob(dim=1, horizon=0, low=0, high=0, values=np.ones(1)))
        with pytest.raises(ValueError):
            TableCoder.decode(b'XXXX' + payload[4:])
        with pytest.raises(ValueError):
            TableCoder.decode(payload[:-1])

    def test_json_coder_handles_numpy(self):
        value = {'p': np.float64(0.5), 'n': np.int64(3), 'v': np.arange(3)}
        decoded = JsonCoder.decode(JsonCoder.encode(value))
        assert decoded['p'] == 0.5 and decoded['n'] == 3
        assert np.array_equal(decoded['v'], np.arange(3))


def _func(x, y=1):
    return x + y


def test_key_builder():
    key = key_builder(_func, 'silt-lab', 'survival', (1,), {'y': 2, 'z': 3})
    assert key.startswith('silt-lab:survival:')
    assert key == key_builder(_func, 'silt-lab', 'survival', (1,), {'z': 3, 'y': 2})
    assert key != key_builder(_func, 'silt-lab', 'survival', (2,), {'y': 2, 'z': 3})


class TestCacheConfig:
    def test_file_cache_needs_a_directory(self, monkeypatch):
        monkeypatch.delenv('SILT_LAB_CACHE_DIR', raising=False)
        with pytest.raises(ValidationError):
            CacheConfig(cache_type='FileCache')

    def test_file_cache_directory_from_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv('SILT_LAB_CACHE_DIR', str(tmp_path))
        assert CacheConfig(cache_type='FileCache').file_cache_dir == str(tmp_path)

    def test_negative_timeout(self):
        with pytest.raises(ValidationError):
            CacheConfig(default_timeout=-1)

    def test_unknown_backend(self):
        with pytest.raises(ValidationError):
            CacheConfig(cache_type='RedisCache')


class TestTableCache:
    def test_cached_function_runs_once(self):
        cache = TableCache()
        calls = []

        @cache.cached(namespace='survival')
        def survival(d, n):
            calls.append((d, n))
            return 0.5 ** n

        assert survival(1, 3) == survival(1, 3) == 0.125
        assert calls == [(1, 3)]
        assert (cache.hits, cache.misses) == (1, 1)

    def test_timeout_expires_results(self, clock):
        cache = TableCache()
        calls = []

        @cache.cached(namespace='survival', timeout=5)
        def survival(n):
            calls.append(n)
            return 0.5 ** n

        survival(2)
        clock['ts'] += 4
        survival(2)
        clock['ts'] += 2
        survival(2)
        assert calls == [2, 2]
        assert (cache.hits, cache.misses) == (1, 2)

    def test_file_backend_survives_the_instance(self, tmp_path):
        config = CacheConfig(cache_type='FileCache', file_cache_dir=str(tmp_path))

        def eigen(d):
            return {'value': 0.5 * d}

        assert TableCache(config).cached(namespace='eigen')(eigen)(2) == {'value': 1.0}
        second = TableCache(config)
        assert second.cached(namespace='eigen')(eigen)(2) == {'value': 1.0}
        assert second.hits == 1

    def test_table_coder_override(self):
        cache = TableCache()

        @cache.cached(namespace='transition', coder=TableCoder)
        def table(n):
            return TableBlob(dim=1, horizon=n, low=-n, high=n, values=np.zeros((n + 1) * (2 * n + 1)))

        table(2)
        assert table(2).slices().shape == (3, 5)
        assert cache.hits == 1
