# External
import pytest
from django.core.cache import caches

# Internal
from cmn.base_cache import CacheManager
from cmn.base_test import TestClassBase


class CacheManagerTests(TestClassBase):
    """CacheManager over the local-memory memo backend."""

    def setUp(self) -> None:
        super().setUp()
        self.cache = CacheManager(namespace="tests")
        self.cache.clear()
        self.addCleanup(self.cache.clear)

    def test_make_key_is_namespaced_and_stable(self) -> None:
        key = self.cache.make_key("R(x) & Q(y)", 3)

        assert key.startswith("tests:")
        assert key == self.cache.make_key("R(x) & Q(y)", 3)
        assert key != self.cache.make_key("R(x) & Q(y)", 4)
        assert key != CacheManager(namespace="other").make_key("R(x) & Q(y)", 3)


    def test_set_get_delete(self) -> None:
        key = self.cache.make_key("value")

        self.cache.set(key, 0.5)
        self.assertEqual(self.cache.get(key), 0.5)

        self.cache.delete(key)
        self.assertIsNone(self.cache.get(key))


    def test_get_or_set_computes_once(self) -> None:
        """
        GIVEN an empty cache
        WHEN get_or_set is called twice for the same key
        THEN the default runs once and both calls return its value.
        """
        calls = []

        def compute() -> float:
            calls.append(1)
            return 0.25

        key = self.cache.make_key("once")
        first = self.cache.get_or_set(key, compute)
        second = self.cache.get_or_set(key, compute)

        assert first == second == 0.25
        assert len(calls) == 1


    def test_get_or_set_keeps_cached_none(self) -> None:
        key = self.cache.make_key("none")
        self.cache.get_or_set(key, lambda: None)

        assert self.cache.get_or_set(key, lambda: pytest.fail("recomputed a cached None")) is None


    def test_get_or_set_allows_recursive_use(self) -> None:
        """The default may itself call get_or_set on other keys."""

        outer, inner = self.cache.make_key("outer"), self.cache.make_key("inner")
        value = self.cache.get_or_set(outer, lambda: self.cache.get_or_set(inner, lambda: 2) + 1)

        assert value == 3
        assert self.cache.get(inner) == 2


    def test_default_backend_is_memo(self) -> None:
        key = self.cache.make_key("backend")
        self.cache.set(key, "x")

        assert caches["memo"].get(key) == "x"
