# app/core/cache.py
import hashlib
import logging
import time
from typing import Any, Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class CacheManager:
    """
    In-process cache for expensive numerical results (eigendecompositions).

    Keys are derived from the bytes of the input arrays, so two operators with
    identical matrices share one entry.
    """

    def __init__(self):
        self.memory_cache: Dict[str, Tuple[Any, Optional[float]]] = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def make_key(prefix: str, *arrays: np.ndarray) -> str:
        digest = hashlib.sha256()
        for array in arrays:
            contiguous = np.ascontiguousarray(array)
            digest.update(str(contiguous.shape).encode("ascii"))
            digest.update(str(contiguous.dtype).encode("ascii"))
            digest.update(contiguous.tobytes())
        return f"{prefix}:{digest.hexdigest()}"

    def get(self, key: str) -> Optional[Any]:
        if key in self.memory_cache:
            value, expiry = self.memory_cache[key]
            if expiry is None or expiry > time.time():
                self.hits += 1
                return value
            # expired
            del self.memory_cache[key]
        self.misses += 1
        return None

    def set(self, key: str, value: Any, expire: Optional[int] = None) -> bool:
        """
        Store a value.

        Args:
            key: Cache key
            value: Object to keep (stored by reference, callers must not mutate it)
            expire: Lifetime in seconds, None keeps it until cleared
        """
        expiry = time.time() + expire if expire else None
        self.memory_cache[key] = (value, expiry)
        return True

    def delete(self, key: str) -> bool:
        if key in self.memory_cache:
            del self.memory_cache[key]
            return True
        return False

    def clear_pattern(self, pattern: str) -> int:
        """Remove every key containing `pattern` (a trailing `*` is ignored)."""
        needle = pattern.replace("*", "")
        keys_to_delete = [k for k in self.memory_cache if needle in k]
        for key in keys_to_delete:
            del self.memory_cache[key]
        if keys_to_delete:
            logger.debug(f"Cache cleared {len(keys_to_delete)} entries for '{pattern}'")
        return len(keys_to_delete)


# Global cache manager instance
cache_manager = CacheManager()
