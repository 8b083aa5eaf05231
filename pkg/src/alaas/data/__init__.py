from alaas.data.cache import CacheEntry, ContentCache, sha256_hex
from alaas.data.manager import DataManager, FetchResult

__all__ = ["CacheEntry", "ContentCache", "DataManager", "FetchResult", "sha256_hex"]
