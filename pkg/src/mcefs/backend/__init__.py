from .base import BackendConfig, cache_key
from .cache import CachedBackend
from .live import LiveBackend, RateLimiter, backoff_delay
from .scripted import BEHAVIORS, ScriptedBackend, ScriptedBehavior
