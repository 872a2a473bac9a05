"""Seeded demonstration sampling.

The generator is pinned rather than borrowed from :mod:`random`, whose
``sample`` algorithm is a CPython implementation detail. Anyone can rebuild
the same demo sets from this description:

* ``derive_subseed(seed, label)``: first 8 bytes, big-endian, of
  ``sha256(f"{seed}:{label}")``.
* The stream is SplitMix64 seeded with that subseed.
* ``below(n)`` draws 64-bit words and rejects any below ``2**64 mod n``, then
  returns ``word % n``.
* A draw of k items from n is a partial Fisher-Yates shuffle of
  ``range(n)``: for ``i`` in ``0..k-1`` swap ``i`` with ``i + below(n - i)``.
  The first k slots are the sample, in that order.
"""
from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence, TypeVar

from .corpus import AbscInstance, Corpus
from .errors import KTooLarge

log = logging.getLogger(__name__)

T = TypeVar("T")
_MASK = (1 << 64) - 1


def derive_subseed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n


def sample_indices(n: int, k: int, subseed: int) -> list[int]:
    if not 0 <= k <= n:
        raise KTooLarge(f"cannot draw {k} from {n}")
    rng = SplitMix64(subseed)
    idx = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:k]


def sample(items: Sequence[T], k: int, subseed: int) -> list[T]:
    return [items[i] for i in sample_indices(len(items), k, subseed)]


@dataclass(frozen=True)
class DemoSet:
    seed: int
    k: int
    demos: tuple[AbscInstance, ...]

    def __post_init__(self):
        if len(self.demos) != self.k:
            raise ValueError(f"DemoSet holds {len(self.demos)} demos, expected {self.k}")

    def label_counts(self) -> dict[str, int]:
        counts = Counter(d.polarity.value for d in self.demos)
        return dict(sorted(counts.items()))


def sample_demos(corpus: Corpus, seed: int, k: int) -> DemoSet:
    """Uniform draw of ``k`` training instances without replacement.

    Each ``(seed, k)`` has its own subseed, so a 1-shot set is not in
    general a prefix of the 3-shot set for the same seed.
    """
    if k < 1 or k > len(corpus.train):
        raise KTooLarge(f"k={k} outside 1..{len(corpus.train)} for {corpus.name}")
    demos = sample(corpus.train, k, derive_subseed(seed, f"demos/k{k}"))
    ds = DemoSet(seed=seed, k=k, demos=tuple(demos))
    log.info("%s seed=%d k=%d demo labels %s", corpus.name, seed, k, ds.label_counts())
    return ds


def sample_dev(corpus: Corpus, demos: DemoSet, size: int) -> list[AbscInstance]:
    """Held-out slice of train (demos excluded) for praise selection."""
    used = {d.source_id for d in demos.demos}
    pool = [i for i in corpus.train if i.source_id not in used]
    size = min(size, len(pool))
    return sample(pool, size, derive_subseed(demos.seed, f"praise-dev/k{demos.k}"))
