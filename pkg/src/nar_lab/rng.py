"""Deterministic random streams.

Every stochastic routine in the package draws from an ``Rng``: a PCG64
generator keyed by a 64-bit seed.  The same seed yields bit-identical
draws on every platform numpy supports, because both PCG64 and
``SeedSequence`` are pure integer arithmetic.

Independent streams are derived with :meth:`Rng.child`, never by
reusing or offsetting a raw seed.  This is what makes dataset
generation order-independent: instance ``i`` of a run is produced from
``root.child(split_tag, i)`` no matter which worker gets there first.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key_to_int(key: int | str) -> int:
    """Map a mixing key to a stable unsigned integer."""
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    if isinstance(key, str):
        # blake2b is stable across platforms and python versions,
        # unlike the builtin hash().
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"rng keys must be int or str, got {type(key).__name__}")


class Rng:
    """A seeded random stream with deterministic child-stream derivation.

    Attributes:
        seed: the 64-bit seed this stream was built from.
        generator: the underlying ``numpy.random.Generator`` for draws
            not covered by the convenience methods.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, *keys: int | str) -> "Rng":
        """Derive an independent stream keyed by ``keys``.

        The derivation depends only on ``(self.seed, keys)``, not on how
        much this stream has already been consumed.
        """
        entropy = (self.seed,) + tuple(_key_to_int(k) for k in keys)
        derived = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
        return Rng(int(derived))

    # Thin draws; anything fancier goes through .generator directly.

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        """Draw from [low, high) like numpy's Generator.integers."""
        return self.generator.integers(low, high, size=size)

    def shuffle(self, x) -> None:
        self.generator.shuffle(x)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def coin(self, p: float = 0.5) -> bool:
        return bool(self.generator.random() < p)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"
