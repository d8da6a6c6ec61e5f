"""Counter-based random streams.

Each stream is keyed by (seed, stream_id) through the Philox bit generator, so
a given key always replays the same draw sequence no matter how work is
scheduled, and distinct stream ids are statistically independent.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """One independent random stream; `counter` records how many draw calls were made."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        self._gen = np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))

    def child(self, stream_id: int) -> "RngStream":
        """Derive an independent stream under the same seed."""
        return RngStream(self.seed, stream_id)

    def normal(self, size=None):
        self.counter += 1
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        self.counter += 1
        return self._gen.uniform(low, high, size)

    def standard_t(self, df, size=None):
        self.counter += 1
        return self._gen.standard_t(df, size)

    def integers(self, high, size=None):
        self.counter += 1
        return self._gen.integers(0, high, size=size)

    def choice(self, n, size, p):
        self.counter += 1
        return self._gen.choice(n, size=size, p=p, replace=True)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"
