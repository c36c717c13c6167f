"""Counter-based RNG stream discipline.

Every stochastic routine derives its generator from a master seed plus a stream
label, so results are reproducible regardless of execution order or worker
count. Philox is counter-based and platform-stable, which is what the
determinism guarantees (byte-identical reruns) rely on.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "worker_streams", "spawn_key"]


def spawn_key(*parts: int | str) -> tuple[int, ...]:
    """Map a label path (strings and ints) to a stable tuple of uint32 words."""
    words: list[int] = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError(f"stream key parts must be nonnegative, got {part}")
            words.append(int(part) & 0xFFFFFFFF)
            words.append((int(part) >> 32) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(part).encode()).digest()
            words.extend(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    return tuple(words)


def stream(seed: int, *parts: int | str) -> np.random.Generator:
    """Independent generator for (seed, label path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key(*parts))
    return np.random.Generator(np.random.Philox(ss))


def worker_streams(seed: int, label: str, n_workers: int) -> list[np.random.Generator]:
    """One independent stream per worker index under a common label."""
    return [stream(seed, label, w) for w in range(n_workers)]
