import logging
import os
import secrets
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np

from errors import ParameterError

logger = logging.getLogger(__name__)

SEED_MAX = 2 ** 64 - 1

# Stream ids keep independent fields apart under one master seed
STREAM_PRIMARY = 0
STREAM_SECONDARY = 1


def draw_seed() -> int:
    """Fresh 64-bit seed from system entropy (echoed in reports)."""
    return secrets.randbits(64)


def check_seed(seed: Optional[int]) -> int:
    if seed is None:
        return draw_seed()
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    if seed < 0 or seed > SEED_MAX:
        raise ParameterError(f"seed must satisfy 0 <= seed < 2**64, got {seed}")
    return int(seed)


def replicate_rng(seed: int, replicate: int, stream: int = STREAM_PRIMARY) -> np.random.Generator:
    """
    Generator for one replicate, keyed by (seed, stream, replicate).
    The draw sequence does not depend on which worker runs the replicate.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, replicate))
    return np.random.Generator(np.random.Philox(ss))


def default_threads() -> int:
    return os.cpu_count() or 1


class ReplicateRunner:
    """
    Runs replicate chunks on a thread pool. Chunk boundaries depend only on
    n_rep and chunk_size, and results come back in chunk order.
    """

    def __init__(self, threads: Optional[int] = None, chunk_size: int = 256):
        if threads is not None and threads < 1:
            raise ParameterError(f"threads must be >= 1, got {threads}")
        if chunk_size < 1:
            raise ParameterError(f"chunk_size must be >= 1, got {chunk_size}")
        self.threads = threads or default_threads()
        self.chunk_size = chunk_size

    @classmethod
    def from_config(cls, runtime_config: dict, threads: Optional[int] = None):
        return cls(
            threads=threads or runtime_config.get('threads'),
            chunk_size=runtime_config.get('chunk_size', 256),
        )

    def chunks(self, n_rep: int) -> List[Tuple[int, int]]:
        return [(start, min(start + self.chunk_size, n_rep))
                for start in range(0, n_rep, self.chunk_size)]

    def map(self, fn: Callable[[int, int], object], n_rep: int) -> list:
        """Apply fn(start, stop) to every chunk of range(n_rep)."""
        chunks = self.chunks(n_rep)
        if self.threads == 1 or len(chunks) <= 1:
            return [fn(start, stop) for start, stop in chunks]

        logger.debug(f"Running {len(chunks)} chunks on {self.threads} threads")
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(lambda c: fn(*c), chunks))

    def collect(self, fn: Callable[[int, int], np.ndarray], n_rep: int) -> np.ndarray:
        """Concatenate per-chunk arrays into one array indexed by replicate."""
        parts = self.map(fn, n_rep)
        if not parts:
            return np.empty(0)
        return np.concatenate(parts, axis=0)
