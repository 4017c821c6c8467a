"""Counter-mode random streams for reproducible, order-independent simulation.

Every random quantity consumed while simulating frame ``f`` is a pure function
of ``(master_seed, f, slot)``, so results do not depend on batch sizes, worker
counts, or the backend that did the decoding.  The mixing function is
SplitMix64, applied twice (once to the slot, once keyed), which is plenty for
Monte-Carlo use.

Slot layout per frame (``n`` = block length, ``L`` = list size):

    [0, n)                      message bits
    [n, 3n)                     channel noise (two uniforms per Box-Muller pair)
    [4n, 4n + 2*L*n)            list-truncation tie-break keys, ``2L`` per bit
    SEL_* offsets past that     winner-selection draws evaluated per frame
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

SLOT_MESSAGE = 0
SLOT_NOISE_FACTOR = 1  # noise slots start at n
SEL_PM_TIE = 0
SEL_ML_TIE = 1
SEL_MLLB_COIN = 2
SEL_GENIE_COIN = 3


def splitmix64(x):
    """SplitMix64 finalizer; accepts uint64 scalars or arrays, wraps mod 2^64."""
    with np.errstate(over="ignore"):
        z = (np.uint64(x) + _GAMMA).astype(np.uint64) if np.ndim(x) else np.uint64(x) + _GAMMA
        z = np.uint64(z)
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def frame_keys(master_seed: int, frame_indices) -> np.ndarray:
    """64-bit key per frame, derived from the master seed and frame index."""
    idx = np.asarray(frame_indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ splitmix64(idx))


def u64(keys, slots) -> np.ndarray:
    """PRF(key, slot) -> uint64; broadcasts keys against slots."""
    with np.errstate(over="ignore"):
        return splitmix64(np.uint64(keys) ^ splitmix64(np.asarray(slots, dtype=np.uint64)))


def uniform(keys, slots) -> np.ndarray:
    """Uniform floats in (0, 1), never exactly 0 or 1."""
    return (u64(keys, slots).astype(np.float64) + 0.5) * (2.0**-64)


def bits(keys, slots) -> np.ndarray:
    """Fair bits (uint8) from the top bit of the PRF output."""
    return (u64(keys, slots) >> np.uint64(63)).astype(np.uint8)


def gaussian_noise(keys: np.ndarray, n: int) -> np.ndarray:
    """Standard-normal noise, shape (len(keys), n), via Box-Muller.

    Frame f, symbol j uses slots n + 2j and n + 2j + 1.
    """
    keys = np.asarray(keys, dtype=np.uint64)[:, None]
    base = np.uint64(n)
    slots = base + np.uint64(2) * np.arange(n, dtype=np.uint64)[None, :]
    u1 = uniform(keys, slots)
    u2 = uniform(keys, slots + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def message_bits(keys: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Payload bits for the given bit positions, shape (len(keys), len(positions))."""
    keys = np.asarray(keys, dtype=np.uint64)[:, None]
    return bits(keys, np.asarray(positions, dtype=np.uint64)[None, :])


def tiebreak_base(n: int) -> int:
    """First slot of the truncation tie-break region."""
    return 4 * n


def selection_base(n: int, list_size: int) -> int:
    """First slot of the winner-selection region."""
    return 4 * n + 2 * list_size * n


class FrameStream:
    """Draw adapter handing one frame's tie-break keys to a scalar decoder.

    Mirrors the slot arithmetic of the batch backends so that a pure-python
    decode of frame ``f`` consumes exactly the same randomness as the kernels.
    """

    def __init__(self, master_seed: int, frame_index: int, n: int, list_size: int):
        self.key = frame_keys(master_seed, [frame_index])[0]
        self.n = n
        self.list_size = list_size

    def tiebreaks(self, bit_index: int, count: int) -> np.ndarray:
        base = tiebreak_base(self.n) + bit_index * 2 * self.list_size
        return u64(self.key, base + np.arange(count, dtype=np.uint64))

    def selection(self, which: int) -> np.uint64:
        return u64(self.key, selection_base(self.n, self.list_size) + which)
