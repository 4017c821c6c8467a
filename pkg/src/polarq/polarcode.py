"""Polar transform, encoding, code representation, and Reed-Muller sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np


def bitrev_perm(m: int, i: int) -> int:
    """Index with the m-bit binary representation of i reversed."""
    if not 0 <= i < (1 << m):
        raise ValueError(f"index {i} out of range for m={m}")
    out = 0
    for _ in range(m):
        out = (out << 1) | (i & 1)
        i >>= 1
    return out


def bitrev_permutation(m: int) -> np.ndarray:
    return np.array([bitrev_perm(m, i) for i in range(1 << m)], dtype=np.int64)


@dataclass(frozen=True)
class PolarCode:
    """Block-length exponent m and sorted information set; frozen bits are 0."""

    m: int
    info_set: tuple[int, ...]
    design: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        info = tuple(sorted(int(i) for i in self.info_set))
        if len(set(info)) != len(info):
            raise ValueError("info_set contains duplicates")
        if info and not (0 <= info[0] and info[-1] < self.n):
            raise ValueError("info_set index out of range")
        object.__setattr__(self, "info_set", info)

    @property
    def n(self) -> int:
        return 1 << self.m

    @property
    def k(self) -> int:
        return len(self.info_set)

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def frozen_set(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in set(self.info_set))

    @property
    def info_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[list(self.info_set)] = True
        return mask


def polar_transform(m: int, u: np.ndarray) -> np.ndarray:
    """c = F^(kron m) applied to the bit-reversal-permuted input.

    Accepts a length-n vector or an (..., n) batch; xor butterfly, O(n log n).
    """
    n = 1 << m
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != n:
        raise ValueError(f"length {u.shape[-1]} != n={n}")
    x = u[..., bitrev_permutation(m)].copy()
    for s in range(m):
        step = 1 << s
        idx = (np.arange(n) & step) == 0
        x[..., idx] ^= x[..., ~idx]
    return x


def encode(code: PolarCode, u: np.ndarray) -> np.ndarray:
    """Codeword of a full input vector u (frozen positions already set)."""
    return polar_transform(code.m, u)


def encode_message(code: PolarCode, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Embed k payload bits into u (zeros elsewhere) and encode; returns (u, c)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != code.k:
        raise ValueError(f"expected {code.k} payload bits")
    u = np.zeros(bits.shape[:-1] + (code.n,), dtype=np.uint8)
    u[..., list(code.info_set)] = bits
    return u, encode(code, u)


def rm_info_set(m: int, r: int) -> tuple[int, ...]:
    """Reed-Muller information set: indices whose bit weight is >= m - r."""
    if not 0 <= r <= m:
        raise ValueError(f"order r={r} out of range for m={m}")
    info = tuple(i for i in range(1 << m) if bin(i).count("1") >= m - r)
    assert len(info) == sum(comb(m, j) for j in range(r + 1))
    return info


def codebook(code: PolarCode) -> np.ndarray:
    """All 2^k codewords as a (2^k, n) array; refuses k > 20."""
    if code.k > 20:
        raise ValueError(f"codebook of k={code.k} is too large to enumerate")
    msgs = np.arange(1 << code.k, dtype=np.int64)
    bits = (msgs[:, None] >> np.arange(code.k)[None, :]) & 1
    _, cws = encode_message(code, bits.astype(np.uint8))
    return cws


def save_code(code: PolarCode, path) -> None:
    """Write the code file: explicit bit set plus design metadata."""
    doc = {
        "m": code.m,
        "k": code.k,
        "info_bits": list(code.info_set),
        "design": code.design,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_code(path) -> PolarCode:
    doc = json.loads(Path(path).read_text())
    code = PolarCode(m=doc["m"], info_set=tuple(doc["info_bits"]), design=doc.get("design", {}))
    if code.k != doc["k"]:
        raise ValueError(f"code file {path} is inconsistent: k={doc['k']} vs {code.k} bits")
    return code
