"""Algebra-generic successive cancellation decoding (reference semantics).

The decoder runs the standard in-place schedule over per-depth buffers:
depth 0 holds the n channel labels, depth m the single decision label.  For
bit i the buffers from depth m - trailing_zeros(i) down to m are recomputed
(a variable-node pass entering a right-child segment, check-node passes
below it), and after each decision the partial-sum bits fold back up.

``sc_decode`` is the single-path special case of the list decoder so that
tie handling (zero-LLR coin flips) is bit-identical between the two; the
fair coin materializes as the random tie-break of a two-candidate
truncation.
"""

from __future__ import annotations

import numpy as np

from .alphabet import LlrAlgebra
from .polarcode import PolarCode


class _Buf:
    """Reference-counted buffer for copy-on-write state sharing."""

    __slots__ = ("data", "rc")

    def __init__(self, data, rc=1):
        self.data = data
        self.rc = rc


class ScState:
    """Per-path decoder state: depth-indexed LLR and partial-sum buffers.

    Total label memory is 2n - 1 per path.  Cloning shares buffers; a clone
    copies a buffer only when it is about to write it.
    """

    __slots__ = ("m", "algebra", "channel", "llr", "bits_left", "eager")

    def __init__(self, m: int, channel_labels, algebra: LlrAlgebra, eager: bool = False):
        self.m = m
        self.algebra = algebra
        self.channel = list(channel_labels)  # depth 0, read-only, always shared
        if len(self.channel) != 1 << m:
            raise ValueError("channel label count does not match block length")
        self.llr = [None] + [_Buf([None] * (1 << (m - d))) for d in range(1, m + 1)]
        self.bits_left = [None] + [_Buf([0] * (1 << (m - d))) for d in range(1, m + 1)]
        self.eager = eager

    def clone(self) -> "ScState":
        new = object.__new__(ScState)
        new.m = self.m
        new.algebra = self.algebra
        new.channel = self.channel
        new.eager = self.eager
        if self.eager:
            new.llr = [None] + [_Buf(list(b.data)) for b in self.llr[1:]]
            new.bits_left = [None] + [_Buf(list(b.data)) for b in self.bits_left[1:]]
        else:
            for b in self.llr[1:]:
                b.rc += 1
            for b in self.bits_left[1:]:
                b.rc += 1
            new.llr = list(self.llr)
            new.bits_left = list(self.bits_left)
        return new

    def _writable(self, bufs, d) -> list:
        buf = bufs[d]
        if buf.rc > 1:
            buf.rc -= 1
            buf = _Buf(list(buf.data))
            bufs[d] = buf
        return buf.data

    def _read(self, bufs, d) -> list:
        return bufs[d].data

    def compute_llr(self, i: int):
        """Decision label for bit i; assumes bits < i were pushed in order."""
        m, alg = self.m, self.algebra
        if i == 0:
            d_start = 1
        else:
            t = (i & -i).bit_length() - 1  # trailing zeros
            d_start = m - t
        for d in range(d_start, m + 1):
            src = self.channel if d == 1 else self._read(self.llr, d - 1)
            dst = self._writable(self.llr, d)
            if d == d_start and i != 0:
                flips = self._read(self.bits_left, d)
                for j in range(len(dst)):
                    a = src[2 * j]
                    if flips[j]:
                        a = alg.negate(a)
                    dst[j] = alg.vn(a, src[2 * j + 1])
            else:
                for j in range(len(dst)):
                    dst[j] = alg.cn(src[2 * j], src[2 * j + 1])
        return self._read(self.llr, m)[0]

    def push_bit(self, i: int, u: int):
        """Fold the decision into the partial sums; returns c-hat at the last bit."""
        beta = [int(u)]
        d = m = self.m
        while d >= 1 and (i >> (m - d)) & 1:
            left = self._read(self.bits_left, d)
            beta = [b for pair in zip(left, beta) for b in pair]
            for j in range(len(beta) // 2):
                beta[2 * j] ^= beta[2 * j + 1]
            d -= 1
        if d == 0:
            return beta  # i == n - 1: fully re-encoded codeword
        dst = self._writable(self.bits_left, d)
        dst[:] = beta
        return None


def sc_decode(code: PolarCode, channel_labels, algebra: LlrAlgebra, rng):
    """Successive cancellation decode; returns (u_hat, c_hat).

    Decisions follow the decision label's sign; an exact zero is resolved by
    a fair coin from ``rng``.  Implemented as list decoding with L = 1.
    """
    from .scl import PmRule, scl_decode

    out = scl_decode(code, channel_labels, algebra, 1, PmRule(), rng)
    path = out.paths[0]
    return np.array(path.u_hat, dtype=np.uint8), np.array(path.c_hat, dtype=np.uint8)


def sc_genie_decode(code: PolarCode, channel_labels, algebra: LlrAlgebra, true_u, rng):
    """Genie-aided pass: feed back true bits, flag would-be decision errors.

    Every position gets a flag (frozen ones report what a free decision would
    have done); zero labels err with probability one half.
    """
    true_u = np.asarray(true_u)
    state = ScState(code.m, channel_labels, algebra)
    flags = np.zeros(code.n, dtype=bool)
    for i in range(code.n):
        lam = state.compute_llr(i)
        s = algebra.sign(lam)
        if s == 0:
            wrong = rng.random() < 0.5
        else:
            wrong = (s < 0) != bool(true_u[i])
        flags[i] = wrong
        state.push_bit(i, int(true_u[i]))
    return flags
