"""Unbounded-list decoding on the binary erasure channel.

On the BEC every internal decoder message is erased or certain, so list
decoding never mistakes a codeword: an erased information bit doubles the
list (branching), a contradicted frozen bit halves it (consolidation), and
decoding succeeds exactly when a single path remains.  The expected number
of branchings equals the summed residual erasure probabilities of the
information bits, which is the identity this module measures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rngstream
from .polarcode import PolarCode

LIST_GUARD = 1 << 20


def bec_epsilons(m: int, eps: float) -> np.ndarray:
    """Closed-form per-bit erasure probabilities of the genie decoder.

    Check nodes map e to 2e - e^2, variable nodes to e^2; the most
    significant bit of the index acts nearest the channel.
    """
    out = np.empty(1 << m)
    for i in range(1 << m):
        e = eps
        for s in range(m - 1, -1, -1):
            e = e * e if (i >> s) & 1 else 2 * e - e * e
        out[i] = e
    return out


def i_loss(code: PolarCode, eps_channel: float) -> float:
    """Mutual information lost in under-polarized information bits."""
    if not 0.0 <= eps_channel <= 1.0:
        raise ValueError("erasure probability must be in [0, 1]")
    eps = bec_epsilons(code.m, eps_channel)
    return float(eps[list(code.info_set)].sum())


@dataclass
class BecRunStats:
    """Event record of one unbounded-list decode."""

    branchings: int
    consolidations: int
    list_lengths: list
    final_length: int
    success: bool
    branch_bits: np.ndarray
    truncated: bool = False


def bec_scl_unbounded(code: PolarCode, erasure_pattern, rng=None) -> BecRunStats:
    """Simulate the three-event unbounded-list decoder on one erasure pattern.

    Assumes the all-zero codeword.  Paths carry explicit sign states; the
    three-way event classification (all erased / all agree / exact half
    split) is asserted, and the list length is guarded at 2^20.
    """
    erased = np.asarray(erasure_pattern, dtype=bool)
    n, m = code.n, code.m
    if erased.shape != (n,):
        raise ValueError("erasure pattern length mismatch")
    info = code.info_mask

    # per-path stage buffers of labels in {-1, 0, +1}; all-zero transmission
    # means channel labels are +1 where received, 0 where erased
    chan = np.where(erased, 0, 1).astype(np.int8)[None, :]

    llr = [None] + [np.zeros((1, n >> d), dtype=np.int8) for d in range(1, m + 1)]
    bitsL = [None] + [np.zeros((1, n >> d), dtype=np.uint8) for d in range(1, m + 1)]
    u_paths = np.zeros((1, n), dtype=np.uint8)

    branchings = 0
    consolidations = 0
    lengths = []
    branch_bits = np.zeros(n, dtype=bool)

    def compute(i: int, l_arrs, b_arrs, paths):
        d_start = 1 if i == 0 else m - ((i & -i).bit_length() - 1)
        for d in range(d_start, m + 1):
            src = np.repeat(chan, len(paths), axis=0) if d == 1 else l_arrs[d - 1]
            a, b = src[:, 0::2].copy(), src[:, 1::2]
            if d == d_start and i != 0:
                flips = b_arrs[d].astype(bool)
                a[flips] = -a[flips]
                out = np.clip(a + b, -1, 1)  # erasure-channel variable node
            else:
                out = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
            l_arrs[d] = out.astype(np.int8)
        return l_arrs[m][:, 0]

    def push(i: int, l_arrs, b_arrs, us):
        beta = us[:, None].astype(np.uint8)
        d = m
        while d >= 1 and (i >> (m - d)) & 1:
            left = b_arrs[d]
            out = np.empty((beta.shape[0], 2 * beta.shape[1]), dtype=np.uint8)
            out[:, 0::2] = left ^ beta
            out[:, 1::2] = beta
            beta = out
            d -= 1
        if d >= 1:
            b_arrs[d] = beta

    for i in range(n):
        lengths.append(u_paths.shape[0])
        lam = compute(i, llr, bitsL, u_paths)
        n_paths = u_paths.shape[0]
        zero = lam == 0
        if info[i]:
            if zero.all():  # branching: duplicate every path
                branchings += 1
                branch_bits[i] = True
                if 2 * n_paths > LIST_GUARD:
                    return BecRunStats(
                        branchings, consolidations, lengths, n_paths, False,
                        branch_bits, truncated=True,
                    )
                u_paths = np.repeat(u_paths, 2, axis=0)
                us = np.tile([0, 1], n_paths).astype(np.uint8)
                llr = [None] + [np.repeat(llr[d], 2, axis=0) for d in range(1, m + 1)]
                bitsL = [None] + [np.repeat(bitsL[d], 2, axis=0) for d in range(1, m + 1)]
            else:
                assert not zero.any(), "mixed erasure pattern across paths"
                us = (lam < 0).astype(np.uint8)
            u_paths[:, i] = us
            push(i, llr, bitsL, us)
        else:
            if zero.all():
                us = np.zeros(n_paths, dtype=np.uint8)
            else:
                assert not zero.any(), "mixed erasure pattern across paths"
                keep = lam > 0
                if not keep.all():  # consolidation: contradicted paths die
                    consolidations += 1
                    assert keep.sum() * 2 == n_paths, "frozen split is not exact half"
                    u_paths = u_paths[keep]
                    llr = [None] + [llr[d][keep] for d in range(1, m + 1)]
                    bitsL = [None] + [bitsL[d][keep] for d in range(1, m + 1)]
                us = np.zeros(u_paths.shape[0], dtype=np.uint8)
            u_paths[:, i] = 0
            push(i, llr, bitsL, us)

    final = u_paths.shape[0]
    assert (u_paths == 0).all(axis=1).any(), "all-zero path missing from the list"
    assert final == 1 << (branchings - consolidations)
    return BecRunStats(branchings, consolidations, lengths, final, final == 1, branch_bits)


def branching_stats_batch(code: PolarCode, eps: float, frames: int, seed: int):
    """Vectorized branching-only statistics over many frames.

    A branching at information bit i happens exactly when the genie (all-zero
    path) decision label is erased, so one batched genie pass over the
    erasure magnitudes yields B per frame and the per-bit branching flags.
    """
    n, m = code.n, code.m
    keys = rngstream.frame_keys(seed, np.arange(frames, dtype=np.uint64))
    uni = rngstream.uniform(keys[:, None], np.arange(n, dtype=np.uint64)[None, :])
    known = (uni >= eps).astype(np.int8)  # 1 = received, 0 = erased

    buf = known
    flags = np.zeros((frames, n), dtype=bool)
    stages = [None] * (m + 1)
    stages[0] = buf
    for i in range(n):
        d_start = 1 if i == 0 else m - ((i & -i).bit_length() - 1)
        for d in range(d_start, m + 1):
            src = stages[d - 1]
            # erasure propagation: check node needs both, variable node either
            if d == d_start and i != 0:
                stages[d] = src[:, 0::2] | src[:, 1::2]
            else:
                stages[d] = src[:, 0::2] & src[:, 1::2]
        flags[:, i] = stages[m][:, 0] == 0
    b_counts = flags[:, list(code.info_set)].sum(axis=1)
    return b_counts, flags


@dataclass
class IdentityReport:
    eps: float
    frames: int
    i_loss: float
    mean_branchings: float
    ci_lo: float
    ci_hi: float
    per_bit_ok: bool
    passed: bool


def verify_identity(code: PolarCode, eps: float, frames: int, seed: int) -> IdentityReport:
    """Check that the mean branching count matches the information loss.

    The mean gets a normal-approximation 95% CI; additionally every
    information bit's branching frequency must sit inside its own Wilson
    interval around the closed-form erasure probability.
    """
    if frames < 10**4:
        raise ValueError("need at least 1e4 frames for a meaningful interval")
    b_counts, flags = branching_stats_batch(code, eps, frames, seed)
    mean = float(b_counts.mean())
    half = 1.96 * float(b_counts.std(ddof=1)) / np.sqrt(frames)
    loss = i_loss(code, eps)

    from .montecarlo import wilson_ci

    eps_i = bec_epsilons(code.m, eps)
    per_bit_ok = True
    for i in code.info_set:
        lo, hi = wilson_ci(int(flags[:, i].sum()), frames, z=3.29)  # 99.9% band
        if not lo <= eps_i[i] <= hi:
            per_bit_ok = False
    return IdentityReport(
        eps=eps,
        frames=frames,
        i_loss=loss,
        mean_branchings=mean,
        ci_lo=mean - half,
        ci_hi=mean + half,
        per_bit_ok=per_bit_ok,
        passed=(mean - half <= loss <= mean + half) and per_bit_ok,
    )
