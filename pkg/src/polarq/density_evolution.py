"""Discrete density evolution over arbitrary label algebras.

Distributions are finite maps from encoded labels (rows of a float array,
first column = decision value) to probabilities.  The two convolution
operations push the product of two independent label distributions through
the algebra's check-node or variable-node operation; profiles for all n
synthetic channels share work through the operation-prefix recursion, so a
profile costs one convolution per distinct prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .alphabet import (
    Coupled,
    L3,
    L3CC,
    LInfTilde,
    LlrAlgebra,
    coarse_round,
    pm_increment_piecewise,
)
from .channel import qbiawgn_law
from .polarcode import PolarCode

PRUNE_EPS = 1e-15
PRUNE_MIN_SUPPORT = 32  # pruning is a cost measure; tiny supports stay exact
SUM_TOL = 1e-10


def _canonical_rows(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=float)
    if labels.ndim == 1:
        labels = labels[:, None]
    return np.where(labels == 0.0, 0.0, labels)  # fold -0.0 into +0.0


def _group_rows(labels: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum probabilities of identical label rows; rows come out lex-sorted."""
    order = np.lexsort(labels.T[::-1])
    lab = labels[order]
    prb = probs[order]
    if len(lab) == 0:
        return lab, prb
    new_group = np.empty(len(lab), dtype=bool)
    new_group[0] = True
    new_group[1:] = np.any(lab[1:] != lab[:-1], axis=1)
    starts = np.flatnonzero(new_group)
    return lab[starts], np.add.reduceat(prb, starts)


@dataclass
class DiscreteDist:
    """Finite probability distribution over encoded labels.

    Kept canonical: rows unique and lex-sorted, probabilities pruned below
    ``PRUNE_EPS`` and renormalized.  ``prune_loss`` records the mass dropped
    by the most recent pruning, before renormalization.
    """

    labels: np.ndarray
    probs: np.ndarray
    prune_loss: float = field(default=0.0, compare=False)

    def __post_init__(self):
        labels = _canonical_rows(self.labels)
        probs = np.asarray(self.probs, dtype=float)
        if len(probs) != len(labels):
            raise ValueError("labels/probs length mismatch")
        labels, probs = _group_rows(labels, probs)
        if len(probs) > PRUNE_MIN_SUPPORT:
            keep = probs > PRUNE_EPS
        else:
            keep = probs > 0.0
        loss = float(probs[~keep & (probs > 0)].sum())
        labels, probs = labels[keep], probs[keep]
        total = probs.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"distribution mass {total} deviates from 1")
        if abs(total - 1.0) > 1e-15:
            probs = probs / total
        self.labels = labels
        self.probs = probs
        self.prune_loss = loss

    @classmethod
    def point_mass(cls, algebra: LlrAlgebra, label) -> "DiscreteDist":
        return cls(algebra.encode([label]), np.array([1.0]))

    @classmethod
    def from_scalars(cls, pairs: dict) -> "DiscreteDist":
        """Build a one-column distribution from a {value: prob} mapping."""
        labels = np.array(list(pairs.keys()), dtype=float)[:, None]
        return cls(labels, np.array(list(pairs.values()), dtype=float))

    @property
    def support_size(self) -> int:
        return len(self.probs)

    def prob_of(self, row) -> float:
        row = _canonical_rows(np.asarray(row, dtype=float).reshape(1, -1))[0]
        hits = np.all(self.labels == row, axis=1)
        return float(self.probs[hits].sum())

    def scalar_items(self):
        """Iterate (value, prob) for one-column distributions."""
        if self.labels.shape[1] != 1:
            raise ValueError("scalar_items needs a one-column distribution")
        return [(float(l), float(p)) for l, p in zip(self.labels[:, 0], self.probs)]


def transform(dist: DiscreteDist, f, out_width: int | None = None) -> DiscreteDist:
    """Pushforward of ``dist`` through a per-row label map ``f``."""
    rows = [np.atleast_1d(np.asarray(f(row), dtype=float)) for row in dist.labels]
    labels = np.asarray(rows, dtype=float)
    if out_width is not None and labels.shape[1] != out_width:
        raise ValueError("unexpected output width")
    return DiscreteDist(labels, dist.probs.copy())


def conv(d1: DiscreteDist, d2: DiscreteDist, op_arr) -> DiscreteDist:
    """Pushforward of the product distribution through a binary array op."""
    s1, s2 = len(d1.probs), len(d2.probs)
    A = np.repeat(d1.labels, s2, axis=0)
    B = np.tile(d2.labels, (s1, 1))
    probs = np.outer(d1.probs, d2.probs).ravel()
    return DiscreteDist(op_arr(A, B), probs)


def conv_cn(d1: DiscreteDist, d2: DiscreteDist, algebra: LlrAlgebra) -> DiscreteDist:
    return conv(d1, d2, algebra.cn_arr)


def conv_vn(d1: DiscreteDist, d2: DiscreteDist, algebra: LlrAlgebra) -> DiscreteDist:
    return conv(d1, d2, algebra.vn_arr)


@dataclass
class BitLlrProfile:
    """Per-bit decision-LLR distributions and error probabilities."""

    dists: list
    error_probs: np.ndarray

    def __len__(self):
        return len(self.dists)


def bit_error_prob(dist: DiscreteDist) -> float:
    """Pr[decision value < 0] + 0.5 * Pr[decision value = 0]."""
    v = dist.labels[:, 0]
    pe = float(dist.probs[v < 0].sum() + 0.5 * dist.probs[v == 0].sum())
    assert -1e-12 <= pe <= 1.0 + 1e-12
    return min(max(pe, 0.0), 1.0)


def de_profile(channel_dist: DiscreteDist, code: PolarCode, algebra: LlrAlgebra) -> BitLlrProfile:
    """Distributions of all n decision LLRs under the all-zero assumption.

    Bit i's distribution applies the cn/vn sequence spelled by the binary
    expansion of i (most significant bit acts nearest the channel; 0 -> cn,
    1 -> vn).  Prefixes are memoized, so the whole profile needs one
    convolution per distinct prefix.
    """
    memo: dict[tuple, DiscreteDist] = {(): channel_dist}

    def dist_for(prefix: tuple) -> DiscreteDist:
        if prefix not in memo:
            parent = dist_for(prefix[:-1])
            op = conv_cn if prefix[-1] == 0 else conv_vn
            memo[prefix] = op(parent, parent, algebra)
        return memo[prefix]

    dists = []
    for i in range(code.n):
        prefix = tuple((i >> (code.m - 1 - s)) & 1 for s in range(code.m))
        dists.append(dist_for(prefix))
    errs = np.array([bit_error_prob(d) for d in dists])
    return BitLlrProfile(dists=dists, error_probs=errs)


def union_bound(code: PolarCode, profile: BitLlrProfile) -> tuple[float, float]:
    """(clamped, raw) union upper bound: sum of info-bit error probabilities."""
    raw = float(profile.error_probs[list(code.info_set)].sum())
    return min(raw, 1.0), raw


def symmetrize(dist: DiscreteDist, is_frozen: bool, algebra: LlrAlgebra) -> DiscreteDist:
    """Resolve the all-zero assumption: mix with the jointly negated law.

    Information bits carry uniform values, so their label law is the even
    mixture of the all-zero law and its negation; frozen bits keep theirs.
    """
    if is_frozen:
        return dist
    neg = algebra.negate_arr(dist.labels)
    return DiscreteDist(
        np.vstack([dist.labels, neg]), np.concatenate([dist.probs, dist.probs]) * 0.5
    )


def tilde_grid(lo: float, hi: float) -> np.ndarray:
    """All coarse-float-representable values in [lo, hi], ascending."""
    if lo > hi:
        raise ValueError("empty range")
    vals = []
    for e in range(-29, 36):  # covers magnitudes 2^-30 .. 2^30 for j in [8, 16)
        for j in range(8, 16):
            mag = j * 2.0 ** (e - 4)
            if 2.0**-30 <= mag <= 2.0**30:
                vals.extend((mag, -mag))
    vals = np.array(sorted(v for v in set(vals) if lo <= v <= hi))
    return vals


def discretize_gaussian_llr(sigma2: float, tail_sigmas: float = 8.0) -> DiscreteDist:
    """All-zero-codeword channel LLR law, discretized on the coarse float grid.

    The unquantized LLR is Gaussian with mean 2/sigma2 and variance 4/sigma2;
    mass beyond ``tail_sigmas`` standard deviations is truncated and the rest
    renormalized.  Cell boundaries are midpoints between representable values.
    """
    mu = 2.0 / sigma2
    s = 2.0 / np.sqrt(sigma2)
    lo, hi = mu - tail_sigmas * s, mu + tail_sigmas * s
    grid = tilde_grid(lo, hi)
    if len(grid) < 2:
        raise ValueError("degenerate discretization range")
    mids = 0.5 * (grid[1:] + grid[:-1])
    edges = np.concatenate([[lo], mids, [hi]])
    masses = np.diff(ndtr((edges - mu) / s))
    keep = masses > 0
    return DiscreteDist(grid[keep][:, None], masses[keep] / masses[keep].sum())


def coupled_channel_dist(sigma2: float, quantizer, tail_sigmas: float = 8.0) -> DiscreteDist:
    """Joint (quantized, fine) channel label law for the super-decoder.

    Both components are driven by the same LLR sample; each fine grid cell is
    assigned wholly to the quantized label of its representative value, which
    makes the quantized component a deterministic function of the fine one.
    """
    fine = discretize_gaussian_llr(sigma2, tail_sigmas)
    v = fine.labels[:, 0]
    q = np.asarray(quantizer.quantize(v), dtype=float)
    return DiscreteDist(np.column_stack([q, v]), fine.probs.copy())


@dataclass
class EpmuTables:
    """Per-bit expected path-metric increments keyed by (bit, label, decision).

    ``inc[i, qi, u]`` with qi indexing labels (-1, 0, +1); cells whose
    conditioning label has zero probability fall back to the plain 3-level
    increment and are flagged absent.
    """

    inc: np.ndarray
    present: np.ndarray

    @property
    def max_entry(self) -> float:
        return float(self.inc[self.present].max())

    def to_dict(self) -> dict:
        return {
            "labels": [-1, 0, 1],
            "entries": [
                {
                    "bit": i,
                    "label": q - 1,
                    "u0": self.inc[i, q, 0],
                    "u1": self.inc[i, q, 1],
                    "present": bool(self.present[i, q]),
                }
                for i in range(self.inc.shape[0])
                for q in range(3)
            ],
        }


def epmu_tables(code: PolarCode, sigma2: float, quantizer) -> EpmuTables:
    """Expected PM increments from coupled density evolution.

    Runs the (3-level, coarse-float) super-decoder DE, symmetrizes each bit's
    joint law, and takes conditional means of the unquantized three-piece
    increment given the quantized label.
    """
    algebra = Coupled(L3(), LInfTilde())
    chan = coupled_channel_dist(sigma2, quantizer)
    profile = de_profile(chan, code, algebra)
    info = set(code.info_set)

    default = np.array(
        [[pm_increment_piecewise(float(q), u) for u in (0, 1)] for q in (-1, 0, 1)]
    )
    inc = np.zeros((code.n, 3, 2))
    present = np.zeros((code.n, 3), dtype=bool)
    for i, dist in enumerate(profile.dists):
        sym = symmetrize(dist, i not in info, algebra)
        qcol, vcol = sym.labels[:, 0], sym.labels[:, 1]
        for qi, q in enumerate((-1.0, 0.0, 1.0)):
            mask = qcol == q
            pq = sym.probs[mask].sum()
            if pq <= 0.0:
                inc[i, qi] = default[qi]
                continue
            present[i, qi] = True
            for u in (0, 1):
                vals = pm_increment_piecewise(vcol[mask], u)
                inc[i, qi, u] = float(np.dot(sym.probs[mask], vals) / pq)
    return EpmuTables(inc=inc, present=present)


def cc_plausibility(
    code: PolarCode,
    sigma2: float,
    quantizer,
    tail: float = 1e-6,
    count_cap: int = 256,
) -> np.ndarray:
    """Per-bit contradiction-count thresholds exceeded with probability < tail.

    Computed from the correct-path (genie) count marginal of 3-level DE with
    counters.  Counts are capped during DE; thresholds must stay well below
    the cap for the capping to be semantics-free, which is asserted.
    """
    algebra = L3CC(count_cap=count_cap)
    law = qbiawgn_law(3, quantizer.delta, sigma2)
    profile = de_profile(algebra.channel_dist(law), code, algebra)
    info = set(code.info_set)
    thresholds = np.zeros(code.n, dtype=np.int64)
    for i, dist in enumerate(profile.dists):
        sym = symmetrize(dist, i not in info, algebra)
        counts = sym.labels[:, 1].astype(int)
        # smallest t with Pr[C > t] < tail
        t = 0
        while float(sym.probs[counts > t].sum()) >= tail:
            t += 1
        thresholds[i] = t
        assert t < count_cap / 2, "count cap too small for requested tail"
    return thresholds
