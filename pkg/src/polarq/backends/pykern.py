"""Numpy batch decoder: vectorized across frames and list paths.

One batch holds F frames that march through the decoding schedule in
lockstep (the stage-recomputation pattern depends only on the bit index, and
the list length trajectory only on the code), so every buffer pass and every
truncation is a single vectorized operation over (F, L, width) arrays.

Path reindexing after truncations is applied lazily: each depth keeps a
pending path permutation that is composed at truncation time and
materialized only when the depth is actually read or written, which gives
the same O(L n log n) per-frame cost as classic copy-on-write cloning.

Every random quantity comes from the counter-mode stream in ``rngstream``
keyed by (master seed, frame index), so results are independent of batch
partitioning and identical to the compiled backend's.
"""

from __future__ import annotations

import numpy as np

from .. import rngstream
from ..alphabet import coarse_round, pm_increment_piecewise
from .kernelspec import KIND_FLOAT, KIND_MSD, KIND_TABLE, KernelSpec

NAME = "pykern"


def _minsum(a, b):
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def _exact_cn(a, b):
    corr = np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))
    return _minsum(a, b) + corr


class _Engine:
    """One batch decode; see module docstring for the layout."""

    def __init__(self, spec: KernelSpec, labels: np.ndarray, frame_keys: np.ndarray, L: int):
        self.spec = spec
        self.code = spec.code
        self.m = self.code.m
        self.n = self.code.n
        self.L = L
        self.F = labels.shape[0]
        self.keys = np.asarray(frame_keys, dtype=np.uint64)
        self.table = spec.kind == KIND_TABLE
        if self.table:
            self.channel = labels.astype(np.uint8)
            self.dtype = np.uint8
        else:
            self.channel = labels.astype(np.float64)
            self.dtype = np.float64
        self.llr = [None] + [
            np.zeros((self.F, L, 1 << (self.m - d)), dtype=self.dtype)
            for d in range(1, self.m + 1)
        ]
        self.bitsL = [None] + [
            np.zeros((self.F, L, 1 << (self.m - d)), dtype=np.uint8)
            for d in range(1, self.m + 1)
        ]
        self.pend_llr = [None] * (self.m + 1)
        self.pend_bits = [None] * (self.m + 1)
        self.pms = np.zeros((self.F, L))
        self.u_hist = np.zeros((self.F, L, self.n), dtype=np.uint8)
        self.c_hat = np.zeros((self.F, L, self.n), dtype=np.uint8)
        self.cnt = np.zeros((self.F, L, self.m + 1), dtype=np.int64) if spec.cc or spec.contra_tab is not None else None
        self.l = 1

    # -- lazy path permutation ------------------------------------------
    def _compose(self, parent: np.ndarray):
        for d in range(1, self.m + 1):
            for pend in (self.pend_llr, self.pend_bits):
                if pend[d] is None:
                    pend[d] = parent.copy()
                else:
                    pend[d] = np.take_along_axis(pend[d], parent, axis=1)

    def _mat(self, pend, bufs, d):
        if pend[d] is not None:
            bufs[d][:, : self.l] = np.take_along_axis(
                bufs[d], pend[d][:, :, None], axis=1
            )[:, : self.l]
            pend[d] = None

    # -- llr passes -------------------------------------------------------
    def _op(self, which: str, a, b):
        spec = self.spec
        if self.table:
            tab = spec.cn_tab if which == "cn" else spec.vn_tab
            return tab[a, b]
        if spec.kind == KIND_MSD:
            # tag is positional: depth-1 operands are raw channel LLRs
            raise AssertionError("msd ops dispatched by depth")
        if which == "cn":
            out = _exact_cn(a, b) if spec.exact_cn else _minsum(a, b)
        else:
            out = a + b
        return coarse_round(out) if spec.tilde else out

    def _op_msd(self, which: str, a, b, depth: int):
        if depth == 1:
            if which == "cn":
                raw = _minsum(a, b)
                delta = self.spec.delta_cn
            else:
                raw = a + b
                delta = self.spec.delta_vn
            mag = np.ceil((np.abs(raw) - delta) / (2.0 * delta))
            return np.sign(raw) * np.clip(mag, 0, 1)
        if which == "cn":
            return _minsum(a, b)
        return np.clip(a + b, -1.0, 1.0)

    def _negate(self, a):
        if self.table:
            return (self.spec.n_labels - 1) - a
        return -a

    def compute_bit(self, i: int):
        m, l = self.m, self.l
        d_start = 1 if i == 0 else m - ((i & -i).bit_length() - 1)
        for d in range(d_start, m + 1):
            if d == 1:
                src = np.broadcast_to(
                    self.channel[:, None, :], (self.F, l, self.n)
                )
            else:
                self._mat(self.pend_llr, self.llr, d - 1)
                src = self.llr[d - 1][:, :l]
            a, b = src[..., 0::2], src[..., 1::2]
            self.pend_llr[d] = None  # fully overwritten below
            dst = self.llr[d]
            if d == d_start and i != 0:
                self._mat(self.pend_bits, self.bitsL, d)
                flips = self.bitsL[d][:, :l].astype(bool)
                a = np.where(flips, self._negate(a), a)
                out = (
                    self._op_msd("vn", a, b, d)
                    if self.spec.kind == KIND_MSD
                    else self._op("vn", a, b)
                )
                if self.cnt is not None:
                    contra = self.spec.contra_tab[a, b] if self.table else None
                    self.cnt[:, :l, d] = contra.sum(axis=2)
            else:
                out = (
                    self._op_msd("cn", a, b, d)
                    if self.spec.kind == KIND_MSD
                    else self._op("cn", a, b)
                )
                if self.cnt is not None:
                    self.cnt[:, :l, d] = 0
            dst[:, :l] = out.astype(self.dtype, copy=False)
        return self.llr[m][:, :l, 0]

    # -- path metric increments ------------------------------------------
    def _inc(self, lam, i: int):
        """(F, l, 2) increments for u = 0, 1."""
        spec = self.spec
        if self.table:
            return spec.pm_tab[i, lam.astype(np.intp)]
        if spec.kind == KIND_MSD:
            return spec.pm_tab[i, (lam + 1.0).astype(np.intp)]
        out = np.empty(lam.shape + (2,))
        out[..., 0] = pm_increment_piecewise(lam, 0)
        out[..., 1] = pm_increment_piecewise(lam, 1)
        return out

    def counts(self):
        return self.cnt[:, : self.l, 1:].sum(axis=2)

    # -- partial sums -------------------------------------------------------
    def push_bit(self, i: int, u_bits: np.ndarray):
        m, l = self.m, self.l
        beta = u_bits[:, :, None].astype(np.uint8)
        d = m
        while d >= 1 and (i >> (m - d)) & 1:
            self._mat(self.pend_bits, self.bitsL, d)
            left = self.bitsL[d][:, :l]
            w = beta.shape[2]
            out = np.empty((self.F, l, 2 * w), dtype=np.uint8)
            out[..., 0::2] = left[..., :w] ^ beta
            out[..., 1::2] = beta
            beta = out
            d -= 1
        if d == 0:
            self.c_hat[:, :l] = beta
        else:
            self.pend_bits[d] = None
            self.bitsL[d][:, :l] = beta

    # -- main loop ----------------------------------------------------------
    def run(self):
        spec, L = self.spec, self.L
        tb_base = rngstream.tiebreak_base(self.n)
        for i in range(self.n):
            lam = self.compute_bit(i)
            inc = self._inc(lam, i)
            if not spec.info_mask[i]:
                self.pms[:, : self.l] += inc[..., 0]
                self.u_hist[:, : self.l, i] = 0
                self.push_bit(i, np.zeros((self.F, self.l), dtype=np.uint8))
                continue
            l = self.l
            cand = np.repeat(self.pms[:, :l], 2, axis=1) + inc.reshape(self.F, 2 * l)
            if 2 * l <= L:
                parent = np.broadcast_to(np.arange(2 * l) // 2, (self.F, 2 * l))
                us = np.broadcast_to(np.arange(2 * l) % 2, (self.F, 2 * l)).astype(np.uint8)
                new_pms = cand
                self.l = 2 * l
            else:
                slots = np.uint64(tb_base + i * 2 * L) + np.arange(2 * l, dtype=np.uint64)
                keys = rngstream.u64(self.keys[:, None], slots[None, :])
                eff = cand
                if spec.cc:
                    over = (self.counts() > spec.thresholds[i]).astype(float)
                    eff = cand + np.repeat(over * spec.penalty, 2, axis=1)
                perm1 = np.argsort(keys, axis=1, kind="stable")
                eff_k = np.take_along_axis(eff, perm1, axis=1)
                perm2 = np.argsort(eff_k, axis=1, kind="stable")
                order = np.take_along_axis(perm1, perm2, axis=1)[:, :L]
                parent = order // 2
                us = (order % 2).astype(np.uint8)
                new_pms = np.take_along_axis(cand, order, axis=1)
                self.l = L
            self._compose(parent)
            if self.cnt is not None:
                self.cnt[:, : self.l] = np.take_along_axis(
                    self.cnt, parent[:, :, None], axis=1
                )[:, : self.l]
            self.u_hist[:, : self.l] = np.take_along_axis(
                self.u_hist, parent[:, :, None], axis=1
            )[:, : self.l]
            self.pms[:, : self.l] = new_pms[:, : self.l]
            self.u_hist[:, : self.l, i] = us[:, : self.l]
            self.push_bit(i, us[:, : self.l])

        # final list sorted by metric, stable in decode order
        order = np.argsort(self.pms[:, : self.l], axis=1, kind="stable")
        pms = np.take_along_axis(self.pms[:, : self.l], order, axis=1)
        u = np.take_along_axis(self.u_hist[:, : self.l], order[:, :, None], axis=1)
        c = np.take_along_axis(self.c_hat[:, : self.l], order[:, :, None], axis=1)
        return u, c, pms


def scl_batch(spec: KernelSpec, labels: np.ndarray, frame_keys: np.ndarray, L: int):
    """Decode a batch; returns (u_hats, c_hats, pms) sorted by metric per frame.

    ``labels`` is (F, n): label indices for table specs, float LLRs otherwise.
    """
    return _Engine(spec, labels, frame_keys, L).run()


def genie_llrs(spec: KernelSpec, labels: np.ndarray, true_u: np.ndarray):
    """Per-bit decision labels of the genie-aided single-path decoder.

    Returns (F, n) raw labels (indices for table specs) plus the per-bit
    contradiction-count totals when the spec tracks them (else None).
    """
    eng = _Engine(spec, labels, np.zeros(labels.shape[0], dtype=np.uint64), 1)
    out = np.zeros(labels.shape, dtype=eng.dtype)
    counts = np.zeros(labels.shape, dtype=np.int64) if eng.cnt is not None else None
    for i in range(eng.n):
        lam = eng.compute_bit(i)
        out[:, i] = lam[:, 0]
        if counts is not None:
            counts[:, i] = eng.counts()[:, 0]
        eng.u_hist[:, 0, i] = true_u[:, i]
        eng.push_bit(i, true_u[:, i : i + 1].astype(np.uint8))
    return out, counts
