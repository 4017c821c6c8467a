# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled decoder core: per-frame list decoding with lazy path reindexing.

Mirrors the numpy batch engine exactly, including the counter-mode tie-break
streams, so both backends produce identical outputs for identical inputs.
The exact (tanh) check node is declined here: numpy's SIMD transcendentals
round differently from libm in the last ulp, and near-ties would amplify
that into diverging survivor sets.
"""

import numpy as np

cimport numpy as cnp
from cpython.mem cimport PyMem_Free, PyMem_Malloc
from libc.math cimport ceil, fabs, frexp, ldexp, rint
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport qsort
from libc.string cimport memcpy

from .kernelspec import KIND_MSD, KIND_TABLE

cnp.import_array()

cdef double LN2 = 0.6931471805599453
cdef double TWO_LN2 = 1.3862943611198906

ctypedef fused lab_t:
    cnp.uint8_t
    double


cdef inline uint64_t _splitmix64(uint64_t x) noexcept nogil:
    cdef uint64_t z = x + (<uint64_t>0x9E3779B97F4A7C15)
    z = (z ^ (z >> 30)) * (<uint64_t>0xBF58476D1CE4E5B9)
    z = (z ^ (z >> 27)) * (<uint64_t>0x94D049BB133111EB)
    return z ^ (z >> 31)


cdef inline uint64_t _prf(uint64_t key, uint64_t slot) noexcept nogil:
    return _splitmix64(key ^ _splitmix64(slot))


cdef inline double _sgn(double a) noexcept nogil:
    if a > 0:
        return 1.0
    if a < 0:
        return -1.0
    return 0.0


cdef inline double _minsum(double a, double b) noexcept nogil:
    cdef double ma = fabs(a)
    cdef double mb = fabs(b)
    if mb < ma:
        ma = mb
    return _sgn(a) * _sgn(b) * ma


cdef inline double _coarse_round(double x) noexcept nogil:
    cdef int e
    cdef double mant, y, mag
    if x == 0:
        return 0.0
    mant = frexp(x, &e)
    y = ldexp(rint(mant * 16.0) / 16.0, e)
    mag = fabs(y)
    if mag > 1073741824.0:  # 2^30
        return 1073741824.0 if y > 0 else -1073741824.0
    if mag < 9.313225746154785e-10:  # 2^-30
        return 9.313225746154785e-10 if y > 0 else -9.313225746154785e-10
    return y


cdef inline double _pm_piece(double x, int u) noexcept nogil:
    cdef double s = x if u == 0 else -x
    if s < -TWO_LN2:
        return -s
    if s > TWO_LN2:
        return 0.0
    return 0.5 * (-s) + LN2


cdef inline double _quant3(double raw, double delta) noexcept nogil:
    cdef double val = ceil((fabs(raw) - delta) / (2.0 * delta))
    if val < 0:
        val = 0
    elif val > 1:
        val = 1
    return _sgn(raw) * val


cdef struct Sorter:
    double eff
    uint64_t key
    int idx


cdef int _cmp_sorter(const void* pa, const void* pb) noexcept nogil:
    cdef const Sorter* a = <const Sorter*> pa
    cdef const Sorter* b = <const Sorter*> pb
    if a.eff < b.eff:
        return -1
    if a.eff > b.eff:
        return 1
    if a.key < b.key:
        return -1
    if a.key > b.key:
        return 1
    if a.idx < b.idx:
        return -1
    if a.idx > b.idx:
        return 1
    return 0


cdef inline void _sort_candidates(Sorter* arr, int n) noexcept nogil:
    # the comparator's idx field makes the order total, so any correct sort
    # yields the same permutation as a stable one
    if n > 64:
        qsort(arr, n, sizeof(Sorter), _cmp_sorter)
    else:
        _insertion_sort(arr, n)


cdef void _insertion_sort(Sorter* arr, int n) noexcept nogil:
    cdef int i, j
    cdef Sorter tmp
    for i in range(1, n):
        tmp = arr[i]
        j = i - 1
        while j >= 0 and (
            arr[j].eff > tmp.eff
            or (arr[j].eff == tmp.eff and arr[j].key > tmp.key)
            or (arr[j].eff == tmp.eff and arr[j].key == tmp.key and arr[j].idx > tmp.idx)
        ):
            arr[j + 1] = arr[j]
            j -= 1
        arr[j + 1] = tmp


def scl_batch(spec, labels, frame_keys, int L):
    """Decode a batch of frames; same contract and outputs as pykern.scl_batch."""
    if spec.exact_cn:
        raise ValueError("exact check node is not supported by the compiled core")
    if L > 2048:
        raise ValueError("compiled backend supports list sizes up to 2048")
    code = spec.code
    n = code.n
    F = labels.shape[0]
    info_mask = np.ascontiguousarray(spec.info_mask, dtype=np.uint8)

    l_final = 1
    for i in range(n):
        if info_mask[i] and l_final < L:
            l_final = min(2 * l_final, L)
    u_out = np.zeros((F, l_final, n), dtype=np.uint8)
    c_out = np.zeros((F, l_final, n), dtype=np.uint8)
    pm_out = np.zeros((F, l_final), dtype=np.float64)
    keys = np.ascontiguousarray(frame_keys, dtype=np.uint64)

    if spec.kind == KIND_TABLE:
        _run_batch(
            np.ascontiguousarray(labels, dtype=np.uint8),
            spec, keys, L, u_out, c_out, pm_out,
        )
    else:
        _run_batch(
            np.ascontiguousarray(labels, dtype=np.float64),
            spec, keys, L, u_out, c_out, pm_out,
        )
    return u_out, c_out, pm_out


def _run_batch(lab_t[:, ::1] labels_mv, spec, cnp.uint64_t[::1] keys, int L,
               cnp.uint8_t[:, :, ::1] u_out, cnp.uint8_t[:, :, ::1] c_out,
               cnp.float64_t[:, ::1] pm_out):
    code = spec.code
    cdef int m = code.m
    cdef int n = code.n
    cdef int F = labels_mv.shape[0]
    cdef bint tilde = 1 if spec.tilde else 0
    cdef bint is_msd = 1 if spec.kind == KIND_MSD else 0
    cdef bint use_pm_tab = 1 if spec.pm_tab is not None else 0
    cdef double delta_cn = spec.delta_cn
    cdef double delta_vn = spec.delta_vn
    cdef bint cc = 1 if spec.cc else 0
    cdef bint track_counts = 1 if spec.contra_tab is not None else 0
    cdef double penalty = spec.penalty
    cdef int n_labels = spec.n_labels

    dummy8 = np.zeros((1, 1), dtype=np.uint8)
    cn_np = np.ascontiguousarray(spec.cn_tab if spec.cn_tab is not None else dummy8)
    vn_np = np.ascontiguousarray(spec.vn_tab if spec.vn_tab is not None else dummy8)
    contra_np = np.ascontiguousarray(
        spec.contra_tab if spec.contra_tab is not None else dummy8
    )
    pm_np = np.ascontiguousarray(spec.pm_tab if use_pm_tab else np.zeros((1, 1, 2)))
    thr_np = np.ascontiguousarray(
        spec.thresholds if cc else np.zeros(1, dtype=np.int64), dtype=np.int64
    )
    info_np = np.ascontiguousarray(spec.info_mask, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] cn_mv = cn_np
    cdef cnp.uint8_t[:, ::1] vn_mv = vn_np
    cdef cnp.uint8_t[:, ::1] contra_mv = contra_np
    cdef cnp.float64_t[:, :, ::1] pm_mv = pm_np
    cdef cnp.int64_t[::1] thr_mv = thr_np
    cdef cnp.uint8_t[::1] info_mv = info_np
    cdef cnp.uint8_t* cn_tab = &cn_mv[0, 0]
    cdef cnp.uint8_t* vn_tab = &vn_mv[0, 0]
    cdef cnp.uint8_t* contra_tab = &contra_mv[0, 0]
    cdef double* pm_tab = &pm_mv[0, 0, 0]
    cdef int64_t* thresholds = &thr_mv[0]
    cdef cnp.uint8_t* info = &info_mv[0]

    # contiguous per-depth buffers: depth d rows have width n >> d
    offs_np = np.zeros(m + 2, dtype=np.int64)
    cdef int d
    for d in range(1, m + 1):
        offs_np[d + 1] = offs_np[d] + L * (n >> d)
    cdef cnp.int64_t[::1] offs_mv = offs_np
    cdef int64_t* offs = &offs_mv[0]

    llr_np = np.zeros(offs_np[m + 1], dtype=(np.uint8 if lab_t is cnp.uint8_t else np.float64))
    cdef lab_t[::1] llr_mv = llr_np
    cdef lab_t* llr = &llr_mv[0]
    bitsL_np = np.zeros(offs_np[m + 1], dtype=np.uint8)
    cdef cnp.uint8_t[::1] bitsL_mv = bitsL_np
    cdef cnp.uint8_t* bitsL = &bitsL_mv[0]
    scratch_lab_np = np.zeros(L * (n >> 1), dtype=llr_np.dtype)
    cdef lab_t[::1] scr_lab_mv = scratch_lab_np
    cdef lab_t* scr_lab = &scr_lab_mv[0]
    scratch_bit_np = np.zeros(L * (n >> 1), dtype=np.uint8)
    cdef cnp.uint8_t[::1] scr_bit_mv = scratch_bit_np
    cdef cnp.uint8_t* scr_bit = &scr_bit_mv[0]
    beta_np = np.zeros(L * n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] beta_mv = beta_np
    cdef cnp.uint8_t* beta = &beta_mv[0]
    beta2_np = np.zeros(L * n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] beta2_mv = beta2_np
    cdef cnp.uint8_t* beta2 = &beta2_mv[0]

    perm_l_np = np.zeros((m + 1) * L, dtype=np.int32)
    perm_b_np = np.zeros((m + 1) * L, dtype=np.int32)
    cdef cnp.int32_t[::1] perm_l_mv = perm_l_np
    cdef cnp.int32_t[::1] perm_b_mv = perm_b_np
    cdef cnp.int32_t* perm_l = &perm_l_mv[0]
    cdef cnp.int32_t* perm_b = &perm_b_mv[0]
    act_np = np.zeros(2 * (m + 1), dtype=np.uint8)
    cdef cnp.uint8_t[::1] act_mv = act_np
    cdef cnp.uint8_t* act_l = &act_mv[0]
    cdef cnp.uint8_t* act_b = &act_mv[0] + (m + 1)
    tmp32_np = np.zeros(L, dtype=np.int32)
    cdef cnp.int32_t[::1] tmp32_mv = tmp32_np
    cdef cnp.int32_t* perm_tmp = &tmp32_mv[0]
    tmp32b_np = np.zeros(L, dtype=np.int32)
    cdef cnp.int32_t[::1] tmp32b_mv = tmp32b_np
    cdef cnp.int32_t* compose_scr = &tmp32b_mv[0]
    tmp64_np = np.zeros(L, dtype=np.int64)
    cdef cnp.int64_t[::1] tmp64_mv = tmp64_np
    cdef int64_t* tmp64 = &tmp64_mv[0]

    pms_np = np.zeros(L)
    cdef cnp.float64_t[::1] pms_mv = pms_np
    cdef double* pms = &pms_mv[0]
    cnt_np = np.zeros((m + 1) * L, dtype=np.int64)
    cdef cnp.int64_t[::1] cnt_mv = cnt_np
    cdef int64_t* cnt = &cnt_mv[0]
    pc_np = np.zeros(L, dtype=np.int64)
    cdef cnp.int64_t[::1] pc_mv = pc_np
    cdef int64_t* path_count = &pc_mv[0]
    par_np = np.zeros(n * L, dtype=np.int32)
    cdef cnp.int32_t[::1] par_mv = par_np
    cdef cnp.int32_t* parents_rec = &par_mv[0]
    ub_np = np.zeros(n * L, dtype=np.uint8)
    cdef cnp.uint8_t[::1] ub_mv = ub_np
    cdef cnp.uint8_t* ubits_rec = &ub_mv[0]

    cdef Sorter* sorter = <Sorter*> PyMem_Malloc(2 * L * sizeof(Sorter))
    if sorter == NULL:
        raise MemoryError()
    cand_np = np.zeros(2 * L)
    cdef cnp.float64_t[::1] cand_mv = cand_np
    cdef double* cand_pm = &cand_mv[0]

    cdef int f, i, p, j, l, l_new, t, d_start, w, c_idx, lab_sz
    cdef uint64_t key, slot_base
    cdef double a, b, raw, inc0, inc1
    cdef int la, lb
    cdef double fa, fb
    cdef lab_t* src_row
    cdef lab_t* dst_row
    cdef cnp.uint8_t* flip_row
    cdef cnp.uint8_t* brow
    cdef int tb_base = 4 * n
    cdef const lab_t* chan

    lab_sz = sizeof(lab_t)
    with nogil:
        for f in range(F):
            key = keys[f]
            chan = &labels_mv[f, 0]
            l = 1
            pms[0] = 0.0
            for d in range(2 * (m + 1)):
                act_l[d] = 0  # covers act_b too (same allocation)
            for d in range((m + 1) * L):
                cnt[d] = 0
            for i in range(n):
                # ---- recompute decision labels -----------------------------
                if i == 0:
                    d_start = 1
                else:
                    t = 0
                    while not (i >> t) & 1:
                        t += 1
                    d_start = m - t
                for d in range(d_start, m + 1):
                    w = n >> d
                    if d > 1:
                        _materialize(llr, scr_lab, perm_l + (d - 1) * L, act_l + (d - 1), offs, d - 1, l, n, lab_sz)
                    act_l[d] = 0
                    if d == d_start and i != 0:
                        _materialize_u8(bitsL, scr_bit, perm_b + d * L, act_b + d, offs, d, l, n)
                        for p in range(l):
                            cnt[d * L + p] = 0
                            flip_row = bitsL + offs[d] + p * w
                            src_row = (<lab_t*> chan) if d == 1 else (llr + offs[d - 1] + p * 2 * w)
                            dst_row = llr + offs[d] + p * w
                            for j in range(w):
                                if lab_t is cnp.uint8_t:
                                    la = src_row[2 * j]
                                    lb = src_row[2 * j + 1]
                                    if flip_row[j]:
                                        la = n_labels - 1 - la
                                    if track_counts:
                                        cnt[d * L + p] += contra_tab[la * n_labels + lb]
                                    dst_row[j] = vn_tab[la * n_labels + lb]
                                else:
                                    fa = src_row[2 * j]
                                    fb = src_row[2 * j + 1]
                                    if flip_row[j]:
                                        fa = -fa
                                    raw = fa + fb
                                    if is_msd:
                                        if d == 1:
                                            raw = _quant3(raw, delta_vn)
                                        else:
                                            if raw > 1.0:
                                                raw = 1.0
                                            elif raw < -1.0:
                                                raw = -1.0
                                    elif tilde:
                                        raw = _coarse_round(raw)
                                    dst_row[j] = raw
                    else:
                        for p in range(l):
                            cnt[d * L + p] = 0
                            src_row = (<lab_t*> chan) if d == 1 else (llr + offs[d - 1] + p * 2 * w)
                            dst_row = llr + offs[d] + p * w
                            for j in range(w):
                                if lab_t is cnp.uint8_t:
                                    dst_row[j] = cn_tab[src_row[2 * j] * n_labels + src_row[2 * j + 1]]
                                else:
                                    a = src_row[2 * j]
                                    b = src_row[2 * j + 1]
                                    raw = _minsum(a, b)
                                    if is_msd and d == 1:
                                        raw = _quant3(raw, delta_cn)
                                    elif tilde:
                                        raw = _coarse_round(raw)
                                    dst_row[j] = raw

                if track_counts:
                    for p in range(l):
                        path_count[p] = 0
                        for d in range(1, m + 1):
                            path_count[p] += cnt[d * L + p]

                # ---- frozen bit --------------------------------------------
                if not info[i]:
                    for p in range(l):
                        if lab_t is cnp.uint8_t:
                            pms[p] += pm_tab[(i * n_labels + <int> llr[offs[m] + p]) * 2]
                        else:
                            if use_pm_tab:
                                pms[p] += pm_tab[(i * 3 + <int> (llr[offs[m] + p] + 1.0)) * 2]
                            else:
                                pms[p] += _pm_piece(<double> llr[offs[m] + p], 0)
                        ubits_rec[i * L + p] = 0
                        parents_rec[i * L + p] = p
                        beta[p * n] = 0
                    _push_core(bitsL, scr_bit, perm_b, act_b, offs, beta, beta2,
                               c_out, f, i, m, l, L, n)
                    continue

                # ---- info bit: extend, maybe truncate ----------------------
                for p in range(l):
                    if lab_t is cnp.uint8_t:
                        inc0 = pm_tab[(i * n_labels + <int> llr[offs[m] + p]) * 2]
                        inc1 = pm_tab[(i * n_labels + <int> llr[offs[m] + p]) * 2 + 1]
                    else:
                        if use_pm_tab:
                            inc0 = pm_tab[(i * 3 + <int> (llr[offs[m] + p] + 1.0)) * 2]
                            inc1 = pm_tab[(i * 3 + <int> (llr[offs[m] + p] + 1.0)) * 2 + 1]
                        else:
                            inc0 = _pm_piece(<double> llr[offs[m] + p], 0)
                            inc1 = _pm_piece(<double> llr[offs[m] + p], 1)
                    cand_pm[2 * p] = pms[p] + inc0
                    cand_pm[2 * p + 1] = pms[p] + inc1
                    sorter[2 * p].eff = cand_pm[2 * p]
                    sorter[2 * p].idx = 2 * p
                    sorter[2 * p + 1].eff = cand_pm[2 * p + 1]
                    sorter[2 * p + 1].idx = 2 * p + 1

                if 2 * l <= L:
                    l_new = 2 * l
                    for p in range(l_new - 1, -1, -1):
                        parents_rec[i * L + p] = p // 2
                        ubits_rec[i * L + p] = p % 2
                        pms[p] = cand_pm[p]
                        perm_tmp[p] = p // 2
                else:
                    l_new = L
                    slot_base = <uint64_t> (tb_base + i * 2 * L)
                    for c_idx in range(2 * l):
                        sorter[c_idx].key = _prf(key, slot_base + <uint64_t> c_idx)
                        if cc and path_count[c_idx // 2] > thresholds[i]:
                            sorter[c_idx].eff += penalty
                    _sort_candidates(sorter, 2 * l)
                    # stored metric excludes the transient penalty
                    for p in range(l_new):
                        parents_rec[i * L + p] = sorter[p].idx // 2
                        ubits_rec[i * L + p] = sorter[p].idx % 2
                        pms[p] = cand_pm[sorter[p].idx]
                        perm_tmp[p] = sorter[p].idx // 2

                for d in range(1, m + 1):
                    _compose(perm_l + d * L, act_l + d, perm_tmp, compose_scr, l_new)
                    _compose(perm_b + d * L, act_b + d, perm_tmp, compose_scr, l_new)
                if track_counts:
                    for d in range(1, m + 1):
                        for p in range(l_new):
                            tmp64[p] = cnt[d * L + perm_tmp[p]]
                        for p in range(l_new):
                            cnt[d * L + p] = tmp64[p]
                l = l_new
                for p in range(l):
                    beta[p * n] = ubits_rec[i * L + p]
                _push_core(bitsL, scr_bit, perm_b, act_b, offs, beta, beta2,
                           c_out, f, i, m, l, L, n)

            # ---- final: stable sort by pm, reconstruct u ------------------
            for p in range(l):
                sorter[p].eff = pms[p]
                sorter[p].key = 0
                sorter[p].idx = p
            _sort_candidates(sorter, l)
            for p in range(l):
                pm_out[f, p] = sorter[p].eff
                c_idx = sorter[p].idx
                for i in range(n - 1, -1, -1):
                    u_out[f, p, i] = ubits_rec[i * L + c_idx]
                    c_idx = parents_rec[i * L + c_idx]
            for i in range(n):
                for p in range(l):
                    beta[p] = c_out[f, sorter[p].idx, i]
                for p in range(l):
                    c_out[f, p, i] = beta[p]

    PyMem_Free(sorter)
    return


cdef void _compose(cnp.int32_t* perm, cnp.uint8_t* act,
                   cnp.int32_t* parent, cnp.int32_t* scratch, int l_new) noexcept nogil:
    cdef int p
    if act[0]:
        for p in range(l_new):
            scratch[p] = perm[parent[p]]
        for p in range(l_new):
            perm[p] = scratch[p]
    else:
        for p in range(l_new):
            perm[p] = parent[p]
        act[0] = 1


cdef void _materialize(lab_t* buf, lab_t* scratch, cnp.int32_t* perm,
                       cnp.uint8_t* act, int64_t* offs, int d, int l,
                       int n, int lab_sz) noexcept nogil:
    cdef int p, w
    if not act[0]:
        return
    w = n >> d
    for p in range(l):
        memcpy(scratch + p * w, buf + offs[d] + perm[p] * w, w * lab_sz)
    memcpy(buf + offs[d], scratch, l * w * lab_sz)
    act[0] = 0


cdef void _materialize_u8(cnp.uint8_t* buf, cnp.uint8_t* scratch, cnp.int32_t* perm,
                          cnp.uint8_t* act, int64_t* offs, int d, int l,
                          int n) noexcept nogil:
    cdef int p, w
    if not act[0]:
        return
    w = n >> d
    for p in range(l):
        memcpy(scratch + p * w, buf + offs[d] + perm[p] * w, w)
    memcpy(buf + offs[d], scratch, l * w)
    act[0] = 0


cdef void _push_core(cnp.uint8_t* bitsL, cnp.uint8_t* scratch,
                     cnp.int32_t* perm_b, cnp.uint8_t* act_b,
                     int64_t* offs, cnp.uint8_t* beta, cnp.uint8_t* beta2,
                     cnp.uint8_t[:, :, ::1] c_out,
                     int f, int i, int m, int l, int L, int n) noexcept nogil:
    """Fold per-path decisions (beta rows, stride n) into the partial sums."""
    cdef int d = m
    cdef int w = 1
    cdef int p, j
    cdef cnp.uint8_t* left
    while d >= 1 and (i >> (m - d)) & 1:
        _materialize_u8(bitsL, scratch, perm_b + d * L, act_b + d, offs, d, l, n)
        for p in range(l):
            left = bitsL + offs[d] + p * (n >> d)
            for j in range(w):
                beta2[p * n + 2 * j] = left[j] ^ beta[p * n + j]
                beta2[p * n + 2 * j + 1] = beta[p * n + j]
        w *= 2
        for p in range(l):
            memcpy(beta + p * n, beta2 + p * n, w)
        d -= 1
    if d == 0:
        for p in range(l):
            for j in range(w):
                c_out[f, p, j] = beta[p * n + j]
    else:
        act_b[d] = 0
        for p in range(l):
            memcpy(bitsL + offs[d] + p * (n >> d), beta + p * n, w)
