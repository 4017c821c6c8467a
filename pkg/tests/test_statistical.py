"""Statistical cross-checks: simulation against density evolution.

These run a few seconds to a couple of minutes each; seeds are pinned so the
suite is deterministic.
"""

import numpy as np
import pytest

from polarq import rngstream
from polarq.alphabet import (
    L3,
    L3CC,
    L7,
    Coupled,
    LInfMin,
    LInfTilde,
    coarse_round,
    pm_increment_piecewise,
)
from polarq.backends import get_backend, pykern
from polarq.backends.kernelspec import build_spec
from polarq.channel import ebn0_to_sigma2, qbiawgn_law
from polarq.density_evolution import (
    cc_plausibility,
    de_profile,
    epmu_tables,
    symmetrize,
    union_bound,
)
from polarq.design import design_de
from polarq.montecarlo import SimPoint, Termination, run_point, wilson_ci
from polarq.polarcode import PolarCode, polar_transform
from polarq.quantization import MidTreadQuantizer, threshold_cap
from polarq.scl import PmRule


def q3_setup(m, ebn0_db, rate=0.5):
    sigma2 = ebn0_to_sigma2(ebn0_db, rate)
    delta = threshold_cap(3, sigma2)
    law = qbiawgn_law(3, delta, sigma2)
    alg = L3()
    code = PolarCode(m, design_de(alg.channel_dist(law), alg, m, int(rate * (1 << m))))
    return code, sigma2, delta, law


def genie_frames(spec, code, sigma2, frames, seed, labeler):
    """Batched genie pass over random messages; returns per-bit labels."""
    out_lam = []
    batch = 20000
    done = 0
    while done < frames:
        cnt = min(batch, frames - done)
        keys = rngstream.frame_keys(seed, np.arange(done, done + cnt, dtype=np.uint64))
        bits = rngstream.message_bits(keys, np.arange(code.k))
        u = np.zeros((cnt, code.n), dtype=np.uint8)
        u[:, list(code.info_set)] = bits
        c = polar_transform(code.m, u)
        noise = rngstream.gaussian_noise(keys, code.n)
        y = (1.0 - 2.0 * c.astype(float)) + np.sqrt(sigma2) * noise
        labels = labeler(2.0 * y / sigma2)
        lam, counts = pykern.genie_llrs(spec, labels, u)
        out_lam.append((lam, counts, u))
        done += cnt
    return out_lam


class TestGenieMatchesDe:
    @pytest.mark.parametrize(
        "alg_name",
        ["l3", "l7", "linf-tilde"],
    )
    def test_per_bit_error_rates(self, alg_name):
        """Empirical genie per-bit error rates sit in Wilson bands around DE."""
        m, ebn0 = 6, 2.5
        sigma2 = ebn0_to_sigma2(ebn0, 0.5)
        if alg_name == "l3":
            delta = threshold_cap(3, sigma2)
            law = qbiawgn_law(3, delta, sigma2)
            alg = L3()
            labeler = lambda lam: (
                MidTreadQuantizer(3, delta).quantize(lam) + 1
            ).astype(np.int64)
        elif alg_name == "l7":
            delta = threshold_cap(7, sigma2)
            law = qbiawgn_law(7, delta, sigma2)
            alg = L7(delta)
            labeler = lambda lam: (
                MidTreadQuantizer(7, delta).quantize(lam) + 3
            ).astype(np.int64)
        else:
            alg = LInfTilde()
            labeler = coarse_round
        code = PolarCode(m, tuple(range(1 << m)))  # all bits observed
        if alg_name == "linf-tilde":
            from polarq.density_evolution import discretize_gaussian_llr

            chan = discretize_gaussian_llr(sigma2)
        else:
            chan = alg.channel_dist(law)
        profile = de_profile(chan, code, alg)
        spec = build_spec(code, alg, PmRule())

        frames = 200000
        err = np.zeros(code.n)
        for lam, _, u in genie_frames(spec, code, sigma2, frames, 13, labeler):
            # resolve the genie labels back to signed values
            if alg_name == "l3":
                val = lam.astype(np.int64) - 1
            elif alg_name == "l7":
                val = lam.astype(np.int64) - 3
            else:
                val = lam
            sign = np.sign(val)
            flip = 1.0 - 2.0 * u.astype(float)  # +1 for u=0, -1 for u=1
            wrong = (sign * flip) < 0
            half = sign == 0
            err += wrong.sum(axis=0) + 0.5 * half.sum(axis=0)
        emp = err / frames
        misses = 0
        for i in range(code.n):
            lo, hi = wilson_ci(int(round(err[i])), frames, z=3.29)  # 99.9% band
            if not lo <= profile.error_probs[i] <= hi:
                misses += 1
        assert misses == 0, f"{alg_name}: {misses} bits outside 99.9% bands"

    def test_union_bound_covers_genie_fer(self):
        code, sigma2, delta, law = q3_setup(6, 3.0)
        alg = L3()
        profile = de_profile(alg.channel_dist(law), code, alg)
        bound = union_bound(code, profile)[0]
        pt = SimPoint(
            code=code,
            ebn0_db=3.0,
            channel={"kind": "q-biawgn", "levels": 3, "delta_rule": "cap"},
            algebra="l3",
            master_seed=5,
        )
        est = run_point(pt, Termination(rel_ci=0.1, frame_cap=10**6))
        assert bound >= est.ci("pm")[0]


class TestExactVsMinsum:
    @pytest.mark.slow
    def test_fer_difference_insignificant(self):
        """Exact vs min-approximate check node: A/B FER gap within noise."""
        rng = np.random.default_rng(0)
        m = 6
        code = PolarCode(m, design_de(
            __import__("polarq.density_evolution", fromlist=["DiscreteDist"]).DiscreteDist.from_scalars(
                {1.0: 1 - 3 / 8, 0.0: 3 / 8}
            ),
            L3(), m, 32,
        ))
        frames = 100000
        ebn0 = 3.4
        errs = {}
        for name in ("linf", "linf-min"):
            pt = SimPoint(
                code=code, ebn0_db=ebn0, channel={"kind": "biawgn"}, algebra=name,
                list_size=1, master_seed=99,
            )
            stop = Termination(rel_ci=1e-9, frame_cap=frames, min_errors=10**9,
                               abandon_below=None)
            est = run_point(pt, stop, backend="py")
            errs[name] = est.errors["pm"]
        p1, p2 = errs["linf"] / frames, errs["linf-min"] / frames
        se = np.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / frames)
        assert abs(p1 - p2) <= 1.96 * se + 1e-12, (p1, p2)


class TestEpmuOracle:
    @pytest.mark.slow
    def test_tables_match_coupled_simulation(self):
        """DE conditional means vs a 1e6-frame coupled super-decoder run."""
        m, ebn0 = 5, 2.5
        sigma2 = ebn0_to_sigma2(ebn0, 0.5)
        delta = threshold_cap(3, sigma2)
        quant = MidTreadQuantizer(3, delta)
        law = qbiawgn_law(3, delta, sigma2)
        alg = L3()
        code = PolarCode(m, design_de(alg.channel_dist(law), alg, m, 16))
        tabs = epmu_tables(code, sigma2, quant)

        spec_q = build_spec(code, L3(), PmRule())
        spec_f = build_spec(code, LInfTilde(), PmRule())
        frames = 10**6
        sums = np.zeros((code.n, 3, 2))
        hits = np.zeros((code.n, 3))
        batch = 25000
        done = 0
        while done < frames:
            cnt = min(batch, frames - done)
            keys = rngstream.frame_keys(77, np.arange(done, done + cnt, dtype=np.uint64))
            bits = rngstream.message_bits(keys, np.arange(code.k))
            u = np.zeros((cnt, code.n), dtype=np.uint8)
            u[:, list(code.info_set)] = bits
            c = polar_transform(code.m, u)
            noise = rngstream.gaussian_noise(keys, code.n)
            y = (1.0 - 2.0 * c.astype(float)) + np.sqrt(sigma2) * noise
            lam = 2.0 * y / sigma2
            # the super-decoder under analysis drives both components from the
            # fine-discretized LLR (cells are assigned to one quantizer label
            # wholesale), so the oracle replicates that coupling; the channel
            # discretization itself is validated against the analytic law in
            # test_density_evolution
            fine = coarse_round(lam)
            ql, _ = pykern.genie_llrs(spec_q, (quant.quantize(fine) + 1).astype(np.int64), u)
            fl, _ = pykern.genie_llrs(spec_f, fine, u)
            q = ql.astype(np.int64) - 1
            for qi, qv in enumerate((-1, 0, 1)):
                mask = q == qv
                hits[:, qi] += mask.sum(axis=0)
                for uu in (0, 1):
                    inc = pm_increment_piecewise(fl, uu)
                    sums[:, qi, uu] += np.where(mask, inc, 0.0).sum(axis=0)
            done += cnt

        checked = 0
        for i in range(code.n):
            for qi in range(3):
                if hits[i, qi] / frames < 5e-3 or not tabs.present[i, qi]:
                    continue  # too little conditioning mass for a 2% comparison
                for uu in (0, 1):
                    mc = sums[i, qi, uu] / hits[i, qi]
                    de = tabs.inc[i, qi, uu]
                    assert mc == pytest.approx(de, rel=0.02, abs=0.01), (i, qi, uu)
                    checked += 1
        assert checked > 50  # the comparison actually covered a broad set


class TestCcThresholds:
    @pytest.mark.slow
    def test_thresholds_match_genie_count_tails(self):
        """Correct-path count tails: below threshold-tail, above at t-1."""
        m, ebn0 = 5, 2.0
        sigma2 = ebn0_to_sigma2(ebn0, 0.5)
        delta = threshold_cap(3, sigma2)
        quant = MidTreadQuantizer(3, delta)
        law = qbiawgn_law(3, delta, sigma2)
        alg = L3()
        code = PolarCode(m, design_de(alg.channel_dist(law), alg, m, 16))
        tail = 1e-3  # sharper tail than the 1e-6 default: statistical power
        thr = cc_plausibility(code, sigma2, quant, tail=tail)

        spec = build_spec(code, L3CC(), PmRule())
        frames = 4 * 10**5
        above_t = np.zeros(code.n)
        above_tm1 = np.zeros(code.n)
        done = 0
        while done < frames:
            cnt = min(25000, frames - done)
            keys = rngstream.frame_keys(55, np.arange(done, done + cnt, dtype=np.uint64))
            bits = rngstream.message_bits(keys, np.arange(code.k))
            u = np.zeros((cnt, code.n), dtype=np.uint8)
            u[:, list(code.info_set)] = bits
            c = polar_transform(code.m, u)
            noise = rngstream.gaussian_noise(keys, code.n)
            y = (1.0 - 2.0 * c.astype(float)) + np.sqrt(sigma2) * noise
            labels = (quant.quantize(2.0 * y / sigma2) + 1).astype(np.int64)
            _, counts = pykern.genie_llrs(spec, labels, u)
            above_t += (counts > thr[None, :]).sum(axis=0)
            above_tm1 += (counts > (thr[None, :] - 1)).sum(axis=0)
            done += cnt

        for i in range(code.n):
            # P(C > t) < tail: empirical rate must not significantly exceed it
            lo, _ = wilson_ci(int(above_t[i]), frames, z=3.29)
            assert lo <= tail, (i, above_t[i])
            if thr[i] > 0:
                # minimality: P(C > t-1) >= tail
                _, hi = wilson_ci(int(above_tm1[i]), frames, z=3.29)
                assert hi >= tail, (i, above_tm1[i])
