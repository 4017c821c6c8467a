"""Frame-exact equivalence between the pure decoder and the batch backends."""

import numpy as np
import pytest

from polarq import rngstream
from polarq.alphabet import L3, L3CC, L7, LInfMin, LInfTilde, LMsd, TAG_UNQ
from polarq.backends import get_backend, pykern, HAVE_COMPILED
from polarq.backends.kernelspec import build_spec
from polarq.density_evolution import cc_plausibility, epmu_tables
from polarq.polarcode import PolarCode
from polarq.quantization import MidTreadQuantizer
from polarq.sc import ScState
from polarq.scl import PmRule, scl_decode

BACKENDS = ["pykern"] + (["ckern"] if HAVE_COMPILED else [])


def make_cases(rng):
    """(name, code, algebra, pm_rule, label sampler, to_kernel_labels)."""
    code43 = PolarCode(3, (1, 3, 5, 6))
    code84 = PolarCode(4, (3, 5, 9, 10, 11, 12, 13, 15))
    q = MidTreadQuantizer(3, 1.0)
    tabs = epmu_tables(code43, 1.0, q)
    thr = cc_plausibility(code43, 1.0, q, tail=1e-4)
    cases = [
        (
            "l3-default",
            code84,
            L3(),
            PmRule(),
            lambda size: rng.integers(-1, 2, size),
            lambda lab: lab + 1,
        ),
        (
            "l7-default",
            code84,
            L7(delta=0.7),
            PmRule(),
            lambda size: rng.integers(-3, 4, size),
            lambda lab: lab + 3,
        ),
        (
            "linf-min",
            code84,
            LInfMin(),
            PmRule(),
            lambda size: np.round(rng.normal(0.5, 2.0, size), 3),
            lambda lab: lab,
        ),
        (
            "linf-tilde",
            code84,
            LInfTilde(),
            PmRule(),
            lambda size: np.round(rng.normal(0.5, 2.0, size), 3),
            lambda lab: lab,
        ),
        (
            "lmsd",
            code84,
            LMsd(2.0, 2.8),
            PmRule(),
            lambda size: np.round(rng.normal(1.0, 3.0, size), 3),
            lambda lab: lab,
        ),
        (
            "l3-epmu",
            code43,
            L3(),
            PmRule(kind="epmu", tables=tabs),
            lambda size: rng.integers(-1, 2, size),
            lambda lab: lab + 1,
        ),
        (
            "l3cc-epmucc",
            code43,
            L3CC(),
            PmRule(kind="epmucc", tables=tabs, thresholds=thr, penalty=5 * tabs.max_entry),
            lambda size: rng.integers(-1, 2, size),
            lambda lab: lab + 1,
        ),
    ]
    return cases


def pure_labels(algebra, raw):
    if isinstance(algebra, L3CC):
        return [(int(v), 0) for v in raw]
    if isinstance(algebra, LMsd):
        return [(float(v), TAG_UNQ) for v in raw]
    if isinstance(algebra, LInfTilde):
        from polarq.alphabet import coarse_round

        return [coarse_round(float(v)) for v in raw]
    if isinstance(algebra, (L3, L7)):
        return [int(v) for v in raw]
    return [float(v) for v in raw]


@pytest.mark.parametrize("backend_name", BACKENDS)
def test_batch_matches_pure_decoder(backend_name):
    rng = np.random.default_rng(42)
    backend = get_backend(backend_name)
    master_seed = 777
    for name, code, algebra, rule, sampler, to_kernel in make_cases(rng):
        for L in (1, 2, 3, 4):
            F = 6
            raw = sampler((F, code.n))
            if isinstance(algebra, LInfTilde):
                from polarq.alphabet import coarse_round

                raw = coarse_round(raw)
            spec = build_spec(code, algebra, rule)
            keys = rngstream.frame_keys(master_seed, np.arange(F))
            u, c, pms = backend.scl_batch(spec, to_kernel(raw), keys, L)
            for f in range(F):
                stream = rngstream.FrameStream(master_seed, f, code.n, L)
                out = scl_decode(
                    code, pure_labels(algebra, raw[f]), algebra, L, rule, stream
                )
                n_out = len(out.paths)
                assert u.shape[1] == n_out, (name, L)
                got_u = [list(row) for row in u[f]]
                want_u = [p.u_hat for p in out.paths]
                assert got_u == want_u, (name, L, f)
                assert np.allclose(pms[f], out.pms, atol=1e-12), (name, L, f)
                want_c = [p.c_hat for p in out.paths]
                assert [list(row) for row in c[f]] == want_c, (name, L, f)


@pytest.mark.parametrize("backend_name", BACKENDS)
def test_genie_matches_pure_state(backend_name):
    rng = np.random.default_rng(7)
    backend = get_backend(backend_name)
    code = PolarCode(4, (3, 5, 9, 10, 11, 12, 13, 15))
    for algebra, sampler, to_kernel in [
        (L3(), lambda s: rng.integers(-1, 2, s), lambda lab: lab + 1),
        (LInfMin(), lambda s: np.round(rng.normal(0.3, 1.5, s), 3), lambda lab: lab),
    ]:
        F = 5
        raw = sampler((F, code.n))
        true_u = rng.integers(0, 2, (F, code.n)).astype(np.uint8)
        spec = build_spec(code, algebra, PmRule())
        lam, _ = backend.genie_llrs(spec, to_kernel(raw), true_u)
        for f in range(F):
            state = ScState(code.m, pure_labels(algebra, raw[f]), algebra)
            for i in range(code.n):
                want = state.compute_llr(i)
                got = int(lam[f, i]) - 1 if isinstance(algebra, L3) else float(lam[f, i])
                assert got == pytest.approx(want, abs=1e-12), (algebra.name, f, i)
                state.push_bit(i, int(true_u[f, i]))


def test_l3cc_counts_match_label_counts():
    """Per-layer kernel counters equal the counts carried inside L3CC labels."""
    rng = np.random.default_rng(3)
    code = PolarCode(4, (3, 5, 9, 10, 11, 12, 13, 15))
    alg = L3CC()
    F = 8
    raw = rng.integers(-1, 2, (F, code.n))
    true_u = rng.integers(0, 2, (F, code.n)).astype(np.uint8)
    spec = build_spec(code, alg, PmRule())
    lam_idx, counts = pykern.genie_llrs(spec, raw + 1, true_u)
    for f in range(F):
        state = ScState(code.m, [(int(v), 0) for v in raw[f]], alg)
        for i in range(code.n):
            l3, cnt = state.compute_llr(i)
            assert counts[f, i] == cnt, (f, i)
            assert int(lam_idx[f, i]) - 1 == l3
            state.push_bit(i, int(true_u[f, i]))


def test_batch_independent_of_batch_split():
    """Counter-mode streams: one batch of 8 equals two batches of 4."""
    code = PolarCode(3, (3, 5, 6, 7))
    spec = build_spec(code, L3(), PmRule())
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, (8, code.n))
    keys = rngstream.frame_keys(5, np.arange(8))
    u_all, c_all, pm_all = pykern.scl_batch(spec, labels, keys, 2)
    u_a, c_a, pm_a = pykern.scl_batch(spec, labels[:4], keys[:4], 2)
    u_b, c_b, pm_b = pykern.scl_batch(spec, labels[4:], keys[4:], 2)
    assert np.array_equal(u_all, np.concatenate([u_a, u_b]))
    assert np.allclose(pm_all, np.concatenate([pm_a, pm_b]))
