import numpy as np
import pytest

from polarq.montecarlo import (
    FerEstimate,
    SimPoint,
    Termination,
    min_errors_for_rel_ci,
    run_point,
    wald_ci,
    wilson_ci,
    wilson_halfwidth,
)
from polarq.polarcode import PolarCode
from polarq.design import design_de
from polarq.alphabet import L3
from polarq.channel import qbiawgn_law, ebn0_to_sigma2
from polarq.quantization import threshold_cap


class TestWaldCi:
    def test_zero_errors_degenerate(self):
        lo, hi = wald_ci(0, 1000)
        assert lo == 0.0 and hi == 0.0  # zero width: the Wald weakness

    def test_worked_value(self):
        lo, hi = wald_ci(50, 100, 1.96)
        assert (hi - lo) / 2 == pytest.approx(0.098, abs=1e-3)
        assert (lo + hi) / 2 == pytest.approx(0.5)

    def test_halfwidth_scales_inverse_sqrt(self):
        w1 = wald_ci(100, 1000)[1] - wald_ci(100, 1000)[0]
        w2 = wald_ci(400, 4000)[1] - wald_ci(400, 4000)[0]
        assert w1 / w2 == pytest.approx(2.0, rel=1e-6)


class TestWilsonCi:
    def test_worked_value(self):
        lo, hi = wilson_ci(10, 1000, 1.96)
        assert hi - 0.01 == pytest.approx(0.006434, abs=2e-6)
        assert 0.01 - lo == pytest.approx(0.006434, abs=2e-6)

    def test_zero_errors_positive_width(self):
        n, z = 500, 1.96
        lo, hi = wilson_ci(0, n, z)
        assert lo == 0.0
        assert hi == pytest.approx(z * (z / 2) / (n + z * z), rel=1e-9)

    def test_always_positive_halfwidth(self):
        for n_err in (0, 1, 250, 499, 500):
            assert wilson_halfwidth(n_err, 500) > 0

    def test_contains_point_estimate(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 10000))
            k = int(rng.integers(0, n + 1))
            lo, hi = wilson_ci(k, n)
            assert lo <= k / n <= hi


class TestMinErrorsTable:
    # the full tabulated grid: rows pe = 1e-3, 1e-5, 1e-7, 1e-9
    TABLE = {
        0.20: [97, 97, 97, 97],
        0.10: [385, 386, 386, 386],
        0.05: [1537, 1538, 1538, 1538],
        0.03: [4266, 4270, 4270, 4270],
        0.01: [38379, 38417, 38417, 38417],
    }

    @pytest.mark.parametrize("rel", [0.20, 0.10, 0.05, 0.03, 0.01])
    def test_reproduces_all_cells(self, rel):
        for pe, want in zip([1e-3, 1e-5, 1e-7, 1e-9], self.TABLE[rel]):
            assert min_errors_for_rel_ci(rel, pe) == want, (rel, pe)

    def test_domain(self):
        with pytest.raises(ValueError):
            min_errors_for_rel_ci(0.0, 1e-3)


def q3_point(ebn0_db, seed=1, L=1, algebra="l3", n=8):
    code = PolarCode(3, (3, 5, 6, 7)) if n == 8 else None
    return SimPoint(
        code=code,
        ebn0_db=ebn0_db,
        channel={"kind": "q-biawgn", "levels": 3, "delta_rule": "cap"},
        algebra=algebra,
        list_size=L,
        master_seed=seed,
    )


class TestRunPoint:
    def test_noiseless_zero_errors(self):
        pt = SimPoint(
            code=PolarCode(3, (3, 5, 6, 7)),
            ebn0_db=40.0,
            channel={"kind": "biawgn"},
            algebra="linf-min",
            list_size=1,
            master_seed=3,
        )
        est = run_point(pt, Termination(frame_cap=2000, abandon_below=None))
        assert est.stopped_by == "frame_cap"
        assert all(v == 0 for v in est.errors.values())

    def test_event_ordering(self):
        est = run_point(q3_point(3.0, L=4), Termination(rel_ci=0.2, frame_cap=200000))
        assert est.errors["list"] <= est.errors["lml"] <= est.errors["pm"]
        assert est.errors["mllb"] <= est.errors["lml"]

    def test_reproducible_across_batch_sizes(self):
        stop = Termination(rel_ci=0.5, frame_cap=4096, min_errors=10**9)
        a = run_point(q3_point(2.0), stop, batch_size=512)
        b = run_point(q3_point(2.0), stop, batch_size=1024)
        assert a.frames == b.frames == 4096
        assert a.errors == b.errors

    def test_reproducible_across_workers(self):
        stop = Termination(rel_ci=0.5, frame_cap=4096, min_errors=10**9)
        a = run_point(q3_point(2.0), stop, workers=1, batch_size=512)
        b = run_point(q3_point(2.0), stop, workers=2, batch_size=512)
        assert a.errors == b.errors

    def test_backends_agree_on_counts(self):
        stop = Termination(rel_ci=0.5, frame_cap=2048, min_errors=10**9)
        a = run_point(q3_point(2.0, L=2), stop, backend="py")
        b = run_point(q3_point(2.0, L=2), stop)
        assert a.errors == b.errors

    def test_sc_equals_scl1(self):
        stop = Termination(rel_ci=0.5, frame_cap=2048, min_errors=10**9)
        est = run_point(q3_point(2.0, L=1), stop)
        est2 = run_point(q3_point(2.0, L=1), stop)
        assert est.errors == est2.errors

    def test_ci_termination(self):
        est = run_point(q3_point(1.0), Termination(rel_ci=0.25, frame_cap=10**6))
        assert est.stopped_by == "ci_met"
        assert est.rel_halfwidth("pm") <= 0.25

    def test_estimate_merge(self):
        a = FerEstimate(frames=10, errors={"pm": 1, "list": 0, "lml": 1, "mllb": 0})
        b = FerEstimate(frames=20, errors={"pm": 2, "list": 1, "lml": 1, "mllb": 1})
        m = a.merge(b)
        assert m.frames == 30 and m.errors["pm"] == 3

    def test_genie_fer_matches_de_prediction(self):
        # SC FER at a moderate point vs the DE union bound sanity: bound >= FER
        from polarq.density_evolution import de_profile, union_bound

        ebn0 = 3.0
        pt = q3_point(ebn0, L=1)
        est = run_point(pt, Termination(rel_ci=0.15, frame_cap=10**6))
        code = pt.code
        sigma2 = ebn0_to_sigma2(ebn0, code.rate)
        delta = threshold_cap(3, sigma2)
        law = qbiawgn_law(3, delta, sigma2)
        alg = L3()
        bound = union_bound(code, de_profile(alg.channel_dist(law), code, alg))[0]
        lo, hi = est.ci("pm")
        assert bound >= lo
