"""Seeded Monte-Carlo FER estimation with Wilson-interval termination.

Frames are generated and decoded in batches; every random quantity is a pure
function of (master seed, frame index), so estimates are bit-identical for
any batch size or worker count.  Each decoded frame is scored for all event
types at once: metric-selected winner wrong (pm), true codeword absent from
the list (list), likelihood-selected winner wrong (lml), and the
maximum-likelihood lower-bound event (mllb).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import rngstream
from .alphabet import L3, L3CC, L7, LInfTilde, LMsd, coarse_round, make_algebra
from .backends import get_backend
from .backends.kernelspec import KIND_TABLE, build_spec
from .channel import ebn0_to_sigma2, qbiawgn_law
from .polarcode import PolarCode, polar_transform
from .quantization import MidTreadQuantizer, threshold_cap, threshold_de, threshold_fbl
from .scl import PmRule

EVENTS = ("pm", "list", "lml", "mllb")


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------

def wald_ci(n_err: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wald interval, clamped to [0, 1]; degenerates to zero width at 0 errors."""
    if n < 1:
        raise ValueError("need at least one trial")
    p = n_err / n
    half = (z / n) * np.sqrt(n_err * (n - n_err) / n)
    return max(p - half, 0.0), min(p + half, 1.0)


def wilson_halfwidth(n_err: int, n: int, z: float = 1.96) -> float:
    return (z / (n + z * z)) * np.sqrt(n_err * (n - n_err) / n + z * z / 4.0)


def wilson_ci(n_err: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval around the naive estimator, clamped to [0, 1]."""
    if n < 1:
        raise ValueError("need at least one trial")
    p = n_err / n
    half = wilson_halfwidth(n_err, n, z)
    return max(p - half, 0.0), min(p + half, 1.0)


def min_errors_for_rel_ci(rel_target: float, pe: float, z: float = 1.96) -> int:
    """Smallest error count whose relative Wilson half-width meets the target.

    The trial count is tied to the error count through N = N_err / pe, which
    makes the answer nearly independent of pe.
    """
    if not 0.0 < rel_target < 1.0 or not 0.0 < pe < 1.0:
        raise ValueError("rel_target and pe must be in (0, 1)")
    n_err = 1
    while True:
        n = n_err / pe
        rel = wilson_halfwidth(n_err, n, z) / (n_err / n)
        if rel <= rel_target:
            return n_err
        n_err += 1
        if n_err > 10**7:
            raise RuntimeError("relative-CI target unreachable")


# ---------------------------------------------------------------------------
# simulation points
# ---------------------------------------------------------------------------

@dataclass
class SimPoint:
    """One simulated operating point.

    channel: {"kind": "biawgn"} or {"kind": "q-biawgn", "levels": N,
    "delta_rule": "cap" | "de" | "fbl" | <float>}.  algebra ids follow the
    config names; lmsd takes delta_cn/delta_vn through algebra_params.
    """

    code: PolarCode
    ebn0_db: float
    channel: dict
    algebra: str
    list_size: int = 1
    pm_rule: str = "default"
    algebra_params: dict = field(default_factory=dict)
    master_seed: int = 0

    def sigma2(self) -> float:
        return ebn0_to_sigma2(self.ebn0_db, self.code.rate)


@dataclass
class FerEstimate:
    """Counters per event type plus the confidence machinery."""

    frames: int = 0
    errors: dict = field(default_factory=lambda: {e: 0 for e in EVENTS})
    z: float = 1.96
    stopped_by: str = "none"

    def fer(self, event: str = "pm") -> float:
        return self.errors[event] / self.frames if self.frames else 0.0

    def ci(self, event: str = "pm") -> tuple[float, float]:
        return wilson_ci(self.errors[event], max(self.frames, 1), self.z)

    def rel_halfwidth(self, event: str = "pm") -> float:
        if self.errors[event] == 0:
            return np.inf
        return wilson_halfwidth(self.errors[event], self.frames, self.z) / self.fer(event)

    def merge(self, other: "FerEstimate") -> "FerEstimate":
        out = FerEstimate(z=self.z)
        out.frames = self.frames + other.frames
        out.errors = {e: self.errors[e] + other.errors[e] for e in EVENTS}
        return out


@dataclass
class Termination:
    primary: str = "pm"
    rel_ci: float = 0.1
    frame_cap: int = 10**8
    abandon_below: float | None = 1e-7
    min_errors: int = 8
    decide_vs: float | None = None  # stop once the CI excludes this rate


class ResolvedPoint:
    """SimPoint with channel law, algebra, kernel spec, and backend bound."""

    def __init__(self, point: SimPoint, backend: str | None = None):
        self.point = point
        code = point.code
        self.sigma2 = point.sigma2()
        kind = point.channel.get("kind", "biawgn")
        self.law = None
        self.quantizer = None
        if kind == "q-biawgn":
            levels = int(point.channel["levels"])
            rule = point.channel.get("delta_rule", "cap")
            if isinstance(rule, (int, float)):
                delta = float(rule)
            elif rule == "cap":
                delta = threshold_cap(levels, self.sigma2)
            elif rule == "fbl":
                delta = threshold_fbl(
                    levels, self.sigma2, code.n, point.channel.get("peb", 1e-3)
                )
            elif rule == "de":
                # the DE objective runs with the decoding algebra that
                # motivates the threshold; a shared channel may pin it
                # explicitly (e.g. the 7-level decoder's threshold reused for
                # an unquantized baseline over the same channel).  Real-label
                # algebras fall back to their discrete coarse-float twin.
                de_alg_name = point.channel.get("de_algebra", point.algebra)
                if de_alg_name in ("linf", "linf-min"):
                    de_alg_name = "linf-tilde"
                key = (code.m, code.info_set, levels, round(self.sigma2, 12), de_alg_name)
                if key not in _DELTA_DE_CACHE:
                    params = {"delta": 1.0} if de_alg_name == "l7" else {}
                    alg = make_algebra(de_alg_name, **params)
                    _DELTA_DE_CACHE[key] = threshold_de(levels, self.sigma2, code, alg)
                delta = _DELTA_DE_CACHE[key]
            else:
                raise ValueError(f"unknown delta rule {rule!r}")
            self.delta = delta
            self.quantizer = MidTreadQuantizer(levels, delta)
            self.law = qbiawgn_law(levels, delta, self.sigma2)
        elif kind != "biawgn":
            raise ValueError(f"unknown channel kind {kind!r}")
        self.algebra = self._make_algebra(point, delta_hint=getattr(self, "delta", None))
        self._check_pairing(kind)
        self.rule = self._make_rule(point)
        self.spec = build_spec(code, self.algebra, self.rule)
        self.backend = get_backend(backend, spec=self.spec)

    def _make_algebra(self, point: SimPoint, delta_hint):
        name = point.algebra
        params = dict(point.algebra_params)
        if name == "l7" and "delta" not in params:
            params["delta"] = delta_hint
        return make_algebra(name, **params)

    def _check_pairing(self, kind: str):
        alg = self.algebra
        if isinstance(alg, (L3, L3CC)) and (self.law is None or len(self.law.labels) != 3):
            raise ValueError("3-level algebra needs the 3-level quantized channel")
        if isinstance(alg, L7) and (self.law is None or len(self.law.labels) != 7):
            raise ValueError("7-level algebra needs the 7-level quantized channel")
        if isinstance(alg, LMsd) and kind != "biawgn":
            raise ValueError("mixed-stage decoding runs on the unquantized channel")

    def _make_rule(self, point: SimPoint) -> PmRule:
        kind = point.pm_rule
        if kind == "default":
            return PmRule()
        from .density_evolution import cc_plausibility, epmu_tables

        if self.quantizer is None or self.quantizer.levels != 3:
            raise ValueError("expected-increment rules pair with the 3-level channel")
        tables = _cached_epmu(point.code, self.sigma2, self.quantizer)
        if kind == "epmu":
            return PmRule(kind="epmu", tables=tables)
        if kind == "epmucc":
            thr = _cached_ccthr(point.code, self.sigma2, self.quantizer)
            return PmRule(
                kind="epmucc", tables=tables, thresholds=thr, penalty=5.0 * tables.max_entry
            )
        raise ValueError(f"unknown pm rule {kind!r}")

    # -- frame generation --------------------------------------------------
    def gen_frames(self, frame_indices: np.ndarray):
        """Returns (keys, true_u, true_c, decoder_labels, loglik_weights)."""
        point = self.point
        code = point.code
        n = code.n
        keys = rngstream.frame_keys(point.master_seed, frame_indices)
        bits = rngstream.message_bits(keys, np.arange(code.k))
        u = np.zeros((len(keys), n), dtype=np.uint8)
        u[:, list(code.info_set)] = bits
        c = polar_transform(code.m, u)
        noise = rngstream.gaussian_noise(keys, n)
        y = (1.0 - 2.0 * c.astype(float)) + np.sqrt(self.sigma2) * noise
        lam = 2.0 * y / self.sigma2

        if self.law is None:
            # per-symbol loglik difference (bit 1 minus bit 0) is -2y/sigma2
            llw = -lam
            labels = coarse_round(lam) if isinstance(self.algebra, LInfTilde) else lam
            return keys, u, c, labels, llw

        # quantized channel: labels are quantizer outputs of the LLR
        q = self.quantizer.quantize(lam)
        idx = (q + self.quantizer.half).astype(np.int64)
        lp0, lp1 = self.law.log_probs()
        # clip impossible labels to a huge-but-finite penalty so that the
        # likelihood sums stay NaN-free; ordering is unaffected
        lp0 = np.maximum(lp0, -1e30)
        lp1 = np.maximum(lp1, -1e30)
        llw = lp1[idx] - lp0[idx]
        if self.spec.kind == KIND_TABLE:
            labels = idx
        else:
            labels = self.law.label_llrs()[idx]
        return keys, u, c, labels, llw


def _evaluate_batch(rp: ResolvedPoint, frame_indices: np.ndarray) -> dict:
    """Decode one batch and count all frame-error event types."""
    keys, u, c, labels, llw = rp.gen_frames(frame_indices)
    L = rp.point.list_size
    u_hats, c_hats, pms = rp.backend.scl_batch(rp.spec, labels, keys, L)
    F, l_out, n = u_hats.shape

    correct = np.all(u_hats == u[:, None, :], axis=2)  # (F, l)
    in_list = correct.any(axis=1)

    sel_base = rngstream.selection_base(n, L)
    # metric winner: list is metric-sorted, ties are the leading block
    tie_count = (pms == pms[:, :1]).sum(axis=1)
    pm_draw = rngstream.u64(keys, np.uint64(sel_base + rngstream.SEL_PM_TIE))
    pm_pick = (pm_draw % tie_count.astype(np.uint64)).astype(np.int64)
    pm_ok = np.take_along_axis(correct, pm_pick[:, None], axis=1)[:, 0]

    # log-likelihoods: sum_j llw_j over positions where the codeword has a 1,
    # an affine transform of the true loglik shared by all candidates
    ll = np.matmul(c_hats.astype(np.float64), llw[:, :, None])[:, :, 0]
    ll_true = np.einsum("fn,fn->f", c.astype(np.float64), llw)

    best = ll.max(axis=1)
    is_best = ll == best[:, None]
    ml_order = np.argsort(~is_best, axis=1, kind="stable")
    ml_draw = rngstream.u64(keys, np.uint64(sel_base + rngstream.SEL_ML_TIE))
    ml_pick = (ml_draw % is_best.sum(axis=1).astype(np.uint64)).astype(np.int64)
    ml_idx = np.take_along_axis(ml_order, ml_pick[:, None], axis=1)
    lml_ok = np.take_along_axis(correct, ml_idx, axis=1)[:, 0]

    wrong_ll = np.where(correct, -np.inf, ll)
    best_wrong = wrong_ll.max(axis=1)
    coin = rngstream.bits(keys, np.uint64(sel_base + rngstream.SEL_MLLB_COIN)).astype(bool)
    mllb = (best_wrong > ll_true) | ((best_wrong == ll_true) & coin)

    return {
        "frames": F,
        "pm": int((~pm_ok).sum()),
        "list": int((~in_list).sum()),
        "lml": int((~lml_ok).sum()),
        "mllb": int(mllb.sum()),
    }


_RP_CACHE: dict = {}


def _batch_worker(args):
    point, backend, start, count = args
    key = (repr(point), backend)
    if key not in _RP_CACHE:
        _RP_CACHE[key] = ResolvedPoint(point, backend)
    return _evaluate_batch(_RP_CACHE[key], np.arange(start, start + count, dtype=np.uint64))


def default_batch_size(point: SimPoint) -> int:
    per_frame = max(point.list_size, 1) * point.code.n
    return int(np.clip(2**21 // per_frame, 128, 8192))


def run_point(
    point: SimPoint,
    stop: Termination | None = None,
    workers: int | None = None,
    backend: str | None = None,
    batch_size: int | None = None,
) -> FerEstimate:
    """Estimate all FER event types for one point until the CI target is met.

    Termination checks happen on merged counts at batch boundaries; the
    primary event must collect ``stop.min_errors`` before a CI stop.
    """
    stop = stop or Termination()
    workers = workers or int(os.environ.get("POLARQ_WORKERS", "1"))
    rp = ResolvedPoint(point, backend)
    bsz = batch_size or default_batch_size(point)
    est = FerEstimate()

    pool = None
    if workers > 1:
        import multiprocessing as mp

        pool = mp.get_context("fork").Pool(workers)
    try:
        next_frame = 0
        while True:
            todo = min(bsz * max(workers, 1), stop.frame_cap - next_frame)
            if todo <= 0:
                est.stopped_by = "frame_cap"
                break
            jobs = []
            off = next_frame
            while todo > 0:
                cnt = min(bsz, todo)
                jobs.append((point, backend, off, cnt))
                off += cnt
                todo -= cnt
            if pool is None:
                results = [_evaluate_batch(rp, np.arange(s, s + c, dtype=np.uint64)) for _, _, s, c in jobs]
            else:
                results = pool.map(_batch_worker, jobs)
            for r in results:
                est.frames += r["frames"]
                for e in EVENTS:
                    est.errors[e] += r[e]
            next_frame = off

            n_err = est.errors[stop.primary]
            if n_err >= stop.min_errors and est.rel_halfwidth(stop.primary) <= stop.rel_ci:
                est.stopped_by = "ci_met"
                break
            if stop.decide_vs is not None:
                lo, hi = est.ci(stop.primary)
                if hi < stop.decide_vs or lo > stop.decide_vs:
                    est.stopped_by = "decided"
                    break
            if (
                stop.abandon_below is not None
                and est.frames >= 10 * bsz
                and est.ci(stop.primary)[1] < stop.abandon_below
            ):
                est.stopped_by = "abandoned"
                break
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return est


# ---------------------------------------------------------------------------
# FER-curve crossing search (log-linear interpolation between points)
# ---------------------------------------------------------------------------

def ebn0_at_fer(
    make_point,
    event: str = "pm",
    target: float = 1e-3,
    start_db: float = 2.0,
    step_db: float = 0.5,
    rel_ci: float = 0.1,
    scan_errors: int = 60,
    workers: int | None = None,
    frame_cap: int = 4 * 10**6,
    verbose: bool = False,
) -> tuple[float, list]:
    """Eb/N0 where the FER curve crosses ``target``.

    ``make_point(ebn0_db)`` builds the SimPoint.  A coarse scan with a loose
    error budget brackets the crossing, the two bracketing points are then
    refined to the requested relative CI, and the crossing is read off by
    log-linear interpolation.
    """

    def measure(db, errors_goal, rel, decide=None):
        stop = Termination(
            primary=event,
            rel_ci=rel,
            frame_cap=frame_cap,
            min_errors=max(errors_goal, 8),
            decide_vs=decide,
        )
        est = run_point(make_point(db), stop, workers=workers)
        fer = est.fer(event) if est.errors[event] else 0.5 / max(est.frames, 1)
        if verbose:
            print(
                f"    scan {db:+.3f} dB: {event}-FER {fer:.3e} "
                f"({est.errors[event]}/{est.frames}, {est.stopped_by})",
                flush=True,
            )
        return fer

    scan_rel = 1.96 / np.sqrt(scan_errors)

    history = []
    db = start_db
    fer = measure(db, scan_errors, scan_rel, decide=target)
    history.append((db, fer))
    direction = 1.0 if fer > target else -1.0
    for _ in range(40):
        db2 = db + direction * step_db
        fer2 = measure(db2, scan_errors, scan_rel, decide=target)
        history.append((db2, fer2))
        if (fer2 > target) != (fer > target):
            break
        db, fer = db2, fer2
    else:
        raise RuntimeError("failed to bracket the FER target")

    lo_db, hi_db = (db, db2) if db < db2 else (db2, db)
    # bisect the bracket at scan precision to cut the refine cost
    while hi_db - lo_db > 0.26:
        mid = 0.5 * (lo_db + hi_db)
        f_mid = measure(mid, scan_errors, scan_rel, decide=target)
        history.append((mid, f_mid))
        if f_mid > target:
            lo_db = mid
        else:
            hi_db = mid
    refine_errors = min_errors_for_rel_ci(rel_ci, target)
    for _ in range(6):
        f_lo = measure(lo_db, refine_errors, rel_ci)
        f_hi = measure(hi_db, refine_errors, rel_ci)
        history.append((lo_db, f_lo))
        history.append((hi_db, f_hi))
        if f_lo > target >= f_hi:
            break
        # refined estimates broke the bracket; widen on the offending side
        if f_lo <= target:
            lo_db -= step_db
        if f_hi > target:
            hi_db += step_db
    else:
        raise RuntimeError("bracket kept breaking under refinement")

    x = (np.log(f_lo) - np.log(target)) / (np.log(f_lo) - np.log(f_hi))
    return lo_db + x * (hi_db - lo_db), history


# ---------------------------------------------------------------------------
# per-point caches for the table rules (EPMU tables cost a DE run each)
# ---------------------------------------------------------------------------

_EPMU_CACHE: dict = {}
_CCTHR_CACHE: dict = {}
_DELTA_DE_CACHE: dict = {}


def _cached_epmu(code: PolarCode, sigma2: float, quantizer):
    from .density_evolution import epmu_tables

    key = (code.m, code.info_set, round(sigma2, 12), round(quantizer.delta, 12))
    if key not in _EPMU_CACHE:
        _EPMU_CACHE[key] = epmu_tables(code, sigma2, quantizer)
    return _EPMU_CACHE[key]


def _cached_ccthr(code: PolarCode, sigma2: float, quantizer):
    from .density_evolution import cc_plausibility

    key = (code.m, code.info_set, round(sigma2, 12), round(quantizer.delta, 12))
    if key not in _CCTHR_CACHE:
        _CCTHR_CACHE[key] = cc_plausibility(code, sigma2, quantizer)
    return _CCTHR_CACHE[key]
