"""Algebra-generic successive cancellation list decoding.

Path management follows the usual recipe: every information bit doubles the
candidate set, candidates beyond the list size are dropped by path metric,
and exact metric ties are broken by a random key per candidate so that the
coin-flip degradation of quantized metrics is faithfully present rather than
masked by deterministic ordering.  Winner selection (by metric or by
likelihood among the list) and the maximum-likelihood lower-bound event live
here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alphabet import L3CC, LlrAlgebra
from .channel import BiAwgn, DiscreteBmsLaw
from .polarcode import PolarCode
from .sc import ScState


@dataclass
class PmRule:
    """Path-metric update variant.

    default: three-piece increment on the label's reconstruction (``exact``
    switches to the exact log form, analysis only).  epmu: per-bit lookup
    tables of expected increments.  epmucc: epmu plus contradiction-count
    plausibility thresholds and a transient penalty applied during
    truncation comparisons.
    """

    kind: str = "default"
    exact: bool = False
    tables: object = None
    thresholds: np.ndarray | None = None
    penalty: float = 0.0

    def validate(self, algebra: LlrAlgebra, n: int):
        if self.kind not in ("default", "epmu", "epmucc"):
            raise ValueError(f"unknown pm rule {self.kind!r}")
        if self.kind in ("epmu", "epmucc"):
            if self.tables is None or self.tables.inc.shape[0] != n:
                raise ValueError("epmu rule needs per-bit tables matching the code")
        if self.kind == "epmucc":
            if not isinstance(algebra, L3CC):
                raise ValueError("epmucc requires the contradiction-counting algebra")
            if self.thresholds is None or len(self.thresholds) != n:
                raise ValueError("epmucc needs per-bit plausibility thresholds")

    def increment(self, algebra: LlrAlgebra, lam, bit_index: int, u: int) -> float:
        if self.kind == "default":
            return float(algebra.pm_increment(lam, u, exact=self.exact))
        # table rules key on the 3-level decision value, the first encoded column
        q = int(round(float(algebra.encode([lam])[0, 0])))
        return float(self.tables.inc[bit_index, q + 1, u])


def epmucc_penalize(pm: float, count: int, threshold: int, penalty: float) -> float:
    """Metric used in the imminent truncation comparison; never stored."""
    return pm + (penalty if count > threshold else 0.0)


@dataclass
class Path:
    """One list entry: decision prefix, metric, and decoder state handle."""

    u_hat: list
    pm: float
    state: ScState
    c_hat: list | None = None
    last_count: int = 0


@dataclass
class DecodeList:
    """Final list, sorted by path metric ascending (ties keep decode order)."""

    paths: list

    def __len__(self):
        return len(self.paths)

    @property
    def pms(self) -> np.ndarray:
        return np.array([p.pm for p in self.paths])

    def codewords(self) -> np.ndarray:
        return np.array([p.c_hat for p in self.paths], dtype=np.uint8)

    def messages(self) -> np.ndarray:
        return np.array([p.u_hat for p in self.paths], dtype=np.uint8)


def _draw_keys(rng, bit_index: int, count: int) -> np.ndarray:
    if hasattr(rng, "tiebreaks"):
        return rng.tiebreaks(bit_index, count)
    return rng.random(count)


def extend_and_truncate(pms, increments, L, keys, penalties=None):
    """Order candidates (path, u) by penalized metric with random tie keys.

    ``pms`` has one entry per path, ``increments`` two per path, ``keys`` one
    per candidate in canonical order (2*path + u).  Returns (parents, us,
    stored_pms) of the survivors in their new list order.  ``penalties``
    (per path) affect the comparison only, never the stored metric.
    """
    l = len(pms)
    cand_pm = np.repeat(np.asarray(pms, dtype=float), 2) + np.asarray(
        increments, dtype=float
    ).reshape(-1)
    eff = cand_pm.copy()
    if penalties is not None:
        eff += np.repeat(np.asarray(penalties, dtype=float), 2)
    keys = np.asarray(keys)
    if len(keys) != 2 * l:
        raise ValueError("need one tie key per candidate")
    order = np.lexsort((keys, eff))[: min(2 * l, L)]
    return order // 2, order % 2, cand_pm[order]


def scl_decode(
    code: PolarCode,
    channel_labels,
    algebra: LlrAlgebra,
    L: int,
    pm_rule: PmRule | None = None,
    rng=None,
) -> DecodeList:
    """List decode; returns up to L paths sorted by metric ascending.

    Frozen bits extend every path with 0 and still pay the metric increment
    for opposing evidence.  Tie keys are drawn only when a truncation
    actually happens (one per candidate, canonical order), which keeps the
    draw sequence identical to the batch backends.
    """
    if L < 1:
        raise ValueError("list size must be >= 1")
    pm_rule = pm_rule or PmRule()
    pm_rule.validate(algebra, code.n)
    if rng is None:
        rng = np.random.default_rng(0)
    labels = list(channel_labels)
    if len(labels) != code.n:
        raise ValueError("channel label count does not match block length")
    info = code.info_mask

    paths = [Path(u_hat=[], pm=0.0, state=ScState(code.m, labels, algebra))]
    for i in range(code.n):
        lams = [p.state.compute_llr(i) for p in paths]
        if pm_rule.kind == "epmucc":
            for p, lam in zip(paths, lams):
                p.last_count = int(lam[1])
        if not info[i]:
            for p, lam in zip(paths, lams):
                p.pm += pm_rule.increment(algebra, lam, i, 0)
                p.u_hat.append(0)
                p.c_hat = p.state.push_bit(i, 0)
            continue

        inc = np.array(
            [[pm_rule.increment(algebra, lam, i, u) for u in (0, 1)] for lam in lams]
        )
        if 2 * len(paths) <= L:
            parents = np.repeat(np.arange(len(paths)), 2)
            us = np.tile([0, 1], len(paths))
            new_pms = np.repeat([p.pm for p in paths], 2) + inc.reshape(-1)
        else:
            keys = _draw_keys(rng, i, 2 * len(paths))
            penalties = None
            if pm_rule.kind == "epmucc":
                penalties = [
                    pm_rule.penalty if p.last_count > pm_rule.thresholds[i] else 0.0
                    for p in paths
                ]
            parents, us, new_pms = extend_and_truncate(
                [p.pm for p in paths], inc, L, keys, penalties
            )
        new_paths = []
        for parent, u, pm in zip(parents, us, new_pms):
            src = paths[parent]
            child = Path(u_hat=src.u_hat + [int(u)], pm=float(pm), state=src.state.clone())
            child.c_hat = child.state.push_bit(i, int(u))
            new_paths.append(child)
        paths = new_paths

    order = np.argsort([p.pm for p in paths], kind="stable")
    return DecodeList(paths=[paths[j] for j in order])


def select_pm(dlist: DecodeList, rng) -> np.ndarray:
    """Codeword of minimal metric; uniform among exact metric ties."""
    if not dlist.paths:
        raise ValueError("empty list")
    pms = dlist.pms
    ties = np.flatnonzero(pms == pms.min())
    pick = ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]
    return np.array(dlist.paths[pick].c_hat, dtype=np.uint8)


def codeword_loglik(channel_law, y_labels, codewords: np.ndarray) -> np.ndarray:
    """Log-likelihood of each codeword for the given received labels.

    ``channel_law`` is the law the decoder actually faces: a DiscreteBmsLaw
    scores P(label|bit) of the (quantized) channel, a BiAwgn scores the
    Gaussian density of raw samples.
    """
    codewords = np.atleast_2d(codewords)
    if isinstance(channel_law, DiscreteBmsLaw):
        lp0, lp1 = channel_law.log_probs()
        idx = np.array([channel_law.label_index(y) for y in y_labels])
        with np.errstate(invalid="ignore"):
            return np.where(codewords == 0, lp0[idx][None, :], lp1[idx][None, :]).sum(axis=1)
    if isinstance(channel_law, BiAwgn):
        y = np.asarray(y_labels, dtype=float)
        x = 1.0 - 2.0 * codewords.astype(float)
        return -((y[None, :] - x) ** 2).sum(axis=1) / (2.0 * channel_law.sigma2)
    raise TypeError(f"unsupported channel law {type(channel_law)!r}")


def select_ml(dlist: DecodeList, channel_law, y_labels, rng) -> np.ndarray:
    """Maximum-likelihood winner among the list; uniform among ties.

    When every candidate has zero probability the tie is over the whole
    list, which reports the erasure-style ambiguity rather than failing.
    """
    if not dlist.paths:
        raise ValueError("empty list")
    ll = codeword_loglik(channel_law, y_labels, dlist.codewords())
    best = ll.max()
    if np.isneginf(best):
        ties = np.arange(len(ll))
    else:
        ties = np.flatnonzero(ll == best)
    pick = ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]
    return np.array(dlist.paths[pick].c_hat, dtype=np.uint8)


def ml_lb_event(wrong_logliks, true_loglik: float, rng) -> bool:
    """Whether even a maximum-likelihood decoder provably errs on this frame.

    True when some listed wrong codeword beats the transmitted one; an exact
    tie errs with probability one half.
    """
    wrong_logliks = np.asarray(wrong_logliks, dtype=float)
    if wrong_logliks.size == 0:
        return False
    best = wrong_logliks.max()
    if best > true_loglik:
        return True
    if best == true_loglik:
        return bool(rng.random() < 0.5)
    return False
