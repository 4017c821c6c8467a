"""Mid-tread uniform quantization and quantization-threshold selection.

Thresholds can be picked three ways: maximizing the quantized channel's
capacity, maximizing a normal-approximation finite-blocklength rate, or
minimizing the union bound on block error probability computed by density
evolution with the decoder's own label algebra.  Only the last one sees the
decoder's suboptimality, which is the whole point of offering it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .channel import DiscreteBmsLaw, capacity_bms, qbiawgn_law


@dataclass(frozen=True)
class MidTreadQuantizer:
    """Uniform quantizer with an odd number of levels including 0.

    Labels are the integers 0, +-1, ..., +-(levels-1)/2; the reconstruction
    value of label q is 2*delta*q; decision boundaries sit at odd multiples of
    delta and resolve toward the smaller-magnitude label.
    """

    levels: int
    delta: float

    def __post_init__(self):
        if self.levels < 3 or self.levels % 2 == 0:
            raise ValueError("levels must be odd and >= 3")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def half(self) -> int:
        return (self.levels - 1) // 2

    @property
    def labels(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1)

    def quantize(self, x):
        """Nearest-reconstruction label; boundary values round toward 0."""
        x = np.asarray(x, dtype=float)
        mag = np.ceil((np.abs(x) - self.delta) / (2.0 * self.delta))
        mag = np.clip(mag, 0, self.half)
        q = np.sign(x) * mag
        return q.astype(int) if q.ndim else int(q)

    def reconstruct(self, label):
        return reconstruct(label, self.delta, levels=self.levels)


def quantize(x, levels: int, delta: float):
    return MidTreadQuantizer(levels, delta).quantize(x)


def reconstruct(label, delta: float, levels: int | None = None):
    """Reconstruction value 2*delta*label.

    Three-level systems override this externally: +-Delta of the equivalent
    error-and-erasure channel when feeding an unquantized decoder, +-1 when
    feeding a 3-level decoder.
    """
    label = np.asarray(label)
    if levels is not None:
        half = (levels - 1) // 2
        if np.any(np.abs(label) > half) or np.any(label != np.round(label)):
            raise ValueError(f"label {label} outside alphabet of {levels} levels")
    out = 2.0 * delta * label
    return float(out) if out.ndim == 0 else out


def _grid_search(objective, hi: float, num: int = 400, refine: int = 10):
    """Maximize ``objective`` over (0, hi]; ties go to the smaller argument.

    One uniform pass of ``num`` points, then a pass at ``refine``-times finer
    spacing around the incumbent.
    """
    step = hi / num
    deltas = step * np.arange(1, num + 1)
    vals = np.array([objective(d) for d in deltas])
    best = int(np.argmax(vals))  # argmax takes the first (smallest delta) on ties
    d0, v0 = deltas[best], vals[best]
    fine = d0 + (step / refine) * np.arange(-refine, refine + 1)
    fine = fine[fine > 0]
    for d in fine:
        v = objective(d)
        if v > v0 or (v == v0 and d < d0):
            d0, v0 = d, v
    return float(d0)


def threshold_cap(N: int, sigma2: float) -> float:
    """Capacity-maximizing threshold for the N-level quantized BiAWGN."""
    return _grid_search(lambda d: capacity_bms(qbiawgn_law(N, d, sigma2)), 8.0 / sigma2)


def _normal_approx_rate(law: DiscreteBmsLaw, n: int, peb: float) -> float:
    """C - sqrt(V/n) * Qinv(peb) from the law's information density (bits)."""
    p0, p1 = law.prob_given_0, law.prob_given_1
    py = 0.5 * (p0 + p1)
    dens, probs = [], []
    for row in (p0, p1):
        mask = row > 0
        dens.append(np.log2(row[mask] / py[mask]))
        probs.append(0.5 * row[mask])
    dens = np.concatenate(dens)
    probs = np.concatenate(probs)
    c = float(np.sum(probs * dens))
    v = float(np.sum(probs * (dens - c) ** 2))
    qinv = -ndtri(peb)  # Q^-1(x) = -Phi^-1(x)
    return c - np.sqrt(v / n) * qinv


def threshold_fbl(N: int, sigma2: float, n: int, peb: float) -> float:
    """Threshold maximizing the normal-approximation rate at blocklength n."""
    if not 0.0 < peb < 1.0:
        raise ValueError("peb must be strictly inside (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    return _grid_search(
        lambda d: _normal_approx_rate(qbiawgn_law(N, d, sigma2), n, peb), 8.0 / sigma2
    )


def threshold_de(N: int, sigma2: float, code, algebra) -> float:
    """Threshold minimizing the density-evolution union bound for ``code``.

    The bound is evaluated with the same label algebra that will decode, so
    the decoder's quantization loss shapes the choice.
    """
    from .density_evolution import de_profile, union_bound

    def objective(d):
        law = qbiawgn_law(N, d, sigma2)
        dist = algebra.channel_dist(law)
        profile = de_profile(dist, code, algebra)
        return -union_bound(code, profile)[1]

    return _grid_search(objective, 8.0 / sigma2)
