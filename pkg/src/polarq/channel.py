"""Binary-input channel models, their LLR maps, and capacity computations.

All decoding-side LLRs are in natural-log units; information measures are in
bits (base 2).  Gaussian tail masses go through ``scipy.special.ndtr`` which
is accurate to relative 1e-12 over the ranges used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

# Saturation value standing in for an infinite LLR.  Matches the magnitude
# clamp of the coarse float alphabet so saturated channel labels stay inside
# every alphabet's domain.
LLR_SAT = 2.0**30


def ebn0_to_sigma2(ebn0_db: float, rate: float) -> float:
    """Noise variance per real dimension for a given Eb/N0 (dB) and code rate.

    sigma2 = 1 / (2 * rate * 10^(ebn0_db / 10))
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    if not np.isfinite(ebn0_db):
        raise ValueError("ebn0_db must be finite")
    return 1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0))


@dataclass(frozen=True)
class BiAwgn:
    """BPSK over real additive white Gaussian noise with variance sigma2."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def sample(self, bit, rng) -> np.ndarray:
        """Channel output (-1)^bit + noise; ``bit`` may be an array."""
        bit = np.asarray(bit)
        return (-1.0) ** bit + rng.normal(0.0, np.sqrt(self.sigma2), size=bit.shape)

    def llr(self, y):
        """Exact LLR 2y/sigma2 of an output sample."""
        return (2.0 / self.sigma2) * np.asarray(y, dtype=float)


def biawgn_sample(bit, sigma2: float, rng) -> np.ndarray:
    return BiAwgn(sigma2).sample(bit, rng)


def biawgn_llr(y, sigma2: float):
    return BiAwgn(sigma2).llr(y)


@dataclass(frozen=True)
class Beec:
    """Binary error-and-erasure channel with error prob p and erasure prob e."""

    p: float
    e: float

    def __post_init__(self):
        if self.p < 0 or self.e < 0 or self.p + self.e > 1:
            raise ValueError(f"invalid BEEC parameters p={self.p}, e={self.e}")

    @property
    def delta(self) -> float:
        """Magnitude of the exact output LLR; saturated when p = 0."""
        if self.p == 0.0:
            return LLR_SAT
        return min(np.log((1.0 - self.p - self.e) / self.p), LLR_SAT)


ERASURE = "E"


def beec_output(bit: int, ch: Beec, rng):
    """Transmit one bit: returns 0, 1, or the erasure symbol ``"E"``."""
    u = rng.random()
    if u < ch.e:
        return ERASURE
    if u < ch.e + ch.p:
        return 1 - bit
    return bit


def beec_llr(symbol, ch: Beec) -> float:
    """Exact LLR of a BEEC output symbol: +delta for 0, 0 for E, -delta for 1."""
    if symbol == ERASURE:
        return 0.0
    if symbol == 0:
        return ch.delta
    if symbol == 1:
        return -ch.delta
    raise ValueError(f"unknown BEEC output symbol {symbol!r}")


@dataclass(frozen=True)
class DiscreteBmsLaw:
    """Finite binary-input symmetric channel law over ordered output labels.

    ``labels`` are numeric and symmetric around 0; symmetry means the law for
    bit 1 equals the law for bit 0 with labels negated.
    """

    labels: np.ndarray
    prob_given_0: np.ndarray
    prob_given_1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=float))
        object.__setattr__(self, "prob_given_0", np.asarray(self.prob_given_0, dtype=float))
        object.__setattr__(self, "prob_given_1", np.asarray(self.prob_given_1, dtype=float))
        for row in (self.prob_given_0, self.prob_given_1):
            if row.shape != self.labels.shape or np.any(row < -1e-15):
                raise ValueError("malformed probability row")
            if abs(row.sum() - 1.0) > 1e-12:
                raise ValueError(f"probability row sums to {row.sum()}, not 1")

    def label_index(self, label) -> int:
        idx = np.nonzero(np.isclose(self.labels, label))[0]
        if idx.size != 1:
            raise KeyError(f"label {label} not in law")
        return int(idx[0])

    def label_llrs(self) -> np.ndarray:
        """Exact per-label LLR ln(P(l|0)/P(l|1)), saturated where one side is 0."""
        p0, p1 = self.prob_given_0, self.prob_given_1
        out = np.zeros_like(p0)
        both = (p0 > 0) & (p1 > 0)
        out[both] = np.log(p0[both] / p1[both])
        out[(p0 > 0) & (p1 == 0)] = LLR_SAT
        out[(p0 == 0) & (p1 > 0)] = -LLR_SAT
        return np.clip(out, -LLR_SAT, LLR_SAT)

    def log_probs(self) -> tuple[np.ndarray, np.ndarray]:
        """(log P(l|0), log P(l|1)) with -inf on zero-probability labels."""
        with np.errstate(divide="ignore"):
            return np.log(self.prob_given_0), np.log(self.prob_given_1)

    def sample_indices(self, bit_array: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Label indices drawn per transmitted bit from pre-drawn uniforms."""
        cum0 = np.cumsum(self.prob_given_0)
        cum1 = np.cumsum(self.prob_given_1)
        idx0 = np.searchsorted(cum0, uniforms, side="right")
        idx1 = np.searchsorted(cum1, uniforms, side="right")
        k = len(self.labels) - 1
        return np.where(bit_array == 0, np.minimum(idx0, k), np.minimum(idx1, k))


def beec_law(ch: Beec) -> DiscreteBmsLaw:
    """BEEC as a 3-label law; label +1 supports bit 0, -1 supports bit 1."""
    good = 1.0 - ch.p - ch.e
    return DiscreteBmsLaw(
        labels=np.array([-1.0, 0.0, 1.0]),
        prob_given_0=np.array([ch.p, ch.e, good]),
        prob_given_1=np.array([good, ch.e, ch.p]),
    )


def qbiawgn_law(N: int, delta: float, sigma2: float) -> DiscreteBmsLaw:
    """Channel law of the N-level mid-tread-quantized BiAWGN LLR output.

    The unquantized LLR 2Y/sigma2 is Gaussian with mean +-2/sigma2 and
    variance 4/sigma2; each label's probability is the Gaussian mass of its
    decision region (closed dead zone [-delta, +delta] for label 0, outermost
    regions unbounded).
    """
    if N < 3 or N % 2 == 0:
        raise ValueError("N must be odd and >= 3")
    if delta <= 0 or sigma2 <= 0:
        raise ValueError("delta and sigma2 must be positive")
    half = (N - 1) // 2
    labels = np.arange(-half, half + 1, dtype=float)
    # region upper boundaries in LLR units: label q < half ends at (2q+1)*delta
    uppers = (2 * labels + 1) * delta
    mu = 2.0 / sigma2
    s = 2.0 / np.sqrt(sigma2)
    cdf_up = ndtr((uppers - mu) / s)
    cdf_up[-1] = 1.0
    p0 = np.diff(np.concatenate([[0.0], cdf_up]))
    p0 = np.clip(p0, 0.0, 1.0)
    p0 /= p0.sum()
    return DiscreteBmsLaw(labels=labels, prob_given_0=p0, prob_given_1=p0[::-1].copy())


def capacity_bms(law: DiscreteBmsLaw) -> float:
    """Mutual information I(Y; C) in bits under uniform input, with 0 log 0 = 0."""
    p0, p1 = law.prob_given_0, law.prob_given_1
    py = 0.5 * (p0 + p1)
    total = 0.0
    for row in (p0, p1):
        mask = row > 0
        total += 0.5 * np.sum(row[mask] * np.log2(row[mask] / py[mask]))
    return float(total)


def cawgn_capacity(snr: float) -> float:
    """Shannon capacity log2(1 + SNR) of the complex AWGN channel."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return float(np.log2(1.0 + snr))
