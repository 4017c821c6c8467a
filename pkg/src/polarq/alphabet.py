"""LLR label algebras: the axis of genericity for every decoder here.

An algebra supplies the check-node and variable-node operations, negation, a
path-metric increment, and a channel embedding.  Decoders and density
evolution are written against this interface, so swapping real-valued labels
for 3-level or 7-level integers (or product labels carrying counters) never
touches the decoding schedule.

Array-form operations work on encoded labels: every algebra encodes a label
as a fixed-width float64 row whose FIRST column carries the decision value
(its sign is the bit decision), which is what density evolution sorts on.
"""

from __future__ import annotations

import numpy as np

from .channel import LLR_SAT, DiscreteBmsLaw

LN2 = float(np.log(2.0))

# Tags for the mixed-stage alphabet.
TAG_UNQ = 0.0
TAG_Q = 1.0

CC_SAT = 2**16 - 1


def coarse_round(x):
    """Round to sign, full exponent, and three explicit mantissa bits.

    Magnitudes are clamped to [2^-30, 2^30]; exact zero stays zero.  Ties in
    the mantissa rounding follow round-half-to-even.  The image of this map is
    finite, which is what makes real-label decoders analyzable by discrete
    density evolution.
    """
    x = np.asarray(x, dtype=float)
    mant, expo = np.frexp(x)
    y = np.ldexp(np.round(mant * 16.0) / 16.0, expo)
    mag = np.abs(y)
    y = np.where(mag > 2.0**30, np.copysign(2.0**30, y), y)
    y = np.where((mag < 2.0**-30) & (x != 0), np.copysign(2.0**-30, y), y)
    y = np.where(x == 0, 0.0, y)
    return float(y) if y.ndim == 0 else y


def pm_increment_piecewise(x, u):
    """Three-piece path-metric increment on the (reconstructed) LLR value x.

    Agreeing strong evidence costs 0, contradicting strong evidence costs |x|,
    and the middle piece is linear with offset ln 2.
    """
    x = np.asarray(x, dtype=float)
    s = np.where(u == 0, x, -x)  # (-1)^u * x
    mid = 0.5 * (-s) + LN2
    out = np.where(s < -2.0 * LN2, -s, np.where(s > 2.0 * LN2, 0.0, mid))
    return float(out) if out.ndim == 0 else out


def pm_increment_exact(x, u):
    """Exact increment ln(1 + exp(-(-1)^u x)); analysis oracles only."""
    x = np.asarray(x, dtype=float)
    s = np.where(u == 0, x, -x)
    out = np.logaddexp(0.0, -s)
    return float(out) if out.ndim == 0 else out


class LlrAlgebra:
    """Interface shared by all label algebras."""

    name: str
    width: int = 1
    zero = 0.0
    sat_plus = LLR_SAT

    # scalar operations -------------------------------------------------
    def cn(self, a, b):
        raise NotImplementedError

    def vn(self, a, b):
        raise NotImplementedError

    def negate(self, a):
        raise NotImplementedError

    def sign(self, a) -> int:
        return int(np.sign(self.encode([a])[0, 0]))

    def pm_increment(self, a, u, exact: bool = False):
        x = self.reconstruction(a)
        return pm_increment_exact(x, u) if exact else pm_increment_piecewise(x, u)

    def reconstruction(self, a) -> float:
        """Real value entering the path-metric update for label ``a``."""
        return float(self.encode([a])[0, 0])

    def embed_channel(self, x):
        raise NotImplementedError

    def embed_from_y(self, y, sigma2: float, quantizer=None):
        """Channel embedding straight from a BiAWGN output sample."""
        raise NotImplementedError

    # encoded-array operations -------------------------------------------
    def encode(self, labels) -> np.ndarray:
        arr = np.asarray(list(labels), dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        return arr

    def decode_row(self, row):
        return float(row[0])

    def cn_arr(self, A, B) -> np.ndarray:
        raise NotImplementedError

    def vn_arr(self, A, B) -> np.ndarray:
        raise NotImplementedError

    def negate_arr(self, A) -> np.ndarray:
        raise NotImplementedError

    def sign_arr(self, A) -> np.ndarray:
        return np.sign(A[:, 0])

    def recon_arr(self, A) -> np.ndarray:
        return A[:, 0]

    def pm_inc_arr(self, A, u, exact: bool = False) -> np.ndarray:
        x = self.recon_arr(A)
        return pm_increment_exact(x, u) if exact else pm_increment_piecewise(x, u)

    def channel_dist(self, law: DiscreteBmsLaw):
        """All-zero-codeword channel label distribution as a DiscreteDist."""
        from .density_evolution import DiscreteDist

        labels = self.encode([self.embed_channel_from_law_label(l, law) for l in law.labels])
        return DiscreteDist(labels, law.prob_given_0.copy())

    def embed_channel_from_law_label(self, label, law: DiscreteBmsLaw):
        return self.embed_channel(label)


def _minsum(a, b):
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


class LInfMin(LlrAlgebra):
    """Real labels, min-approximated check node, plain-sum variable node."""

    name = "linf-min"

    def cn(self, a, b):
        return float(_minsum(a, b))

    def vn(self, a, b):
        return float(a + b)

    def negate(self, a):
        return -a

    def sign(self, a):
        return int(np.sign(a))

    def reconstruction(self, a):
        return float(a)

    def embed_channel(self, llr):
        return float(llr)

    def embed_from_y(self, y, sigma2, quantizer=None):
        return 2.0 * y / sigma2

    def cn_arr(self, A, B):
        return _minsum(A, B)

    def vn_arr(self, A, B):
        return A + B

    def negate_arr(self, A):
        return -A

    def embed_channel_from_law_label(self, label, law):
        # An unquantized decoder fed a discrete channel gets the exact LLRs.
        return float(law.label_llrs()[law.label_index(label)])


class LInf(LInfMin):
    """Real labels with the exact tanh-product check node."""

    name = "linf"

    def cn(self, a, b):
        return float(self.cn_arr(np.asarray(a, float), np.asarray(b, float)))

    def cn_arr(self, A, B):
        # sign-min plus the two correction terms; numerically stable form of
        # 2*atanh(tanh(A/2)*tanh(B/2))
        corr = np.log1p(np.exp(-np.abs(A + B))) - np.log1p(np.exp(-np.abs(A - B)))
        return _minsum(A, B) + corr


class LInfTilde(LInfMin):
    """Min-sum real labels re-rounded to the coarse float grid after every op."""

    name = "linf-tilde"

    def cn(self, a, b):
        return coarse_round(_minsum(a, b))

    def vn(self, a, b):
        return coarse_round(a + b)

    def embed_channel(self, llr):
        return coarse_round(llr)

    def embed_from_y(self, y, sigma2, quantizer=None):
        return coarse_round(2.0 * y / sigma2)

    def cn_arr(self, A, B):
        return coarse_round(_minsum(A, B))

    def vn_arr(self, A, B):
        return coarse_round(A + B)

    def embed_channel_from_law_label(self, label, law):
        return coarse_round(law.label_llrs()[law.label_index(label)])


class _ClippedInt(LlrAlgebra):
    """Shared machinery of the 3- and 7-level integer alphabets."""

    clip: int

    def cn(self, a, b):
        return int(_minsum(a, b))

    def vn(self, a, b):
        return int(np.clip(a + b, -self.clip, self.clip))

    def negate(self, a):
        return -a

    def sign(self, a):
        return int(np.sign(a))

    def embed_channel(self, q):
        q = int(q)
        if abs(q) > self.clip:
            raise ValueError(f"label {q} outside +-{self.clip}")
        return q

    def cn_arr(self, A, B):
        return _minsum(A, B)

    def vn_arr(self, A, B):
        return np.clip(A + B, -self.clip, self.clip)

    def negate_arr(self, A):
        return -A


class L3(_ClippedInt):
    """Three-level labels {-1, 0, +1}; reconstruction is the label itself."""

    name = "l3"
    clip = 1
    zero = 0
    sat_plus = 1

    def reconstruction(self, a):
        return float(a)

    def embed_from_y(self, y, sigma2, quantizer=None):
        return int(quantizer.quantize(2.0 * y / sigma2))

    def channel_dist(self, law):
        from .density_evolution import DiscreteDist

        if len(law.labels) != 3:
            raise ValueError("3-level algebra needs a 3-label channel law")
        return DiscreteDist(self.encode(law.labels), law.prob_given_0.copy())


class L7(_ClippedInt):
    """Seven-level labels {0, +-1, +-2, +-3}; clipped-sum variable node.

    Path-metric updates use the reconstruction 2*delta*label of the channel
    quantizer, so the instance carries that delta.
    """

    name = "l7"
    clip = 3
    zero = 0
    sat_plus = 3

    def __init__(self, delta: float):
        self.delta = float(delta)

    def reconstruction(self, a):
        return 2.0 * self.delta * a

    def recon_arr(self, A):
        return 2.0 * self.delta * A[:, 0]

    def embed_from_y(self, y, sigma2, quantizer=None):
        return int(quantizer.quantize(2.0 * y / sigma2))

    def channel_dist(self, law):
        from .density_evolution import DiscreteDist

        if len(law.labels) != 7:
            raise ValueError("7-level algebra needs a 7-label channel law")
        return DiscreteDist(self.encode(law.labels), law.prob_given_0.copy())


class L3CC(LlrAlgebra):
    """3-level labels paired with a saturating contradiction counter.

    The counter adds under the check node; under the variable node it adds
    plus one whenever the two inputs carry opposing hard values.  Negation
    keeps the count: contradiction evidence is sign-independent.
    """

    name = "l3cc"
    width = 2
    zero = (0, 0)
    sat_plus = (1, 0)

    def __init__(self, count_cap: int = CC_SAT):
        self.count_cap = int(count_cap)
        self._l3 = L3()

    def cn(self, a, b):
        return (self._l3.cn(a[0], b[0]), min(a[1] + b[1], self.count_cap))

    def vn(self, a, b):
        contra = 1 if (a[0], b[0]) in ((1, -1), (-1, 1)) else 0
        return (self._l3.vn(a[0], b[0]), min(a[1] + b[1] + contra, self.count_cap))

    def negate(self, a):
        return (-a[0], a[1])

    def sign(self, a):
        return int(np.sign(a[0]))

    def reconstruction(self, a):
        return float(a[0])

    def embed_channel(self, q):
        return (int(q), 0)

    def embed_from_y(self, y, sigma2, quantizer=None):
        return (int(quantizer.quantize(2.0 * y / sigma2)), 0)

    def encode(self, labels):
        return np.asarray([[l3, c] for l3, c in labels], dtype=float)

    def decode_row(self, row):
        return (int(row[0]), int(row[1]))

    def cn_arr(self, A, B):
        l3 = _minsum(A[:, 0], B[:, 0])
        c = np.minimum(A[:, 1] + B[:, 1], self.count_cap)
        return np.column_stack([l3, c])

    def vn_arr(self, A, B):
        contra = (A[:, 0] * B[:, 0] == -1).astype(float)
        l3 = np.clip(A[:, 0] + B[:, 0], -1, 1)
        c = np.minimum(A[:, 1] + B[:, 1] + contra, self.count_cap)
        return np.column_stack([l3, c])

    def negate_arr(self, A):
        return np.column_stack([-A[:, 0], A[:, 1]])

    def channel_dist(self, law):
        from .density_evolution import DiscreteDist

        if len(law.labels) != 3:
            raise ValueError("contradiction counting pairs with a 3-label law")
        labels = self.encode([(int(l), 0) for l in law.labels])
        return DiscreteDist(labels, law.prob_given_0.copy())


class Coupled(LlrAlgebra):
    """Product of two algebras; operations act component-wise.

    Models a super-decoder: two decoders driven by the same channel output,
    analyzed jointly over the product label set.
    """

    def __init__(self, a: LlrAlgebra, b: LlrAlgebra):
        self.a = a
        self.b = b
        self.name = f"coupled({a.name},{b.name})"
        self.width = a.width + b.width
        self.zero = (a.zero, b.zero)
        self.sat_plus = (a.sat_plus, b.sat_plus)

    def _split(self, A):
        return A[:, : self.a.width], A[:, self.a.width :]

    def cn(self, x, y):
        return (self.a.cn(x[0], y[0]), self.b.cn(x[1], y[1]))

    def vn(self, x, y):
        return (self.a.vn(x[0], y[0]), self.b.vn(x[1], y[1]))

    def negate(self, x):
        return (self.a.negate(x[0]), self.b.negate(x[1]))

    def sign(self, x):
        return self.a.sign(x[0])

    def embed_channel(self, pair):
        return (self.a.embed_channel(pair[0]), self.b.embed_channel(pair[1]))

    def embed_from_y(self, y, sigma2, quantizer=None):
        return (
            self.a.embed_from_y(y, sigma2, quantizer),
            self.b.embed_from_y(y, sigma2, quantizer),
        )

    def project_a(self, x):
        return x[0]

    def project_b(self, x):
        return x[1]

    def encode(self, labels):
        rows = [
            np.concatenate(
                [np.atleast_1d(self.a.encode([la])[0]), np.atleast_1d(self.b.encode([lb])[0])]
            )
            for la, lb in labels
        ]
        return np.asarray(rows, dtype=float)

    def decode_row(self, row):
        wa = self.a.width
        return (self.a.decode_row(row[:wa]), self.b.decode_row(row[wa:]))

    def cn_arr(self, A, B):
        A1, A2 = self._split(A)
        B1, B2 = self._split(B)
        return np.column_stack([self.a.cn_arr(A1, B1), self.b.cn_arr(A2, B2)])

    def vn_arr(self, A, B):
        A1, A2 = self._split(A)
        B1, B2 = self._split(B)
        return np.column_stack([self.a.vn_arr(A1, B1), self.b.vn_arr(A2, B2)])

    def negate_arr(self, A):
        A1, A2 = self._split(A)
        return np.column_stack([self.a.negate_arr(A1), self.b.negate_arr(A2)])

    def sign_arr(self, A):
        return self.a.sign_arr(self._split(A)[0])


class LMsd(LlrAlgebra):
    """Mixed-stage labels: unquantized until the first operation, 3-level after.

    Labels are (value, tag) where the tag says whether the value is still a
    raw channel LLR.  The first-layer check and variable nodes quantize their
    result with separate thresholds delta_cn and delta_vn; later layers run
    plain 3-level operations and the tag stays quantized.
    """

    name = "lmsd"
    width = 2
    zero = (0.0, TAG_Q)

    def __init__(self, delta_cn: float, delta_vn: float):
        from .quantization import MidTreadQuantizer

        self.delta_cn = float(delta_cn)
        self.delta_vn = float(delta_vn)
        self._q_cn = MidTreadQuantizer(3, delta_cn)
        self._q_vn = MidTreadQuantizer(3, delta_vn)
        self._l3 = L3()
        self.sat_plus = (LLR_SAT, TAG_UNQ)

    @staticmethod
    def _check_tags(ta, tb):
        if ta != tb:
            raise ValueError("mixed-stage operands with different tags cannot occur")

    def cn(self, a, b):
        self._check_tags(a[1], b[1])
        if a[1] == TAG_UNQ:
            return (float(self._q_cn.quantize(_minsum(a[0], b[0]))), TAG_Q)
        return (self._l3.cn(int(a[0]), int(b[0])), TAG_Q)

    def vn(self, a, b):
        self._check_tags(a[1], b[1])
        if a[1] == TAG_UNQ:
            return (float(self._q_vn.quantize(a[0] + b[0])), TAG_Q)
        return (self._l3.vn(int(a[0]), int(b[0])), TAG_Q)

    def negate(self, a):
        return (-a[0], a[1])

    def sign(self, a):
        return int(np.sign(a[0]))

    def reconstruction(self, a):
        return float(a[0])

    def embed_channel(self, llr):
        return (float(llr), TAG_UNQ)

    def embed_from_y(self, y, sigma2, quantizer=None):
        return (2.0 * y / sigma2, TAG_UNQ)

    def encode(self, labels):
        return np.asarray([[v, t] for v, t in labels], dtype=float)

    def decode_row(self, row):
        return (float(row[0]), float(row[1]))

    def _arr_op(self, A, B, unq_fn, q_fn, quantizer):
        ta, tb = A[:, 1], B[:, 1]
        if np.any(ta != tb):
            raise ValueError("mixed-stage operands with different tags cannot occur")
        unq = ta == TAG_UNQ
        out = np.empty(len(A))
        if np.any(unq):
            out[unq] = quantizer.quantize(unq_fn(A[unq, 0], B[unq, 0]))
        if np.any(~unq):
            out[~unq] = q_fn(A[~unq, 0], B[~unq, 0])
        return np.column_stack([out, np.full(len(A), TAG_Q)])

    def cn_arr(self, A, B):
        return self._arr_op(A, B, _minsum, lambda x, y: _minsum(x, y), self._q_cn)

    def vn_arr(self, A, B):
        return self._arr_op(A, B, lambda x, y: x + y, lambda x, y: np.clip(x + y, -1, 1), self._q_vn)

    def negate_arr(self, A):
        return np.column_stack([-A[:, 0], A[:, 1]])


_REGISTRY = {
    "linf": LInf,
    "linf-min": LInfMin,
    "linf-tilde": LInfTilde,
    "l3": L3,
    "l3cc": L3CC,
}


def make_algebra(name: str, **params) -> LlrAlgebra:
    """Instantiate an algebra by its config identifier."""
    if name == "l7":
        return L7(delta=params["delta"])
    if name == "lmsd":
        return LMsd(delta_cn=params["delta_cn"], delta_vn=params["delta_vn"])
    if name in _REGISTRY:
        return _REGISTRY[name]()
    raise ValueError(f"unknown algebra {name!r}")
