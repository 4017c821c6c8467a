"""Decoder kernel specifications: what a batch backend needs to run.

A spec freezes one (algebra, pm rule, code) combination into plain arrays:
integer alphabets become index-valued operation tables plus a per-bit
(label, decision) increment table; real alphabets carry flags for the exact
check node and coarse re-rounding; the mixed-stage kind keeps its two
first-layer thresholds.  Both backends consume these specs and must produce
bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..alphabet import (
    L3,
    L3CC,
    L7,
    LInf,
    LInfMin,
    LInfTilde,
    LMsd,
    LlrAlgebra,
    pm_increment_piecewise,
)
from ..polarcode import PolarCode

KIND_TABLE = 0
KIND_FLOAT = 1
KIND_MSD = 2


@dataclass
class KernelSpec:
    kind: int
    code: PolarCode
    info_mask: np.ndarray
    # table kind
    n_labels: int = 0
    offset: int = 0
    cn_tab: np.ndarray | None = None  # (K, K) uint8 label indices
    vn_tab: np.ndarray | None = None
    pm_tab: np.ndarray | None = None  # (n, K, 2) float64
    cc: bool = False
    contra_tab: np.ndarray | None = None  # (K, K) uint8
    thresholds: np.ndarray | None = None  # (n,) int64
    penalty: float = 0.0
    # float kind
    exact_cn: bool = False
    tilde: bool = False
    # msd kind
    delta_cn: float = 0.0
    delta_vn: float = 0.0

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.n_labels) - self.offset


def _index_tables(algebra, half: int):
    """Operation tables over label indices 0..2*half for a clipped-int algebra."""
    k = 2 * half + 1
    cn = np.zeros((k, k), dtype=np.uint8)
    vn = np.zeros((k, k), dtype=np.uint8)
    for ai in range(k):
        for bi in range(k):
            a, b = ai - half, bi - half
            cn[ai, bi] = algebra.cn(a, b) + half
            vn[ai, bi] = algebra.vn(a, b) + half
    return cn, vn


def _default_pm_tab(n: int, recon: np.ndarray) -> np.ndarray:
    tab = np.zeros((n, len(recon), 2))
    for u in (0, 1):
        tab[:, :, u] = pm_increment_piecewise(recon, u)[None, :]
    return tab


def build_spec(code: PolarCode, algebra: LlrAlgebra, pm_rule=None) -> KernelSpec:
    """Freeze (code, algebra, pm rule) into a backend-consumable spec."""
    from ..scl import PmRule

    pm_rule = pm_rule or PmRule()
    pm_rule.validate(algebra, code.n)
    if pm_rule.exact:
        raise ValueError("exact path metrics are an analysis option of the pure decoder")
    base = dict(code=code, info_mask=code.info_mask.astype(np.uint8))

    if isinstance(algebra, (L3, L7, L3CC)):
        inner = L3() if isinstance(algebra, L3CC) else algebra
        half = inner.clip
        cn, vn = _index_tables(inner, half)
        recon = np.array([inner.reconstruction(q) for q in range(-half, half + 1)])
        if pm_rule.kind in ("epmu", "epmucc"):
            if half != 1:
                raise ValueError("table pm rules are defined for 3-level labels")
            pm_tab = pm_rule.tables.inc.astype(float).copy()
        else:
            pm_tab = _default_pm_tab(code.n, recon)
        spec = KernelSpec(
            kind=KIND_TABLE,
            n_labels=2 * half + 1,
            offset=half,
            cn_tab=cn,
            vn_tab=vn,
            pm_tab=pm_tab,
            **base,
        )
        if isinstance(algebra, L3CC):
            contra = np.zeros((3, 3), dtype=np.uint8)
            contra[0, 2] = contra[2, 0] = 1  # (-1,+1) and (+1,-1)
            spec.contra_tab = contra
            spec.cc = pm_rule.kind == "epmucc"
            if spec.cc:
                spec.thresholds = np.asarray(pm_rule.thresholds, dtype=np.int64)
                spec.penalty = float(pm_rule.penalty)
        return spec

    if pm_rule.kind != "default":
        raise ValueError("table pm rules need an integer-label algebra")

    if isinstance(algebra, LMsd):
        spec = KernelSpec(
            kind=KIND_MSD,
            n_labels=3,
            offset=1,
            pm_tab=_default_pm_tab(code.n, np.array([-1.0, 0.0, 1.0])),
            delta_cn=algebra.delta_cn,
            delta_vn=algebra.delta_vn,
            **base,
        )
        return spec

    if isinstance(algebra, (LInfMin, LInf, LInfTilde)):
        return KernelSpec(
            kind=KIND_FLOAT,
            exact_cn=isinstance(algebra, LInf),
            tilde=isinstance(algebra, LInfTilde),
            **base,
        )

    raise ValueError(f"no batch kernel for algebra {algebra.name!r}")
