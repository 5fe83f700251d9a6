"""Symbolization of PAA vectors and multiset Jaccard similarity.

Breakpoints cut the standard normal into equal-probability bins, so the
symbols of a z-normalized series are approximately uniform. Plain SAX keeps
only the bin level of each segment mean; the trend-aware encoding folds the
per-segment slope sign in as ``2*alpha - sign*level``, which separates rising,
flat and falling segments that share a mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ParameterError
from .series import PaaVector, TrendSigns

__all__ = [
    "Breakpoints",
    "IsaxSequence",
    "gaussian_breakpoints",
    "sax_symbolize",
    "isax_symbolize",
    "jaccard_similarity",
]


@dataclass(frozen=True)
class Breakpoints:
    """``alpha - 1`` sorted cut points at the k/alpha standard normal quantiles."""

    alpha: int
    betas: np.ndarray


@dataclass(frozen=True)
class IsaxSequence:
    """Integer symbol codes for one (possibly sliced) PAA vector.

    ``encoding`` is "sax" (codes are bin levels, in [1, alpha]) or "isax"
    (codes are ``2*alpha - sign*level``, in [alpha, 3*alpha]).
    """

    symbols: np.ndarray
    alpha: int
    encoding: str

    def __len__(self) -> int:
        return self.symbols.size


def gaussian_breakpoints(alpha: int) -> Breakpoints:
    """Equal-probability breakpoints for an alphabet of ``alpha`` symbols."""
    if alpha < 2:
        raise ParameterError(f"alphabet size must be >= 2, got {alpha}")
    betas = norm.ppf(np.arange(1, alpha) / alpha)
    return Breakpoints(alpha=alpha, betas=betas)


def _levels(values: np.ndarray, bp: Breakpoints) -> np.ndarray:
    # Values equal to a breakpoint land in the upper bin (left-closed bins).
    return np.searchsorted(bp.betas, values, side="right").astype(np.int64) + 1


def sax_symbolize(paa_vec: PaaVector | np.ndarray, bp: Breakpoints) -> IsaxSequence:
    """Map segment means to their breakpoint bin levels (1-based)."""
    values = paa_vec.values if isinstance(paa_vec, PaaVector) else np.asarray(paa_vec, dtype=np.float64)
    return IsaxSequence(symbols=_levels(values, bp), alpha=bp.alpha, encoding="sax")


def isax_symbolize(
    paa_vec: PaaVector | np.ndarray,
    phi: TrendSigns | np.ndarray,
    bp: Breakpoints,
) -> IsaxSequence:
    """Trend-aware codes ``2*alpha - phi*level`` from segment means and slope signs."""
    values = paa_vec.values if isinstance(paa_vec, PaaVector) else np.asarray(paa_vec, dtype=np.float64)
    signs = phi.signs if isinstance(phi, TrendSigns) else np.asarray(phi, dtype=np.int64)
    if signs.size != values.size:
        raise ParameterError(f"isax: {values.size} segment means but {signs.size} trend signs")
    codes = 2 * bp.alpha - signs * _levels(values, bp)
    return IsaxSequence(symbols=codes.astype(np.int64), alpha=bp.alpha, encoding="isax")


def jaccard_similarity(a: IsaxSequence, b: IsaxSequence) -> float:
    """Multiset Jaccard: sum of per-code min counts over sum of max counts.

    Both sequences empty gives 1.0 by convention. Multiset (rather than set)
    semantics preserves symbol frequencies, which keeps long windows
    discriminative.
    """
    if a.alpha != b.alpha or a.encoding != b.encoding:
        raise ParameterError(
            f"jaccard: incompatible sequences (alpha {a.alpha}/{b.alpha}, encoding {a.encoding}/{b.encoding})"
        )
    if len(a) == 0 and len(b) == 0:
        return 1.0
    # Codes are bounded by 3*alpha, so fixed-width bincounts line up.
    width = 3 * a.alpha + 1
    ca = np.bincount(a.symbols, minlength=width)
    cb = np.bincount(b.symbols, minlength=width)
    inter = np.minimum(ca, cb).sum()
    union = np.maximum(ca, cb).sum()
    return float(inter / union)
