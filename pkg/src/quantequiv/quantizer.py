"""Uniform mid-rise quantizer with step 2 and symmetric saturation.

Levels are ``q_r = (2r - R - 1)`` for ``r = 1..R`` and the decision
thresholds sit on the even integers ``-(R-2), ..., R-2``.  Inputs exactly on
a threshold go to the upper level, so ``Q(0) = +1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DELTA = 2.0
MAX_BITS = 16


@dataclass(frozen=True)
class QuantizerSpec:
    bits: int
    levels: np.ndarray = field(init=False, repr=False, compare=False)
    thresholds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.bits, bool) or int(self.bits) != self.bits:
            raise ValueError(f"bits must be an integer, got {self.bits!r}")
        if not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must be in 1..{MAX_BITS}, got {self.bits}")
        R = 2 ** int(self.bits)
        r = np.arange(1, R + 1)
        levels = (2 * r - R - 1) * DELTA / 2
        thresholds = 0.5 * (levels[1:] + levels[:-1])
        levels.setflags(write=False)
        thresholds.setflags(write=False)
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "thresholds", thresholds)

    @property
    def R(self) -> int:
        """Number of output levels."""
        return 2 ** self.bits

    @property
    def delta(self) -> float:
        return DELTA

    @property
    def top(self) -> float:
        """Saturation level ``(R-1)*delta/2``."""
        return (self.R - 1) * DELTA / 2


def make_quantizer(bits: int) -> QuantizerSpec:
    return QuantizerSpec(bits)


def _check_finite(s):
    if not np.all(np.isfinite(s)):
        raise ValueError("quantizer input must be finite")


def quantize(spec: QuantizerSpec, s):
    """Quantize real input(s); returns a float for scalar input."""
    x = np.asarray(s, dtype=float)
    _check_finite(x)
    # round-half-up of s/delta + 0.5 onto the odd integers; clipping to the
    # outer levels is the same as the saturation branches at +-(R-2)
    k = np.floor(x / DELTA)
    k = k - (DELTA * k > x)  # x/delta can underflow to -0.0 for subnormal x < 0
    q = DELTA * (k + 1.0) - 1.0
    q = np.clip(q, -spec.top, spec.top)
    if q.ndim == 0:
        return float(q)
    return q


def quantize_complex(spec: QuantizerSpec, s):
    """Quantize real and imaginary parts independently."""
    z = np.asarray(s, dtype=complex)
    out = np.asarray(quantize(spec, z.real)) + 1j * np.asarray(quantize(spec, z.imag))
    if out.ndim == 0:
        return complex(out)
    return out
