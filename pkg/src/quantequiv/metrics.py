"""Single-ADC and ADC-array performance metrics built on the equivalent model.

Conventions: every dB value is ``10*log10`` of a power ratio, including the
scaling factor ``SF = R^2 / (sigma_s^2 + sigma_n^2)``.  The noise figure is the
worst-case (coherent NLD) post-MRC value for an M-observation array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .equiv_model import (
    EquivalentStats,
    OperatingPoint,
    QuadratureGrid,
    decompose,
    small_signal_limits,
)
from .errors import NoSolutionError
from .quantizer import QuantizerSpec, make_quantizer

SF_GRID_DB = np.round(np.arange(301) * 0.1, 1)
_COARSE_STRIDE = 10
_TIE_RTOL = 1e-9

THRESHOLD_RANGE_DB = (-20.0, 80.0)
THRESHOLD_TOL_DB = 0.05
_THRESHOLD_SCAN_DB = 10.0


def db(x):
    return 10.0 * np.log10(x)


def undb(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


@dataclass(frozen=True)
class ScaledPoint:
    sf: float
    snr_adc_in: float
    m: int = 1

    def __post_init__(self):
        if not (self.sf > 0 and math.isfinite(self.sf)):
            raise ValueError(f"sf must be finite and > 0, got {self.sf}")
        if not (self.snr_adc_in >= 0 and math.isfinite(self.snr_adc_in)):
            raise ValueError(f"snr_adc_in must be finite and >= 0, got {self.snr_adc_in}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    @property
    def snr_cum_in(self) -> float:
        return self.m * self.snr_adc_in

    @classmethod
    def from_cumulative(cls, sf, snr_cum_in, m):
        return cls(sf, snr_cum_in / m, m)


@dataclass(frozen=True)
class NFCurvePoint:
    snr_cum_in_db: float
    nf_db: float
    sinad_cum_out_db: float
    sf_opt_db: float
    bits: int
    m: int


@dataclass(frozen=True)
class OutputMetrics:
    """Linear output ratios of one ADC; a zero denominator gives ``inf``."""

    snr_out: float
    sdr_out: float
    sinad_out: float

    @property
    def infinite(self) -> bool:
        return math.isinf(self.snr_out) or math.isinf(self.sdr_out)


def to_operating_point(spec: QuantizerSpec, scaled: ScaledPoint) -> OperatingPoint:
    sigma_n = spec.R / math.sqrt(scaled.sf * (1.0 + scaled.snr_adc_in))
    return OperatingPoint(sigma_n, sigma_n * math.sqrt(scaled.snr_adc_in))


def scaling_factor(spec: QuantizerSpec, point: OperatingPoint) -> float:
    return spec.R ** 2 / (point.sigma_s ** 2 + point.sigma_n ** 2)


def _ratio(num, den):
    return math.inf if den == 0 else num / den


def metrics_from_stats(stats: EquivalentStats, sigma_s: float) -> OutputMetrics:
    sig = stats.gain ** 2 * sigma_s ** 2
    return OutputMetrics(
        snr_out=_ratio(sig, stats.noise_var),
        sdr_out=_ratio(sig, stats.nld_var),
        sinad_out=_ratio(sig, stats.noise_var + stats.nld_var),
    )


def adc_output_metrics(spec: QuantizerSpec, point: OperatingPoint,
                       grid: QuadratureGrid | None = None) -> OutputMetrics:
    return metrics_from_stats(decompose(spec, point, grid), point.sigma_s)


def _stats(spec, point, grid=None) -> EquivalentStats:
    if point.sigma_s == 0:
        return small_signal_limits(spec, point.sigma_n)
    return decompose(spec, point, grid)


def nf_from_stats(stats: EquivalentStats, sigma_n: float, m: int) -> float:
    """Worst-case array NF ``(sigma_NO^2 + M sigma_WO^2) / (g_O^2 sigma_N^2)``."""
    return (stats.noise_var + m * stats.nld_var) / (stats.gain ** 2 * sigma_n ** 2)


def nf_max(spec: QuantizerSpec, sf: float, snr_cum_in: float, m: int,
           grid: QuadratureGrid | None = None) -> float:
    """Linear worst-case NF at scaling factor ``sf`` and cumulative input SNR."""
    point = to_operating_point(spec, ScaledPoint.from_cumulative(sf, snr_cum_in, m))
    return nf_from_stats(_stats(spec, point, grid), point.sigma_n, m)


def cumulative_sinad(spec: QuantizerSpec, sf: float, snr_cum_in: float, m: int,
                     grid: QuadratureGrid | None = None) -> float:
    return snr_cum_in / nf_max(spec, sf, snr_cum_in, m, grid)


# ---------------------------------------------------------------------------
# scaling-factor search


@lru_cache(maxsize=200_000)
def _stats_at(bits: int, sf_db: float, snr_adc_in: float):
    spec = make_quantizer(bits)
    point = to_operating_point(spec, ScaledPoint(float(undb(sf_db)), snr_adc_in))
    return _stats(spec, point), point


def _objective(bits, sf_db, snr_adc_in, objective, m):
    stats, point = _stats_at(bits, float(sf_db), float(snr_adc_in))
    if objective == "minimize-NF":
        return nf_from_stats(stats, point.sigma_n, m)
    # maximising SINAD == minimising its reciprocal
    sig = stats.gain ** 2 * point.sigma_s ** 2
    return (stats.noise_var + stats.nld_var) / sig if sig > 0 else math.inf


def _best(cands):
    """Index/value pairs -> the lowest value, ties toward the smaller index."""
    best_val = min(v for _, v in cands)
    tol = _TIE_RTOL * abs(best_val)
    return min(i for i, v in cands if v <= best_val + tol)


def optimal_sf(spec: QuantizerSpec, snr_adc_in: float,
               objective: Literal["maximize-SINAD", "minimize-NF"] = "maximize-SINAD",
               m: int = 1, exhaustive: bool = False) -> float:
    """Best scaling factor (linear) on the 0..30 dB, 0.1 dB grid.

    By default the grid is searched coarse-to-fine: every 1 dB first, then
    every 0.1 dB within +-1 dB of the coarse optimum.  ``exhaustive=True``
    evaluates all 301 grid points.
    """
    return float(undb(SF_GRID_DB[_optimal_sf_index(spec.bits, snr_adc_in, objective, m,
                                                   exhaustive)]))


def _optimal_sf_index(bits, snr_adc_in, objective, m, exhaustive=False):
    if snr_adc_in < 0 or not math.isfinite(snr_adc_in):
        raise ValueError(f"snr_adc_in must be finite and >= 0, got {snr_adc_in}")
    if objective not in ("maximize-SINAD", "minimize-NF"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "maximize-SINAD" and snr_adc_in == 0:
        raise ValueError("SINAD is identically zero at zero input SNR")

    def val(i):
        return _objective(bits, SF_GRID_DB[i], snr_adc_in, objective, m)

    n = len(SF_GRID_DB)
    if exhaustive:
        return _best([(i, val(i)) for i in range(n)])
    coarse = [(i, val(i)) for i in range(0, n, _COARSE_STRIDE)]
    j = _best(coarse)
    lo, hi = max(0, j - _COARSE_STRIDE), min(n - 1, j + _COARSE_STRIDE)
    return _best([(i, val(i)) for i in range(lo, hi + 1)])


def min_nf(spec: QuantizerSpec, snr_cum_in: float, m: int) -> tuple[float, float]:
    """Minimum over the SF grid of the worst-case NF; returns ``(nf, sf)`` linear."""
    snr_adc = snr_cum_in / m
    i = _optimal_sf_index(spec.bits, snr_adc, "minimize-NF", m)
    return _objective(spec.bits, SF_GRID_DB[i], snr_adc, "minimize-NF", m), float(undb(SF_GRID_DB[i]))


def nf_curve(spec: QuantizerSpec, m: int, snr_cum_in_db: Sequence[float]) -> list[NFCurvePoint]:
    rows = []
    for x in snr_cum_in_db:
        nf, sf = min_nf(spec, float(undb(x)), m)
        rows.append(NFCurvePoint(
            snr_cum_in_db=float(x),
            nf_db=float(db(nf)),
            sinad_cum_out_db=float(x - db(nf)),
            sf_opt_db=float(db(sf)),
            bits=spec.bits,
            m=m,
        ))
    return rows


# ---------------------------------------------------------------------------
# resolution methodology


def _min_nf_db(bits, m, snr_cum_db):
    return float(db(min_nf(make_quantizer(bits), float(undb(snr_cum_db)), m)[0]))


def snr_threshold(spec: QuantizerSpec, m: int, nf_limit_db: float) -> float:
    """Cumulative input SNR (dB) at which the SF-optimised NF reaches the limit.

    Scans the search range in 10 dB steps for the first point above the
    limit, then bisects that bracket to 0.05 dB.  Returns ``inf`` when the
    limit is not reached anywhere up to the top of the range.
    """
    if not nf_limit_db > 0:
        raise ValueError(f"nf_limit_db must be > 0, got {nf_limit_db}")
    lo_db, hi_db = THRESHOLD_RANGE_DB
    floor = _min_nf_db(spec.bits, m, lo_db)
    if floor >= nf_limit_db:
        raise NoSolutionError(
            f"{spec.bits}-bit NF floor {floor:.3f} dB is not below the {nf_limit_db} dB limit",
            best_nf_db=floor,
        )
    prev = lo_db
    for x in np.arange(lo_db + _THRESHOLD_SCAN_DB, hi_db + 1e-9, _THRESHOLD_SCAN_DB):
        if _min_nf_db(spec.bits, m, float(x)) > nf_limit_db:
            a, b = prev, float(x)
            while b - a > THRESHOLD_TOL_DB:
                mid = 0.5 * (a + b)
                if _min_nf_db(spec.bits, m, mid) > nf_limit_db:
                    b = mid
                else:
                    a = mid
            return 0.5 * (a + b)
        prev = float(x)
    return math.inf


def resolution_for(m: int, snr_cum_in_db: float, nf_limit_db: float, max_bits: int = 16) -> int:
    """Smallest resolution whose NF threshold lies at or above ``snr_cum_in_db``.

    Because the SF-optimised NF is nondecreasing in cumulative SNR, this is the
    smallest resolution whose NF at ``snr_cum_in_db`` is within the limit.
    """
    if not 1 <= max_bits <= 16:
        raise ValueError(f"max_bits must be in 1..16, got {max_bits}")
    best = math.inf
    for bits in range(1, max_bits + 1):
        if snr_cum_in_db == -math.inf:
            nf = float(db(small_signal_nf(make_quantizer(bits))))
        else:
            nf = _min_nf_db(bits, m, snr_cum_in_db)
        best = min(best, nf)
        if nf <= nf_limit_db:
            return bits
    raise NoSolutionError(
        f"no resolution up to {max_bits} bits meets {nf_limit_db} dB at {snr_cum_in_db} dB",
        best_nf_db=best,
    )


def small_signal_nf(spec: QuantizerSpec) -> float:
    """NF floor as the cumulative SNR vanishes, minimised over the SF grid."""
    vals = []
    for sf_db in SF_GRID_DB:
        sigma_n = spec.R / math.sqrt(float(undb(sf_db)))
        vals.append(nf_from_stats(small_signal_limits(spec, sigma_n), sigma_n, 1))
    return min(vals)


def effective_antenna_count(signal_vars: Sequence[float]) -> float:
    v = np.asarray(signal_vars, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("signal_vars must be a nonempty 1-D sequence")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("signal variances must be finite and >= 0")
    peak = v.max()
    if peak == 0:
        raise ValueError("at least one signal variance must be positive")
    return float(v.sum() / peak)
