"""Equivalent model of a quantizer driven by a Gaussian desired signal plus
independent Gaussian input noise.

The quantizer output is split as ``s_O = g_O*s_I + w_O + n_O`` where
``F(s_I) = E[s_O | s_I]`` is the noise-smoothed transfer function, ``n_O =
s_O - F(s_I)`` is white equivalent output noise and ``w_O = F(s_I) - g_O*s_I``
is the nonlinear distortion (a function of the desired signal only).

All variances are per real dimension.  The complex (I/Q pair) values are
exactly twice as large; see :attr:`EquivalentStats.complex_noise_var`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, ndtr

from .errors import ConsistencyError, DegenerateInputError
from .quantizer import QuantizerSpec, quantize

# Beyond this many noise standard deviations a threshold's CDF is exactly 0 or 1
# in double precision (to well below the 1e-15 level).
_WINDOW_SIGMAS = 10.0
# exp(-x^2/2) underflows to exactly 0.0 for |x| > ~38.6
_PDF_CUTOFF = 40.0
_FULL_MATRIX_MAX_THRESHOLDS = 64
_CHUNK_ELEMENTS = 1 << 21
VARIANCE_SLACK = 1e-10
SIGNAL_HALF_WIDTH_SIGMAS = 8.0

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class OperatingPoint:
    """Noise and desired-signal standard deviations per real dimension."""

    sigma_n: float
    sigma_s: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma_n) and math.isfinite(self.sigma_s)):
            raise ValueError("operating point must be finite")
        if self.sigma_n <= 0:
            raise ValueError(f"sigma_n must be > 0, got {self.sigma_n}")
        if self.sigma_s < 0:
            raise ValueError(f"sigma_s must be >= 0, got {self.sigma_s}")

    @property
    def snr(self) -> float:
        return (self.sigma_s / self.sigma_n) ** 2


@dataclass(frozen=True)
class EquivalentStats:
    gain: float
    noise_var: float
    nld_var: float

    @property
    def complex_noise_var(self) -> float:
        return 2.0 * self.noise_var

    @property
    def complex_nld_var(self) -> float:
        return 2.0 * self.nld_var


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform integration grid ``[-half_width, half_width]`` with spacing ``step``."""

    half_width: float
    step: float

    def __post_init__(self):
        if not (math.isfinite(self.half_width) and math.isfinite(self.step)):
            raise ValueError("grid parameters must be finite")
        if self.half_width <= 0 or self.step <= 0:
            raise ValueError(f"invalid grid: half_width={self.half_width}, step={self.step}")
        if self.step > self.half_width:
            raise ValueError("grid step exceeds half width")

    @classmethod
    def for_point(cls, point: OperatingPoint) -> "QuadratureGrid":
        """Signal-integral grid: +-8 total std, step 0.01 of the smaller std.

        The half width matters at large arrays: the worst-case NF scales the
        NLD variance by M, and truncating the Gaussian at 5 std already leaves
        a spurious NLD of about 5e-6 of the signal power.

        When the noise is the smaller std the step is floored at 1e-4 of the
        half width to bound the node count.  No floor is needed the other way
        round: nodes beyond 40 signal std carry zero weight and are skipped,
        while a step wider than the signal std would bias every moment.
        """
        half = SIGNAL_HALF_WIDTH_SIGMAS * math.hypot(point.sigma_s, point.sigma_n)
        if point.sigma_s < point.sigma_n:
            return cls(half, 0.01 * point.sigma_s)
        return cls(half, max(0.01 * point.sigma_n, 1e-4 * half))

    @classmethod
    def for_noise(cls, sigma_n: float) -> "QuadratureGrid":
        """Noise-integral grid used by the direct convolution quadrature."""
        return cls(12.0 * sigma_n, 0.01 * sigma_n)


def _check_sigma_n(sigma_n):
    if not (math.isfinite(sigma_n) and sigma_n > 0):
        raise ValueError(f"sigma_n must be finite and > 0, got {sigma_n}")


# ---------------------------------------------------------------------------
# closed forms


def level_probabilities(spec: QuantizerSpec, sigma_n: float, s_i):
    """``Pr(s_O = q_r | s_I)`` for every level; last axis has length R."""
    _check_sigma_n(sigma_n)
    s = np.asarray(s_i, dtype=float)
    scale = _SQRT2 * sigma_n
    # Pr(s_I + n_I < t) for every decision threshold t
    below = 0.5 * (1.0 + erf((spec.thresholds - s[..., None]) / scale))
    lead = np.zeros(s.shape + (1,))
    return np.diff(np.concatenate([lead, below, lead + 1.0], axis=-1), axis=-1)


def _threshold_sums(spec: QuantizerSpec, sigma_n: float, s: np.ndarray):
    """Return ``A = sum_i Phi((s - t_i)/sigma_n)`` and ``B = sum_i t_i Phi(.)``.

    With these, ``F = -(R-1) + 2A`` and ``V = (R-1)^2 + 4B``, which is
    ``sum_r q_r P_r`` and ``sum_r q_r^2 P_r`` after summation by parts.
    """
    t = spec.thresholds
    nt = t.size
    s = np.ravel(s)
    A = np.empty_like(s)
    B = np.empty_like(s)
    width = int(math.ceil(2 * _WINDOW_SIGMAS * sigma_n / spec.delta)) + 2
    if nt <= _FULL_MATRIX_MAX_THRESHOLDS or width >= nt:
        chunk = max(1, _CHUNK_ELEMENTS // nt)
        for a in range(0, s.size, chunk):
            z = ndtr((s[a:a + chunk, None] - t) / sigma_n)
            A[a:a + chunk] = z.sum(axis=1)
            B[a:a + chunk] = z @ t
        return A, B
    prefix = np.concatenate([[0.0], np.cumsum(t)])
    offs = np.arange(width)
    chunk = max(1, _CHUNK_ELEMENTS // width)
    for a in range(0, s.size, chunk):
        sc = s[a:a + chunk]
        lo = np.searchsorted(t, sc - _WINDOW_SIGMAS * sigma_n)
        idx = lo[:, None] + offs
        valid = idx < nt
        tt = t[np.minimum(idx, nt - 1)]
        z = np.where(valid, ndtr((sc[:, None] - tt) / sigma_n), 0.0)
        A[a:a + chunk] = lo + z.sum(axis=1)
        B[a:a + chunk] = prefix[lo] + (z * tt).sum(axis=1)
    return A, B


def _F_V(spec, sigma_n, s):
    s = np.asarray(s, dtype=float)
    A, B = _threshold_sums(spec, sigma_n, s)
    F = -(spec.R - 1) + 2.0 * A
    V = (spec.R - 1) ** 2 + 4.0 * B
    return F.reshape(s.shape), V.reshape(s.shape)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def transfer_F(spec: QuantizerSpec, sigma_n: float, s_i):
    """Conditional mean of the quantizer output given the desired input."""
    _check_sigma_n(sigma_n)
    return _scalar_or_array(_F_V(spec, sigma_n, s_i)[0])


def energy_V(spec: QuantizerSpec, sigma_n: float, s_i):
    """Conditional second moment of the quantizer output."""
    _check_sigma_n(sigma_n)
    return _scalar_or_array(_F_V(spec, sigma_n, s_i)[1])


def transfer_and_energy(spec: QuantizerSpec, sigma_n: float, s_i):
    _check_sigma_n(sigma_n)
    F, V = _F_V(spec, sigma_n, s_i)
    return _scalar_or_array(F), _scalar_or_array(V)


# ---------------------------------------------------------------------------
# direct quadrature of the noise convolution (independent of erf)


def _simpson_piece(a, b, step):
    n = max(2, int(math.ceil((b - a) / step)))
    n += n % 2
    x = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return x, w * ((b - a) / (3.0 * n))


def _convolution_moments(spec, sigma_n, s_i, grid):
    if not isinstance(grid, QuadratureGrid):
        raise ValueError("grid must be a QuadratureGrid")
    h = grid.half_width
    # breakpoints where s_i + n crosses a decision threshold
    cuts = spec.thresholds - s_i
    edges = np.concatenate([[-h], cuts[(cuts > -h) & (cuts < h)], [h]])
    m1 = 0.0
    m2 = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        q = quantize(spec, s_i + 0.5 * (a + b))
        x, w = _simpson_piece(a, b, grid.step)
        mass = float(np.dot(w, np.exp(-0.5 * (x / sigma_n) ** 2))) * _INV_SQRT_2PI / sigma_n
        m1 += q * mass
        m2 += q * q * mass
    return m1, m2


def transfer_F_numeric(spec: QuantizerSpec, sigma_n: float, s_i: float,
                       grid: QuadratureGrid | None = None) -> float:
    """Quadrature of ``int Q(s_i + n) p_N(n) dn``; cross-check for :func:`transfer_F`.

    The integration range is split at the decision thresholds so each piece
    has a constant quantizer output, then composite Simpson is applied to the
    noise density on each piece with spacing at most ``grid.step``.
    """
    _check_sigma_n(sigma_n)
    grid = grid if grid is not None else QuadratureGrid.for_noise(sigma_n)
    return _convolution_moments(spec, sigma_n, float(s_i), grid)[0]


def energy_V_numeric(spec: QuantizerSpec, sigma_n: float, s_i: float,
                     grid: QuadratureGrid | None = None) -> float:
    _check_sigma_n(sigma_n)
    grid = grid if grid is not None else QuadratureGrid.for_noise(sigma_n)
    return _convolution_moments(spec, sigma_n, float(s_i), grid)[1]


# ---------------------------------------------------------------------------
# expectations over the Gaussian desired signal


@dataclass(frozen=True)
class SignalMoments:
    """Trapezoid estimates of E[s F(s)], E[F^2], E[V] under s ~ N(0, sigma_s^2)."""

    sF: float
    F2: float
    V: float


def _signal_nodes(point: OperatingPoint, grid: QuadratureGrid):
    # All integrands are even in s, so fold the symmetric grid onto s >= 0.
    K = int(math.floor(grid.half_width / grid.step + 1e-9))
    K_eff = min(K, int(math.floor(_PDF_CUTOFF * point.sigma_s / grid.step)))
    k = np.arange(K_eff + 1)
    s = k * grid.step
    w = np.full(K_eff + 1, 2.0 * grid.step)
    w[0] = grid.step
    if K_eff == K:
        w[-1] = grid.step
    return s, w


def signal_moments(spec: QuantizerSpec, point: OperatingPoint,
                   grid: QuadratureGrid | None = None) -> SignalMoments:
    if point.sigma_s <= 0:
        raise DegenerateInputError("sigma_s must be > 0 for signal expectations")
    grid = grid if grid is not None else QuadratureGrid.for_point(point)
    s, w = _signal_nodes(point, grid)
    F, V = _F_V(spec, point.sigma_n, s)
    p = w * np.exp(-0.5 * (s / point.sigma_s) ** 2) * (_INV_SQRT_2PI / point.sigma_s)
    return SignalMoments(sF=float(np.dot(p, s * F)), F2=float(np.dot(p, F * F)),
                         V=float(np.dot(p, V)))


def _clamp(v, what):
    if v < -VARIANCE_SLACK:
        raise ConsistencyError(f"{what} is negative: {v:.3e}")
    return max(v, 0.0)


def _stats_from_moments(mom: SignalMoments, sigma_s: float) -> EquivalentStats:
    g = mom.sF / sigma_s ** 2
    return EquivalentStats(
        gain=g,
        noise_var=_clamp(mom.V - mom.F2, "equivalent noise variance"),
        nld_var=_clamp(mom.F2 - g * g * sigma_s ** 2, "NLD variance"),
    )


def bussgang_gain(spec: QuantizerSpec, point: OperatingPoint,
                  grid: QuadratureGrid | None = None) -> float:
    return signal_moments(spec, point, grid).sF / point.sigma_s ** 2


def small_signal_limits(spec: QuantizerSpec, sigma_n: float) -> EquivalentStats:
    """Equivalent statistics in the limit sigma_s -> 0.

    The gain tends to the slope of F at the origin, the NLD vanishes and the
    equivalent noise tends to V(0) - F(0)^2.  For one bit this gives
    ``sqrt(2/(pi*sigma_n^2))``, 1 and 0.
    """
    _check_sigma_n(sigma_n)
    t = spec.thresholds
    slope = 2.0 * float(np.sum(np.exp(-0.5 * (t / sigma_n) ** 2))) * _INV_SQRT_2PI / sigma_n
    F0, V0 = _F_V(spec, sigma_n, np.zeros(1))
    return EquivalentStats(gain=slope, noise_var=_clamp(float(V0[0] - F0[0] ** 2), "noise"),
                           nld_var=0.0)


def equiv_noise_var(spec: QuantizerSpec, point: OperatingPoint,
                    grid: QuadratureGrid | None = None) -> float:
    if point.sigma_s == 0:
        return small_signal_limits(spec, point.sigma_n).noise_var
    mom = signal_moments(spec, point, grid)
    return _clamp(mom.V - mom.F2, "equivalent noise variance")


def nld_var(spec: QuantizerSpec, point: OperatingPoint,
            grid: QuadratureGrid | None = None) -> float:
    mom = signal_moments(spec, point, grid)
    return _stats_from_moments(mom, point.sigma_s).nld_var


def decompose(spec: QuantizerSpec, point: OperatingPoint,
              grid: QuadratureGrid | None = None) -> EquivalentStats:
    """Gain, equivalent-noise variance and NLD variance at one operating point."""
    return _stats_from_moments(signal_moments(spec, point, grid), point.sigma_s)


@dataclass(frozen=True)
class DirectMoments:
    """Residual powers integrated directly rather than by difference of moments."""

    sigma_s: float
    gain: float
    nld_var: float       # int (F - g s)^2 p
    noise_var: float     # int (V - F^2) p
    output_power: float  # int V p

    @property
    def identity_residual(self) -> float:
        """Relative error of ``g^2 sigma_s^2 + sigma_WO^2 + sigma_NO^2 = E[s_O^2]``."""
        lhs = self.gain ** 2 * self.sigma_s ** 2 + self.nld_var + self.noise_var
        return abs(lhs - self.output_power) / self.output_power


def direct_moments(spec: QuantizerSpec, point: OperatingPoint, gain: float | None = None,
                   grid: QuadratureGrid | None = None) -> DirectMoments:
    """Integrate ``(F - g s)^2``, ``V - F^2`` and ``V`` against the signal density.

    With the Bussgang gain the cross term cancels and the three powers add up
    to the output power; any other ``gain`` breaks that balance.
    """
    if point.sigma_s <= 0:
        raise DegenerateInputError("sigma_s must be > 0 for signal expectations")
    grid = grid if grid is not None else QuadratureGrid.for_point(point)
    s, w = _signal_nodes(point, grid)
    F, V = _F_V(spec, point.sigma_n, s)
    p = w * np.exp(-0.5 * (s / point.sigma_s) ** 2) * (_INV_SQRT_2PI / point.sigma_s)
    g = float(np.dot(p, s * F)) / point.sigma_s ** 2 if gain is None else float(gain)
    return DirectMoments(
        sigma_s=point.sigma_s,
        gain=g,
        nld_var=float(np.dot(p, (F - g * s) ** 2)),
        noise_var=float(np.dot(p, V - F * F)),
        output_power=float(np.dot(p, V)),
    )


def output_power(spec: QuantizerSpec, point: OperatingPoint,
                 grid: QuadratureGrid | None = None) -> float:
    """``E[s_O^2] = int V(sigma_s x) p(x) dx`` on the same grid as :func:`decompose`."""
    return signal_moments(spec, point, grid).V


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


MC_CHUNK = 1 << 17


def seeded_chunks(seed, n: int, chunk: int = MC_CHUNK):
    """Split ``n`` draws into fixed-size chunks with independent child streams.

    The decomposition depends only on ``(seed, n, chunk)``, so results do not
    depend on how chunks are scheduled.
    """
    sizes = [min(chunk, n - a) for a in range(0, n, chunk)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(np.random.default_rng(c), sz) for c, sz in zip(children, sizes)]


def map_chunks(fn, chunks, workers: int | None = None):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda c: fn(*c), chunks))
    return [fn(*c) for c in chunks]


@dataclass(frozen=True)
class MonteCarloStats:
    n: int
    seed: int
    gain: float
    gain_se: float
    noise_var: float
    noise_var_se: float
    nld_var: float
    nld_var_se: float
    mean_noise: float
    mean_nld: float
    # correlation coefficients; all should vanish
    corr_noise_signal: float
    corr_nld_signal: float
    corr_noise_nld: float
    lag1_noise: float
    # standard errors of the four correlations under the null of zero
    # correlation; products like w_O*s_I are heteroscedastic, so these can
    # sit well above 1/sqrt(n)
    corr_se: tuple = (math.nan,) * 4

    @property
    def tolerance(self) -> float:
        return 4.0 / math.sqrt(self.n)

    def calibrated_tolerances(self, k: float = 4.0) -> dict:
        """``k`` standard errors per correlation, never below ``k/sqrt(n)``."""
        floor = 1.0 / math.sqrt(self.n)
        return {name: k * max(se, floor) for name, se in zip(self.correlations(), self.corr_se)}

    def correlations(self) -> dict:
        return {
            "E[n_O s_I]": self.corr_noise_signal,
            "E[w_O s_I]": self.corr_nld_signal,
            "E[n_O w_O]": self.corr_noise_nld,
            "E[n_O(k) n_O(k+1)]": self.lag1_noise,
        }


def monte_carlo_stats(spec: QuantizerSpec, point: OperatingPoint, n_samples: int,
                      seed: int = 0, grid: QuadratureGrid | None = None,
                      workers: int | None = None) -> MonteCarloStats:
    """Sample-based estimates of the decomposition and its orthogonality.

    Draws ``s_I ~ N(0, sigma_s^2)`` and ``n_I ~ N(0, sigma_n^2)``, forms
    ``n_O = Q(s_I + n_I) - F(s_I)`` and ``w_O = F(s_I) - g_O s_I`` with the
    quadrature value of ``g_O``.
    """
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 1e4, got {n_samples}")
    if point.sigma_s <= 0:
        raise DegenerateInputError("sigma_s must be > 0")
    g_model = bussgang_gain(spec, point, grid)

    def draw(rng, size):
        s = rng.standard_normal(size) * point.sigma_s
        so = quantize(spec, s + rng.standard_normal(size) * point.sigma_n)
        F = transfer_F(spec, point.sigma_n, s)
        n_o = so - F
        w_o = F - g_model * s
        sums = {
            "s": s.sum(), "n": n_o.sum(), "w": w_o.sum(),
            "ss": s @ s, "nn": n_o @ n_o, "ww": w_o @ w_o,
            "sn": s @ n_o, "sw": s @ w_o, "nw": n_o @ w_o,
            "lag": n_o[:-1] @ n_o[1:],
            "lag2": (n_o[:-1] ** 2) @ (n_o[1:] ** 2),
            "s2n2": (s * s) @ (n_o * n_o), "s2w2": (s * s) @ (w_o * w_o),
            "n2w2": (n_o * n_o) @ (w_o * w_o),
            "n4": np.sum(n_o ** 4), "w4": np.sum(w_o ** 4), "s4": np.sum(s ** 4),
            "sso": s @ so, "sso2": np.sum((s * so) ** 2), "s3so": np.sum(s ** 3 * so),
        }
        return n_o[0], n_o[-1], sums

    parts = map_chunks(draw, seeded_chunks(seed, n_samples), workers)
    tot = {k: float(sum(p[2][k] for p in parts)) for k in parts[0][2]}
    # lag-1 products across chunk seams keep the sequence contiguous
    tot["lag"] += sum(parts[i][1] * parts[i + 1][0] for i in range(len(parts) - 1))
    tot["lag2"] += sum((parts[i][1] * parts[i + 1][0]) ** 2 for i in range(len(parts) - 1))
    n = n_samples
    E = {k: v / n for k, v in tot.items()}

    def cov(a, b):
        return E[a + b] - E[a] * E[b]

    def corr(a, b):
        return cov(a, b) / math.sqrt(cov(a, a) * cov(b, b))

    g_hat = E["sso"] / E["ss"]
    # delta method on the ratio of means
    u2 = E["sso2"] - 2 * g_hat * E["s3so"] + g_hat ** 2 * E["s4"]
    lag = tot["lag"] / (n - 1) - E["n"] ** 2

    def null_se(a, b):
        # SD of mean(a*b) / sqrt(E[a^2] E[b^2]) when E[a*b] = 0
        return math.sqrt(E[a + "2" + b + "2"] / (E[a + a] * E[b + b]) / n)

    lag_se = math.sqrt(tot["lag2"] / (n - 1) / E["nn"] ** 2 / (n - 1))
    return MonteCarloStats(
        n=n, seed=seed,
        gain=g_hat,
        gain_se=math.sqrt(max(u2, 0.0) / n) / E["ss"],
        noise_var=E["nn"],
        noise_var_se=math.sqrt(max(E["n4"] - E["nn"] ** 2, 0.0) / n),
        nld_var=E["ww"],
        nld_var_se=math.sqrt(max(E["w4"] - E["ww"] ** 2, 0.0) / n),
        mean_noise=E["n"],
        mean_nld=E["w"],
        corr_noise_signal=corr("s", "n"),
        corr_nld_signal=corr("s", "w"),
        corr_noise_nld=corr("n", "w"),
        lag1_noise=lag / cov("n", "n"),
        corr_se=(null_se("s", "n"), null_se("s", "w"), null_se("n", "w"), lag_se),
    )
