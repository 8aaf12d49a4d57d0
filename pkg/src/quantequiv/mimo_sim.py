"""Monte-Carlo uplink MIMO link with an array of low-resolution ADCs.

Line-of-sight channel ``h_k(m) = g_k c_k(m)`` with uniform-linear-array
steering ``c_k(m) = exp(j pi m sin(alpha_k))``, ``m = 1..M``.  Every entry
point takes an integer seed; work is split into fixed batches with child
streams from :class:`numpy.random.SeedSequence`, so results depend only on
the seed and the requested sizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr
from scipy.stats import binomtest

from .equiv_model import OperatingPoint, decompose, transfer_F
from .errors import RankError
from .metrics import ScaledPoint, db, min_nf, to_operating_point, undb
from .quantizer import QuantizerSpec, quantize, quantize_complex

BATCH = 2048


# ---------------------------------------------------------------------------
# channel


def steering_vectors(m: int, aoas) -> np.ndarray:
    """``(K, M)`` array of ``exp(j pi m sin(alpha_k))`` for ``m = 1..M``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    a = np.atleast_1d(np.asarray(aoas, dtype=float))
    idx = np.arange(1, m + 1)
    return np.exp(1j * np.pi * idx[None, :] * np.sin(a)[:, None])


@dataclass(frozen=True)
class LosChannel:
    gains: np.ndarray      # (K,)
    steering: np.ndarray   # (K, M)

    @property
    def H(self) -> np.ndarray:
        """``M x K`` channel matrix."""
        return (self.steering * self.gains[:, None]).T


def los_channel(m: int, k: int, gains, aoas) -> LosChannel:
    if k < 1 or m < 1:
        raise ValueError("need k >= 1 and m >= 1")
    g = np.asarray(gains, dtype=complex).reshape(-1)
    if g.size != k or np.size(aoas) != k:
        raise ValueError("gains and aoas must both have k entries")
    return LosChannel(g, steering_vectors(m, aoas))


@dataclass(frozen=True)
class ArrayConfig:
    """One uplink scenario.

    ``sigma_x`` and ``sigma_n`` are per-real-dimension standard deviations;
    the desired signal at every antenna then has ``sigma_s^2 = sum|g_k|^2
    sigma_x^2`` per real dimension.
    """

    spec: QuantizerSpec
    gains: np.ndarray
    steering: np.ndarray
    sigma_x: float
    sigma_n: float

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex).reshape(-1)
        c = np.atleast_2d(np.asarray(self.steering, dtype=complex))
        if c.shape[0] != g.size:
            raise ValueError("steering must have one row per user")
        if not np.allclose(np.abs(c), 1.0, atol=1e-12):
            raise ValueError("steering coefficients must have unit modulus")
        if self.sigma_n <= 0 or self.sigma_x < 0:
            raise ValueError("need sigma_n > 0 and sigma_x >= 0")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "steering", c)

    @property
    def m(self) -> int:
        return self.steering.shape[1]

    @property
    def k(self) -> int:
        return self.steering.shape[0]

    @property
    def H(self) -> np.ndarray:
        return (self.steering * self.gains[:, None]).T

    @property
    def sigma_s(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.gains) ** 2))) * self.sigma_x

    @property
    def point(self) -> OperatingPoint:
        return OperatingPoint(self.sigma_n, self.sigma_s)

    @property
    def sf(self) -> float:
        return self.spec.R ** 2 / (self.sigma_s ** 2 + self.sigma_n ** 2)

    @property
    def snr_cum_in(self) -> float:
        return self.m * (self.sigma_s / self.sigma_n) ** 2

    def adc_gain(self) -> float:
        """Equivalent ADC gain from the model at this operating point."""
        return decompose(self.spec, self.point).gain

    @classmethod
    def single_user(cls, spec: QuantizerSpec, m: int, snr_cum_in_db: float,
                    aoa: float = 0.0, sf_db: float | None = None) -> "ArrayConfig":
        """K=1, unit gain, scaled to a cumulative input SNR.

        The scaling factor defaults to the NF-optimal grid value.
        """
        snr_cum = float(undb(snr_cum_in_db))
        if sf_db is None:
            sf = min_nf(spec, snr_cum, m)[1]
        else:
            sf = float(undb(sf_db))
        p = to_operating_point(spec, ScaledPoint.from_cumulative(sf, snr_cum, m))
        return cls(spec, np.array([1.0 + 0j]), steering_vectors(m, [aoa]), p.sigma_s, p.sigma_n)

    def with_steering(self, steering) -> "ArrayConfig":
        return ArrayConfig(self.spec, self.gains, steering, self.sigma_x, self.sigma_n)


# ---------------------------------------------------------------------------
# snapshots and detectors


@dataclass
class Snapshot:
    x: np.ndarray    # (N, K) user symbols
    s_i: np.ndarray  # (N, M) desired signal
    n_i: np.ndarray  # (N, M) input noise
    s_o: np.ndarray  # (N, M) quantized observations


def _cgauss(rng, shape, sigma):
    return sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_snapshot(config: ArrayConfig, rng: np.random.Generator, n: int = 1) -> Snapshot:
    x = _cgauss(rng, (n, config.k), config.sigma_x)
    s_i = x @ config.H.T
    n_i = _cgauss(rng, (n, config.m), config.sigma_n)
    return Snapshot(x, s_i, n_i, quantize_complex(config.spec, s_i + n_i))


def simulate_snapshot(config: ArrayConfig, seed: int, n: int = 1) -> Snapshot:
    """``n`` independent snapshots; deterministic per seed."""
    return draw_snapshot(config, np.random.default_rng(seed), n)


def mrc_estimate(config: ArrayConfig, s_o, g_o: float = 1.0) -> np.ndarray:
    """Per-user MRC estimates normalised by the ADC gain; ``s_o`` is ``(..., M)``."""
    if not g_o > 0:
        raise ValueError(f"g_o must be > 0, got {g_o}")
    g = config.gains
    if np.any(g == 0):
        raise ValueError("MRC needs nonzero user gains")
    combined = np.asarray(s_o) @ config.steering.conj().T
    return combined * (np.conj(g) / (config.m * np.abs(g) ** 2)) / g_o


def _solve_normal(config, s_o, loading):
    H = config.H
    G = H.conj().T @ H + loading * np.eye(config.k)
    if config.k > config.m and loading == 0:
        raise RankError("zero forcing needs K <= M")
    if np.linalg.cond(G) > 1e12:
        raise RankError("normal matrix is numerically singular")
    front = np.asarray(s_o) @ H.conj()
    return np.linalg.solve(G, front.T).T


def zf_estimate(config: ArrayConfig, s_o) -> np.ndarray:
    return _solve_normal(config, s_o, 0.0)


def mmse_estimate(config: ArrayConfig, s_o, noise_over_signal: float) -> np.ndarray:
    if noise_over_signal < 0:
        raise ValueError("noise_over_signal must be >= 0")
    return _solve_normal(config, s_o, noise_over_signal)


# ---------------------------------------------------------------------------
# empirical noise figure


def _batches(seed, total, batch=BATCH):
    sizes = [min(batch, total - a) for a in range(0, total, batch)]
    kids = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(np.random.default_rng(s), n) for s, n in zip(kids, sizes)]


@dataclass(frozen=True)
class SimReport:
    trials: int
    seed: int
    nf_db: np.ndarray           # per user
    nf_db_se: np.ndarray
    sinad_db: np.ndarray        # empirical post-MRC SINAD, quantized receiver
    residual_corr: np.ndarray   # |corr(x_hat - x, x)| per user, should vanish

    @property
    def worst_nf_db(self) -> float:
        return float(np.max(self.nf_db))

    @property
    def worst_user(self) -> int:
        return int(np.argmax(self.nf_db))


def empirical_nf(config: ArrayConfig, trials: int, seed: int = 0,
                 g_o: float | None = None) -> SimReport:
    """Estimate-error variance ratio of the quantized and ideal-ADC MRC receivers.

    Both receivers see the same snapshots; the quantized one is normalised by
    the model ADC gain unless ``g_o`` is given.
    """
    if trials < 1000:
        raise ValueError(f"trials must be >= 1000, got {trials}")
    g_o = config.adc_gain() if g_o is None else g_o
    K = config.k
    acc = np.zeros((7, K))
    acc_c = np.zeros(K, dtype=complex)
    for rng, n in _batches(seed, trials):
        snap = draw_snapshot(config, rng, n)
        e_q = mrc_estimate(config, snap.s_o, g_o) - snap.x
        e_i = mrc_estimate(config, snap.s_i + snap.n_i, 1.0) - snap.x
        a = np.abs(e_q) ** 2
        b = np.abs(e_i) ** 2
        acc += np.stack([a.sum(0), b.sum(0), (a * a).sum(0), (b * b).sum(0), (a * b).sum(0),
                         (np.abs(snap.x) ** 2).sum(0), np.zeros(K)])
        acc_c += (e_q * np.conj(snap.x)).sum(0)
    n = trials
    ma, mb, maa, mbb, mab, mx = (acc[i] / n for i in range(6))
    ratio = ma / mb
    var = (maa - ma ** 2) - 2 * ratio * (mab - ma * mb) + ratio ** 2 * (mbb - mb ** 2)
    se = np.sqrt(np.maximum(var, 0) / n) / mb
    return SimReport(
        trials=n, seed=seed,
        nf_db=db(ratio),
        nf_db_se=10 / np.log(10) * se / ratio,
        sinad_db=db(mx / ma),
        residual_corr=np.abs(acc_c / n) / np.sqrt(ma * mx),
    )


# ---------------------------------------------------------------------------
# NLD coherence


@dataclass(frozen=True)
class CoherenceProfile:
    corr: np.ndarray     # (M,) complex correlation with antenna 1
    corr_se: np.ndarray  # (M,) standard errors of the real part
    trials: int
    seed: int

    @property
    def mean_abs(self) -> float:
        """Mean ``|corr|`` over antennas 2..M."""
        return float(np.mean(np.abs(self.corr[1:])))


def nld_coherence_probe(config: ArrayConfig, trials: int, seed: int = 0) -> CoherenceProfile:
    """Correlation of the de-rotated per-antenna NLD with that of antenna 1.

    ``w(m) = F(s_I(m)) - g_O s_I(m)`` is evaluated per real dimension; the
    input noise never enters, as the NLD depends on the desired signal only.
    """
    if config.k != 1:
        raise ValueError("coherence probe needs a single user")
    g_o = config.adc_gain()
    sn = config.sigma_n
    M = config.m
    c = config.steering[0]
    s_ab = np.zeros(M, dtype=complex)
    s_ab2 = np.zeros(M)
    s_aa = np.zeros(M)
    for rng, n in _batches(seed, trials):
        x = _cgauss(rng, (n, 1), config.sigma_x)
        s_i = x @ config.H.T
        F = transfer_F(config.spec, sn, s_i.real) + 1j * transfer_F(config.spec, sn, s_i.imag)
        a = np.conj(c) * (F - g_o * s_i)
        prod = a * np.conj(a[:, :1])
        s_ab += prod.sum(0)
        s_ab2 += (prod.real ** 2).sum(0)
        s_aa += (np.abs(a) ** 2).sum(0)
    n = trials
    norm = np.sqrt(s_aa / n * s_aa[0] / n)
    mean = s_ab / n
    se = np.sqrt(np.maximum(s_ab2 / n - mean.real ** 2, 0) / n) / norm
    return CoherenceProfile(mean / norm, se, n, seed)


# ---------------------------------------------------------------------------
# OFDM / QAM64 link


_GRAY8 = np.array([i ^ (i >> 1) for i in range(8)])
_PAM8 = np.arange(-7, 8, 2) / math.sqrt(42.0)
_POPCOUNT = np.array([bin(i).count("1") for i in range(8)])


def qam64_modulate(bits) -> np.ndarray:
    """Gray-mapped square 64-QAM with unit mean energy; 6 bits per symbol."""
    b = np.asarray(bits, dtype=np.int64).reshape(-1, 6)
    w = 1 << np.arange(2, -1, -1)
    inv = np.argsort(_GRAY8)
    return _PAM8[inv[b[:, :3] @ w]] + 1j * _PAM8[inv[b[:, 3:] @ w]]


def _pam8_index(y):
    return np.clip(np.rint((y * math.sqrt(42.0) + 7.0) / 2.0), 0, 7).astype(np.int64)


def qam64_demodulate(symbols) -> np.ndarray:
    """Hard nearest-point decision, returned as bits ``(N, 6)``."""
    z = np.asarray(symbols).reshape(-1)
    gi = _GRAY8[_pam8_index(z.real)]
    gq = _GRAY8[_pam8_index(z.imag)]
    sh = np.arange(2, -1, -1)
    return np.concatenate([(gi[:, None] >> sh) & 1, (gq[:, None] >> sh) & 1], axis=1)


def qam64_ber_awgn(snr) -> np.ndarray:
    """Exact bit error rate of Gray 64-QAM in complex AWGN at ``Es/N0 = snr``."""
    snr = np.atleast_1d(np.asarray(snr, dtype=float))
    sigma = np.sqrt(1.0 / (2.0 * snr))  # per real dimension
    edges = np.concatenate([[-np.inf], 0.5 * (_PAM8[1:] + _PAM8[:-1]), [np.inf]])
    ber = np.zeros_like(snr)
    for i in range(8):
        upper = ndtr((edges[1:, None] - _PAM8[i]) / sigma)
        lower = ndtr((edges[:-1, None] - _PAM8[i]) / sigma)
        p = upper - lower  # (8, len(snr)) decision probabilities
        flips = _POPCOUNT[_GRAY8 ^ _GRAY8[i]]
        ber += flips @ p
    ber /= 8 * 3
    return ber if ber.size > 1 else ber[0]


def ber_equivalent_snr_db(ber: float) -> float:
    """SNR (dB) at which ideal Gray 64-QAM in AWGN has bit error rate ``ber``."""
    if not qam64_ber_awgn(undb(40.0)) < ber < qam64_ber_awgn(undb(-30.0)):
        return math.nan
    return brentq(lambda x: math.log(qam64_ber_awgn(undb(x))) - math.log(ber), -30.0, 40.0,
                  xtol=1e-6)


@dataclass(frozen=True)
class OfdmGeometry:
    n_fft: int = 256
    used_subcarriers: int = 256

    def __post_init__(self):
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 1 <= self.used_subcarriers <= self.n_fft:
            raise ValueError("used_subcarriers must be in 1..n_fft")

    @property
    def used(self) -> np.ndarray:
        # centred block of subcarriers, DC included when everything is used
        start = (self.n_fft - self.used_subcarriers) // 2
        return (np.arange(self.used_subcarriers) + start - self.n_fft // 2) % self.n_fft


@dataclass(frozen=True)
class BerPoint:
    snr_cum_in_db: float
    channel: str
    bits: int
    m: int
    sf_db: float
    bit_errors: int
    bits_sent: int
    trials: int
    ber: float
    ber_lo: float
    ber_hi: float
    evm_nf_db: float      # NF from the post-MRC error power of the OFDM link
    ber_nf_db: float      # SNR loss implied by the BER against ideal 64-QAM
    seed: int


def ber_sim(spec: QuantizerSpec, m: int, snr_sweep_db: Sequence[float], *,
            channel: Literal["worst", "average"] = "worst",
            ofdm: OfdmGeometry = OfdmGeometry(),
            max_trials: int = 20_000, min_errors: int = 100,
            seed: int = 0, batch: int = 64) -> list[BerPoint]:
    """Single-user OFDM/64-QAM uplink BER versus cumulative input SNR.

    Time-domain samples are quantized per antenna; every antenna output is
    transformed back to subcarriers and combined per subcarrier by MRC with the
    model ADC gain.  The scaling factor at each point is the NF-optimal one.
    ``channel="worst"`` uses broadside arrival (all steering coefficients 1);
    ``"average"`` draws the arrival angle uniformly on (0, pi) per OFDM symbol.
    Each point runs batches until ``min_errors`` bit errors or ``max_trials``
    OFDM symbols.
    """
    if channel not in ("worst", "average"):
        raise ValueError(f"unknown channel {channel!r}")
    used = ofdm.used
    N = ofdm.n_fft
    # time-domain power per real dimension of a unit-energy constellation
    sigma_x_t = math.sqrt(ofdm.used_subcarriers / (2.0 * N))
    idx_m = np.arange(1, m + 1)
    out = []
    for p_i, snr_db in enumerate(snr_sweep_db):
        cfg = ArrayConfig.single_user(spec, m, float(snr_db))
        g = cfg.sigma_s / sigma_x_t
        g_o = cfg.adc_gain()
        errors = sent = trials = 0
        err_pow = 0.0
        ss = np.random.SeedSequence([seed, p_i])
        while errors < min_errors and trials < max_trials:
            rng = np.random.default_rng(ss.spawn(1)[0])
            nb = min(batch, max_trials - trials)
            sym_i = rng.integers(0, 8, size=(nb, used.size))
            sym_q = rng.integers(0, 8, size=(nb, used.size))
            X = np.zeros((nb, N), dtype=complex)
            X[:, used] = _PAM8[sym_i] + 1j * _PAM8[sym_q]
            x_t = np.fft.ifft(X, axis=-1, norm="ortho")
            if channel == "worst":
                c = np.ones((nb, m), dtype=complex)
            else:
                alpha = rng.uniform(0.0, np.pi, size=nb)
                c = np.exp(1j * np.pi * idx_m[None, :] * np.sin(alpha)[:, None])
            s_i = g * c[:, :, None] * x_t[:, None, :]
            s_o = quantize(spec, s_i.real + cfg.sigma_n * rng.standard_normal(s_i.shape))
            s_o = s_o + 1j * quantize(spec, s_i.imag + cfg.sigma_n * rng.standard_normal(s_i.shape))
            # flat channel: combining before the FFT equals per-subcarrier MRC
            combined = np.einsum("bm,bmt->bt", np.conj(c), s_o)
            x_hat = np.fft.fft(combined, axis=-1, norm="ortho")[:, used] / (m * g * g_o)
            di = _pam8_index(x_hat.real)
            dq = _pam8_index(x_hat.imag)
            errors += int(_POPCOUNT[_GRAY8[di] ^ _GRAY8[sym_i]].sum()
                          + _POPCOUNT[_GRAY8[dq] ^ _GRAY8[sym_q]].sum())
            err_pow += float(np.sum(np.abs(x_hat - X[:, used]) ** 2))
            sent += 6 * nb * used.size
            trials += nb
        ci = binomtest(errors, sent).proportion_ci(method="wilson")
        ber = errors / sent
        # ideal-ADC post-MRC error power per subcarrier symbol
        ideal_pow = 2 * cfg.sigma_n ** 2 / (m * g * g)
        evm_nf = err_pow / (trials * used.size) / ideal_pow
        snr_eq = ber_equivalent_snr_db(ber) if errors else math.nan
        out.append(BerPoint(
            snr_cum_in_db=float(snr_db), channel=channel, bits=spec.bits, m=m,
            sf_db=float(db(cfg.sf)), bit_errors=errors, bits_sent=sent, trials=trials,
            ber=ber, ber_lo=float(ci.low), ber_hi=float(ci.high),
            evm_nf_db=float(db(evm_nf)),
            ber_nf_db=float(snr_db + db(N / ofdm.used_subcarriers) - snr_eq),
            seed=seed,
        ))
    return out


def degradation_onset_db(points: Sequence[BerPoint], nf_limit_db: float,
                         use: Literal["ber", "evm"] = "ber") -> float:
    """First cumulative SNR where the measured SNR loss reaches ``nf_limit_db``.

    Linear interpolation in dB between the bracketing sweep points; ``nan``
    if the loss never reaches the limit.
    """
    pts = sorted(points, key=lambda p: p.snr_cum_in_db)
    xs = [p.snr_cum_in_db for p in pts]
    ys = [p.ber_nf_db if use == "ber" else p.evm_nf_db for p in pts]
    for i, y in enumerate(ys):
        if not math.isnan(y) and y >= nf_limit_db:
            if i == 0 or math.isnan(ys[i - 1]):
                return xs[i]
            x0, y0 = xs[i - 1], ys[i - 1]
            return x0 + (nf_limit_db - y0) * (xs[i] - x0) / (y - y0)
    return math.nan
