import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quantequiv.equiv_model import OperatingPoint, decompose, monte_carlo_stats
from quantequiv.errors import NoSolutionError
from quantequiv.metrics import (
    SF_GRID_DB,
    ScaledPoint,
    _objective,
    adc_output_metrics,
    cumulative_sinad,
    db,
    effective_antenna_count,
    metrics_from_stats,
    min_nf,
    nf_curve,
    nf_max,
    optimal_sf,
    resolution_for,
    scaling_factor,
    small_signal_nf,
    snr_threshold,
    to_operating_point,
    undb,
)
from quantequiv.equiv_model import EquivalentStats
from quantequiv.quantizer import make_quantizer

Q1, Q2, Q3 = (make_quantizer(b) for b in (1, 2, 3))


def test_db_round_trip():
    assert db(100.0) == pytest.approx(20.0)
    assert undb(db(3.7)) == pytest.approx(3.7)


# ---------------------------------------------------------------------------
# operating points


def test_to_operating_point_examples():
    p = to_operating_point(Q1, ScaledPoint(1.0, 1.0))
    assert p.sigma_n == pytest.approx(math.sqrt(2)) and p.sigma_s == pytest.approx(math.sqrt(2))
    p = to_operating_point(Q1, ScaledPoint(4.0, 0.0))
    assert p.sigma_n == pytest.approx(1.0) and p.sigma_s == 0.0


@pytest.mark.parametrize("sf", [0.0, -1.0, math.inf])
def test_sf_must_be_positive(sf):
    with pytest.raises(ValueError):
        ScaledPoint(sf, 1.0)


def test_scaled_point_validation():
    with pytest.raises(ValueError):
        ScaledPoint(1.0, -0.1)
    with pytest.raises(ValueError):
        ScaledPoint(1.0, 1.0, m=0)
    assert ScaledPoint.from_cumulative(2.0, 100.0, 10).snr_cum_in == pytest.approx(100.0)


@settings(max_examples=20)
@given(st.integers(1, 8), st.floats(0.01, 1000), st.floats(0, 1e4))
def test_scaling_round_trip(bits, sf, snr):
    spec = make_quantizer(bits)
    p = to_operating_point(spec, ScaledPoint(sf, snr))
    assert sf * (p.sigma_s ** 2 + p.sigma_n ** 2) == pytest.approx(spec.R ** 2, rel=1e-12)
    assert scaling_factor(spec, p) == pytest.approx(sf, rel=1e-12)
    assert p.snr == pytest.approx(snr, rel=1e-12, abs=1e-300)


# ---------------------------------------------------------------------------
# single-ADC metrics


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.floats(0.1, 5), st.floats(0.05, 5))
def test_harmonic_identity(bits, sn, ss):
    om = adc_output_metrics(make_quantizer(bits), OperatingPoint(sn, ss))
    assert 1 / om.sinad_out == pytest.approx(1 / om.snr_out + 1 / om.sdr_out, rel=1e-12)


def test_zero_denominator_is_infinite():
    om = metrics_from_stats(EquivalentStats(1.0, 0.5, 0.0), 1.0)
    assert om.sdr_out == math.inf and om.infinite
    assert om.sinad_out == pytest.approx(2.0)


def test_distortion_trends_with_snr():
    snr_db = np.arange(-10, 41, 5.0)
    sdr, nld_share = [], []
    for x in snr_db:
        snr = float(undb(x))
        sf = optimal_sf(Q1, snr)
        p = to_operating_point(Q1, ScaledPoint(sf, snr))
        d = decompose(Q1, p)
        sdr.append(db(d.gain ** 2 * p.sigma_s ** 2 / d.nld_var))
        nld_share.append(d.nld_var / (d.nld_var + d.noise_var))
    # distortion grows relative to the signal and takes over the error power
    assert np.all(np.diff(sdr) < 0)
    assert np.all(np.diff(nld_share) > 0)
    # arcsine law: with rho = snr/(1+snr), SDR = rho / (asin(rho) - rho), which
    # tends to (2/pi)/(1 - 2/pi) only like sqrt(1 - rho)
    rho = undb(snr_db) / (1 + undb(snr_db))
    assert np.allclose(sdr, db(rho / (np.arcsin(rho) - rho)), atol=1e-6)
    assert sdr[-1] > db((2 / math.pi) / (1 - 2 / math.pi))


def test_sinad_against_monte_carlo():
    p = to_operating_point(Q2, ScaledPoint(float(undb(6.0)), 1.0))
    om = adc_output_metrics(Q2, p)
    mc = monte_carlo_stats(Q2, p, 10**6, seed=2)
    sig = mc.gain ** 2 * p.sigma_s ** 2
    err = mc.noise_var + mc.nld_var
    # delta method: relative SE of the ratio from the gain and error-power SEs
    rel_se = math.hypot(2 * mc.gain_se / mc.gain, math.hypot(mc.noise_var_se, mc.nld_var_se) / err)
    assert abs(sig / err / om.sinad_out - 1) <= 3 * rel_se


# ---------------------------------------------------------------------------
# scaling-factor search


@pytest.mark.parametrize("bits,snr_db,objective,m", [
    (1, 0.0, "maximize-SINAD", 1), (2, 10.0, "maximize-SINAD", 1),
    (3, 0.0, "minimize-NF", 100), (2, -10.0, "minimize-NF", 1000),
    (4, 20.0, "maximize-SINAD", 1),
])
def test_sf_matches_exhaustive(bits, snr_db, objective, m):
    spec = make_quantizer(bits)
    snr = float(undb(snr_db)) / (m if objective == "minimize-NF" else 1)
    fast = optimal_sf(spec, snr, objective, m)
    assert fast == optimal_sf(spec, snr, objective, m, exhaustive=True)
    i = int(np.argmin(np.abs(SF_GRID_DB - db(fast))))
    val = _objective(bits, SF_GRID_DB[i], snr, objective, m)
    for j in (i - 1, i + 1):
        if 0 <= j < len(SF_GRID_DB):
            # 1-bit SINAD does not depend on SF, so neighbours tie to rounding
            assert val <= _objective(bits, SF_GRID_DB[j], snr, objective, m) * (1 + 1e-9)


def test_one_bit_objectives_agree_at_m1():
    for x in (-10.0, 0.0, 10.0):
        snr = float(undb(x))
        assert optimal_sf(Q1, snr, "minimize-NF", 1) == optimal_sf(Q1, snr, "maximize-SINAD", 1)


def test_optimal_sf_rejects_bad_input():
    with pytest.raises(ValueError):
        optimal_sf(Q2, -1.0)
    with pytest.raises(ValueError):
        optimal_sf(Q2, 1.0, objective="fastest")
    with pytest.raises(ValueError):
        optimal_sf(Q2, 0.0, "maximize-SINAD")


def test_optimal_sf_on_grid():
    sf = optimal_sf(Q3, 1.0)
    assert np.min(np.abs(SF_GRID_DB - db(sf))) < 1e-9


# ---------------------------------------------------------------------------
# array noise figure


def test_one_bit_floor():
    for m in (1, 100, 10000):
        nf, _ = min_nf(Q1, float(undb(-30.0)), m)
        assert db(nf) == pytest.approx(db(math.pi / 2), abs=0.01)
    assert small_signal_nf(Q1) == pytest.approx(math.pi / 2, rel=1e-12)


def test_zero_snr_uses_limit():
    assert nf_max(Q1, 4.0, 0.0, 10) == pytest.approx(math.pi / 2, rel=1e-12)


@pytest.mark.parametrize("bits,m", [(1, 1), (2, 100), (3, 10000)])
def test_nf_nondecreasing(bits, m):
    rows = nf_curve(make_quantizer(bits), m, np.arange(-10, 61, 5.0))
    nf = np.array([r.nf_db for r in rows])
    assert np.all(nf >= -1e-12) and np.all(np.diff(nf) >= -1e-9)
    for r in rows:
        assert r.sinad_cum_out_db == pytest.approx(r.snr_cum_in_db - r.nf_db, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.floats(0.5, 200), st.floats(0.01, 1e5), st.sampled_from([1, 10, 100]))
def test_cumulative_sinad_identity(bits, sf, snr, m):
    spec = make_quantizer(bits)
    assert cumulative_sinad(spec, sf, snr, m) == pytest.approx(snr / nf_max(spec, sf, snr, m), rel=1e-14)
    assert nf_max(spec, sf, snr, m) >= 1 - 1e-9


def test_cumulative_sinad_peaks_then_falls():
    snr_db = np.arange(-10, 51, 2.5)
    sinad = [r.sinad_cum_out_db for r in nf_curve(Q1, 100, snr_db)]
    assert sinad[-1] < max(sinad) - 5
    assert sinad[0] == pytest.approx(-10 - db(math.pi / 2), abs=0.05)


def test_nf_falls_with_m_at_fixed_cumulative_snr():
    # more antennas share the same cumulative SNR, so each ADC sees less signal
    assert nf_max(Q2, 10.0, 1000.0, 1000) < nf_max(Q2, 10.0, 1000.0, 10)


# ---------------------------------------------------------------------------
# thresholds and resolution


def test_threshold_examples():
    assert snr_threshold(Q3, 10000, 3.0) >= 40.0
    with pytest.raises(NoSolutionError) as err:
        snr_threshold(Q1, 100, 1.0)
    assert err.value.best_nf_db == pytest.approx(1.96, abs=0.01)
    with pytest.raises(ValueError):
        snr_threshold(Q1, 100, 0.0)


def test_threshold_is_crossing():
    thr = snr_threshold(Q2, 100, 3.0)
    lo = db(min_nf(Q2, float(undb(thr - 0.05)), 100)[0])
    hi = db(min_nf(Q2, float(undb(thr + 0.05)), 100)[0])
    assert lo <= 3.0 <= hi


def test_threshold_above_range_is_inf():
    # a lone 1-bit ADC saturates at about 2.4 dB SINAD, so its NF stays below
    # 78 dB up to the top of the search range
    assert snr_threshold(Q1, 1, 79.0) == math.inf


def test_threshold_ordering():
    grid = {(b, m): snr_threshold(make_quantizer(b), m, 3.0) for b in (1, 2, 3) for m in (1, 100)}
    for m in (1, 100):
        assert grid[1, m] < grid[2, m] < grid[3, m]
    for b in (1, 2, 3):
        assert grid[b, 1] < grid[b, 100]


def test_resolution_examples():
    assert resolution_for(10000, 40.0, 3.0) == 3
    assert resolution_for(10000, -math.inf, 3.0) == 1
    needed = [resolution_for(100, x, 3.0) for x in (0.0, 15.0, 25.0, 32.0, 45.0)]
    assert needed == sorted(needed)


def test_resolution_unattainable():
    with pytest.raises(NoSolutionError) as err:
        resolution_for(10000, 60.0, 3.0, max_bits=2)
    assert err.value.best_nf_db > 3.0
    with pytest.raises(ValueError):
        resolution_for(10, 0.0, 3.0, max_bits=17)


def test_effective_antenna_count():
    assert effective_antenna_count([1.0] * 8) == 8
    assert effective_antenna_count([0.0] * 7 + [2.0]) == 1
    assert effective_antenna_count([1, 1, 2]) == 2.0
    for bad in ([], [0.0, 0.0], [1.0, -1.0], [1.0, math.nan]):
        with pytest.raises(ValueError):
            effective_antenna_count(bad)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50))
def test_effective_antenna_count_bounds(v):
    if max(v) == 0:
        return
    assert 1 - 1e-12 <= effective_antenna_count(v) <= len(v) + 1e-9
