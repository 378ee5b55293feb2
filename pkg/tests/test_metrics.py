import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erase.dsp import bandpass, design_butterworth, filter_forward
from erase.metrics import (BandPowerSummary, DegenerateEpochError, FdCorrelation, band_power_summaries,
                           band_power_z, compute_metrics, fd_correlation, force_levels, fractal_dimension,
                           percent_reduction, reduction_from_means, region_summary, relative_fd, snr_db)
from erase.montage import default_montage
from erase.pipeline import TrialSet
from erase.recording import Recording

FS = 2000.0
IDLE, MOVE = 2000, 4000


def make_trials(rows, labels=None, mean_force=None):
    rows = np.atleast_2d(rows)
    n_tr = rows.shape[1] // (IDLE + MOVE)
    labels = labels or tuple(f"E{i}" for i in range(rows.shape[0]))
    rec = Recording(labels, ("scalp",) * len(labels), FS, rows)
    mf = np.linspace(0.2, 1.0, n_tr) if mean_force is None else np.asarray(mean_force)
    return TrialSet(rec, np.arange(n_tr) * (IDLE + MOVE) + IDLE, np.arange(n_tr), mf, IDLE, MOVE)


def move_mask(n_tr):
    return np.tile(np.r_[np.zeros(IDLE, bool), np.ones(MOVE, bool)], n_tr)


def band_noise(rng, n, lo, hi):
    return filter_forward(rng.standard_normal(n), design_butterworth(bandpass(lo, hi, 4), FS))


def reference_fd(epoch, samples_per_vector=2):
    """Plain-loop waveform fractal dimension in 1 ms / 1 uV units."""
    n = len(epoch)
    vecs = []
    for k in range(n // samples_per_vector):
        vecs.append([float(k)] + [float(v) for v in epoch[k * samples_per_vector:(k + 1) * samples_per_vector]])
    length = 0.0
    for a, b in zip(vecs, vecs[1:]):
        length += math.sqrt(sum((p - q) ** 2 for p, q in zip(a, b)))
    d = max(math.sqrt(sum((p - q) ** 2 for p, q in zip(v, vecs[0]))) for v in vecs)
    return math.log(n - 1) / (math.log(n - 1) + math.log(d / length))


# band power

def test_null_band_power_rarely_significant():
    rng = np.random.default_rng(0)
    trials = make_trials(rng.standard_normal((40, 20 * (IDLE + MOVE))))
    s = band_power_z(trials, "gamma")
    assert s.significant.mean() <= 0.15
    assert np.all(np.isfinite(s.pvalue))


def test_planted_gamma_burst_and_mu_suppression():
    rng = np.random.default_rng(1)
    n_tr = 20
    n = n_tr * (IDLE + MOVE)
    move = move_mask(n_tr)
    x = rng.standard_normal((3, n))
    x[0] += 4.0 * band_noise(rng, n, 80, 160) * move
    x[1] += 6.0 * band_noise(rng, n, 8, 12) * np.where(move, 0.2, 1.0)
    out = band_power_summaries(make_trials(x))
    g, mu = out["gamma"], out["mu"]
    assert g.significant[0] and g.move_mean[0] > g.idle_mean[0]
    assert mu.significant[1] and mu.move_mean[1] < mu.idle_mean[1]
    assert g.value("E0") == g.move_mean[0]


def test_band_power_rejects_silent_channel():
    x = np.random.default_rng(0).standard_normal((2, 4 * (IDLE + MOVE)))
    x[1] = 0
    with pytest.raises(ValueError, match="'E1'"):
        band_power_z(make_trials(x))


def _summary(values):
    v = np.asarray(values, dtype=float)[None, :]
    return BandPowerSummary("gamma", tuple(f"E{i}" for i in range(v.shape[1])), v, np.zeros_like(v),
                            np.ones(v.shape[1]))


def test_percent_reduction_examples():
    assert reduction_from_means(0.15, 0.04) == pytest.approx(73.333, abs=1e-3)
    assert percent_reduction(_summary([0.1, 0.2]), _summary([0.1, 0.2]), ["E0", "E1"]) == 0.0
    assert percent_reduction(_summary([0.1, 0.2]), _summary([0.05, 0.1]), ["E0", "E1"]) == pytest.approx(50.0)
    with pytest.raises(ValueError, match="positive"):
        percent_reduction(_summary([-0.1, 0.0]), _summary([0.0, 0.0]), ["E0", "E1"])
    with pytest.raises(ValueError):
        percent_reduction(_summary([0.1]), _summary([0.1]), [])


# SNR

def test_snr_equal_power_near_zero():
    rng = np.random.default_rng(2)
    snr = snr_db(make_trials(rng.standard_normal(100 * (IDLE + MOVE))))
    assert abs(snr.mean()) <= 0.5


def test_snr_power_ratio_ten():
    rng = np.random.default_rng(3)
    n_tr = 100
    x = rng.standard_normal(n_tr * (IDLE + MOVE)) * np.where(move_mask(n_tr), math.sqrt(10), 1.0)
    assert snr_db(make_trials(x)).mean() == pytest.approx(10.0, abs=1.0)


def test_mu_suppression_negative_snr():
    rng = np.random.default_rng(4)
    n_tr = 30
    n = n_tr * (IDLE + MOVE)
    x = 0.2 * rng.standard_normal(n) + band_noise(rng, n, 8, 12) * np.where(move_mask(n_tr), 0.3, 1.0)
    assert snr_db(make_trials(x), band=bandpass(8.0, 12.0, 4)).mean() < -3.0


@settings(max_examples=10, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_snr_scale_invariant(c):
    x = np.random.default_rng(5).standard_normal(6 * (IDLE + MOVE))
    np.testing.assert_allclose(snr_db(make_trials(c * x)), snr_db(make_trials(x)), atol=1e-8)


def test_snr_silent_channel_errors():
    with pytest.raises(ValueError, match="non-positive"):
        snr_db(make_trials(np.zeros(3 * (IDLE + MOVE))))


# fractal dimension

def test_fd_linear_ramp_is_one():
    assert fractal_dimension(np.arange(4000) * 0.37) == pytest.approx(1.0, abs=1e-12)
    assert fractal_dimension(-5.0 * np.arange(2000)) == pytest.approx(1.0, abs=1e-12)


def test_fd_constant_is_degenerate():
    with pytest.raises(DegenerateEpochError):
        fractal_dimension(np.full(4000, 2.5))
    with pytest.raises(ValueError):
        fractal_dimension(np.arange(3.0))


def test_fd_noise_above_sine_and_matches_reference():
    rng = np.random.default_rng(6)
    noise = 10.0 * rng.standard_normal(4000)
    t = np.arange(4000) / FS
    sine = 10.0 * math.sqrt(2) * np.sin(2 * np.pi * 10 * t)
    fd_noise, fd_sine = fractal_dimension(noise), fractal_dimension(sine)
    assert fd_noise > fd_sine
    assert fd_noise == pytest.approx(reference_fd(noise), abs=1e-9)
    assert fd_sine == pytest.approx(reference_fd(sine), abs=1e-9)


def test_fd_matches_reference_on_random_epochs():
    rng = np.random.default_rng(7)
    for k in range(20):
        n = int(rng.choice([2000, 4000, 1001]))
        x = rng.standard_normal(n) * rng.uniform(0.1, 50)
        assert fractal_dimension(x) == pytest.approx(reference_fd(x), abs=1e-9)


def test_fd_vectorised_over_rows():
    x = np.random.default_rng(8).standard_normal((3, 5, 2000))
    out = fractal_dimension(x)
    assert out.shape == (3, 5)
    assert out[2, 4] == pytest.approx(fractal_dimension(x[2, 4]), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), scale=st.floats(0.01, 100))
def test_fd_sign_flip_invariant(seed, scale):
    x = scale * np.random.default_rng(seed).standard_normal(400)
    assert fractal_dimension(-x) == pytest.approx(fractal_dimension(x), abs=1e-12)


def test_relative_fd_antisymmetric_and_signed():
    rng = np.random.default_rng(9)
    smooth = filter_forward(rng.standard_normal(2000), design_butterworth(bandpass(3.0, 20.0, 3), FS)) * 20
    rough = rng.standard_normal(2000) * 5
    assert relative_fd(rough, smooth) > 0
    assert relative_fd(smooth, rough) == pytest.approx(-relative_fd(rough, smooth), abs=1e-12)


def test_relative_fd_null_mean_zero():
    rng = np.random.default_rng(10)
    vals = [relative_fd(rng.standard_normal(4000), rng.standard_normal(2000)) for _ in range(50)]
    # different epoch lengths: FD depends on N, so compare with the expected offset instead of 0
    same = [relative_fd(rng.standard_normal(2000), rng.standard_normal(2000)) for _ in range(50)]
    assert abs(np.mean(same)) < 0.01
    assert np.std(vals) < 0.05


# force levels

def test_force_level_boundaries():
    fl = force_levels([0.2, 0.5, 1.0, 0.28, 0.999])
    assert fl.levels[0] == 1 and fl.levels[2] == 10
    assert fl.width == pytest.approx(0.08)
    np.testing.assert_allclose(np.diff(fl.edges), 0.08)
    assert fl.centers[0] == pytest.approx(0.24)
    assert fl.levels[3] == 2  # exact interior edge goes up


def test_uniform_forces_fill_every_level():
    f = np.random.default_rng(11).uniform(0.2, 1.0, 200)
    assert set(force_levels(f).levels) == set(range(1, 11))


def test_constant_force_error():
    with pytest.raises(ValueError, match="constant"):
        force_levels([0.5, 0.5, 0.5])


def test_fd_correlation_tracks_force():
    rng = np.random.default_rng(12)
    n_tr = 60
    force = rng.uniform(0.2, 1.0, n_tr)
    n = n_tr * (IDLE + MOVE)
    g = np.zeros(n)
    for k, f in enumerate(force):
        s = k * (IDLE + MOVE) + IDLE
        g[s:s + MOVE] = 0.5 + 3.0 * f
    x = np.vstack([rng.standard_normal(n) + g * band_noise(rng, n, 80, 160), rng.standard_normal(n)])
    fd = fd_correlation(make_trials(x, mean_force=force))
    assert fd.significant[0] and fd.r[0] > 0.6
    assert np.all(np.abs(fd.r) <= 1)
    assert np.all(fd.pvalue[fd.significant] <= 0.05)
    assert np.all(fd.significant_r[~fd.significant] == 0)


# region summary

def _fd(labels, sig_r):
    sig_r = np.asarray(sig_r, dtype=float)
    z = np.zeros(len(labels))
    return FdCorrelation(tuple(labels), sig_r, z, np.where(sig_r != 0, 0.01, 0.5), sig_r,
                         np.arange(1, 11), np.linspace(0, 1, 10), np.zeros((10, len(labels))), np.ones(1))


def _gamma(labels, values):
    v = np.asarray(values, dtype=float)[None, :]
    return BandPowerSummary("gamma", tuple(labels), v, np.zeros_like(v), np.ones(len(labels)))


def test_region_all_sce_in_ha():
    m = default_montage()
    labels = ["C3", "C5", "FCC3h", "Cz", "C4"]
    rs = region_summary(_gamma(labels, [1, 1, 1, 0, 0]), _fd(labels, [0.7, -0.9, 0.8, 0, 0]), m)
    assert rs.n_sce == 3 and rs.n_sce_ha == 3
    assert rs.sce_proportion_ha == 100.0
    assert rs.hand_motor_sig_r == pytest.approx(0.8)
    assert rs.hand_motor_n_sce == 3
    assert rs.contralesional_sig_r == 0.0 and rs.contralesional_n_sce == 0
    assert rs.ha_mean == 1.0 and rs.nha_mean == 0.0


def test_region_twelve_sce_ten_in_ha():
    m = default_montage()
    ha = sorted(m.ha)[:10]
    nha = ["Cz", "C4"]
    labels = ha + nha
    rs = region_summary(_gamma(labels, np.ones(12)), _fd(labels, np.full(12, 0.9)), m)
    assert rs.n_sce == 12
    assert rs.sce_proportion_ha == pytest.approx(83.33, abs=0.01)
    assert rs.contralesional_sig_r == pytest.approx(0.9) and rs.contralesional_n_sce == 1


def test_region_empty_sce_absent():
    m = default_montage()
    labels = ["C3", "Cz"]
    rs = region_summary(_gamma(labels, [1, 0]), _fd(labels, [0, 0]), m)
    assert rs.sce_proportion_ha is None
    assert rs.hand_motor_sig_r == 0.0


def test_region_unknown_electrode():
    labels = ["C3", "EMG01"]
    with pytest.raises(ValueError, match="EMG01"):
        region_summary(_gamma(labels, [1, 0]), _fd(labels, [0, 0]), default_montage())


def test_compute_metrics_shapes():
    rng = np.random.default_rng(13)
    labels = ("C3", "C4", "Cz")
    trials = make_trials(rng.standard_normal((3, 12 * (IDLE + MOVE))), labels=labels,
                         mean_force=rng.uniform(0.2, 1, 12))
    rep = compute_metrics(trials, default_montage())
    assert rep.labels == labels
    assert rep.snr["gamma"].shape == (12, 3) and rep.snr["mu"].shape == (12, 3)
    assert rep.fd.r.shape == (3,)
    with pytest.raises(ValueError, match="missing"):
        compute_metrics(make_trials(rng.standard_normal((1, 4 * (IDLE + MOVE))), labels=("X9",)), default_montage())
