"""Evaluation metrics: z-scored band power, percent reduction, SNR, fractal
dimension, relative-FD/force correlation and region aggregates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import DspConfig, MetricsConfig
from .dsp import FilterSpec, design_butterworth, envelope_power, filter_forward, frame_starts, stft_power, zscore_along_time
from .montage import Montage
from .pipeline import TrialSet
from .recording import ChannelKind
from .stats import pearson_significance, wilcoxon_ranksum

BANDS = {"mu": (8.0, 12.0), "gamma": (80.0, 160.0)}


class DegenerateEpochError(ValueError):
    pass


def _channel_rows(trials: TrialSet, electrodes: Optional[Sequence[str]]):
    rec = trials.recording
    if electrodes is None:
        idx = rec.indices(ChannelKind.SCALP)
    else:
        idx = np.array([rec.index(e) for e in electrodes], dtype=int)
    return idx, tuple(rec.labels[i] for i in idx)


@dataclass(frozen=True, eq=False)
class BandPowerSummary:
    band: str
    labels: tuple[str, ...]
    move_trials: np.ndarray  # (n_trials, n_electrodes) mean z during move
    idle_trials: np.ndarray
    pvalue: np.ndarray       # move vs idle rank-sum, per electrode
    alpha: float = 0.05

    @property
    def move_mean(self) -> np.ndarray:
        return self.move_trials.mean(axis=0)

    @property
    def idle_mean(self) -> np.ndarray:
        return self.idle_trials.mean(axis=0)

    @property
    def significant(self) -> np.ndarray:
        return self.pvalue < self.alpha

    def value(self, label: str) -> float:
        return float(self.move_mean[self.labels.index(label)])


def band_power_summaries(trials: TrialSet, bands: Mapping[str, tuple[float, float]] = BANDS,
                         electrodes: Optional[Sequence[str]] = None, dsp: DspConfig = DspConfig(),
                         alpha: float = 0.05) -> dict[str, BandPowerSummary]:
    """STFT each channel of the concatenated trials, z-score every frequency
    bin over time, average the bins of each band, then average frames per
    trial epoch (assigned by frame centre) and test move against idle."""
    idx, labels = _channel_rows(trials, electrodes)
    rec = trials.recording
    n_tr, L = trials.n_trials, trials.trial_len
    starts = frame_starts(rec.n_samples, dsp.stft_window, dsp.stft_hop)
    centres = starts + dsp.stft_window // 2
    trial_of = centres // L
    is_move = (centres % L) >= trials.idle_len
    counts_move = np.bincount(trial_of[is_move], minlength=n_tr)
    counts_idle = np.bincount(trial_of[~is_move], minlength=n_tr)
    if np.any(counts_move == 0) or np.any(counts_idle == 0):
        raise ValueError("STFT window/hop leave some trial epochs without frames")
    move = {b: np.empty((n_tr, idx.size)) for b in bands}
    idle = {b: np.empty((n_tr, idx.size)) for b in bands}
    for c, i in enumerate(idx):
        spec = stft_power(rec.data[i], rec.sample_rate, dsp.stft_window, dsp.stft_hop)
        try:
            z = zscore_along_time(spec.power, axis=0)
        except ValueError as exc:
            raise ValueError(f"channel {rec.labels[i]!r}: {exc}") from None
        for b, (lo, hi) in bands.items():
            sel = (spec.freqs_hz >= lo) & (spec.freqs_hz <= hi)
            zb = z[:, sel].mean(axis=1)
            move[b][:, c] = np.bincount(trial_of[is_move], zb[is_move], n_tr) / counts_move
            idle[b][:, c] = np.bincount(trial_of[~is_move], zb[~is_move], n_tr) / counts_idle
    out = {}
    for b in bands:
        p = np.array([wilcoxon_ranksum(move[b][:, c], idle[b][:, c]).pvalue for c in range(idx.size)])
        out[b] = BandPowerSummary(b, labels, move[b], idle[b], p, alpha)
    return out


def band_power_z(trials: TrialSet, band: str = "gamma", **kwargs) -> BandPowerSummary:
    return band_power_summaries(trials, {band: BANDS[band]}, **kwargs)[band]


def percent_reduction(before: BandPowerSummary, after: BandPowerSummary,
                      electrodes: Sequence[str]) -> float:
    """100 * (Z_before - Z_after) / Z_before, Z the mean move-epoch z-scored
    power over ``electrodes``."""
    electrodes = list(electrodes)
    if not electrodes:
        raise ValueError("empty electrode set")
    zb = float(np.mean([before.value(e) for e in electrodes]))
    za = float(np.mean([after.value(e) for e in electrodes]))
    return reduction_from_means(zb, za)


def reduction_from_means(z_before: float, z_after: float) -> float:
    if z_before <= 0:
        raise ValueError(f"baseline mean z-scored power must be positive, got {z_before}")
    return 100.0 * (z_before - z_after) / z_before


def _epoch_envelope(epochs: np.ndarray, fs: float, band: FilterSpec, smooth: FilterSpec, pad: int,
                    zero_phase: bool) -> np.ndarray:
    """Band envelope of each epoch on its own, mirror padded at both ends so
    the filter transient falls outside the epoch."""
    pad = min(pad, epochs.shape[-1] - 1)
    padded = np.pad(epochs, [(0, 0)] * (epochs.ndim - 1) + [(pad, pad)], mode="reflect")
    env = envelope_power(padded, fs, band, smooth, zero_phase)
    return env[..., pad:pad + epochs.shape[-1]]


def snr_db(trials: TrialSet, electrodes: Optional[Sequence[str]] = None, band: FilterSpec = DspConfig().gamma,
           smooth: FilterSpec = DspConfig().smoother, pad_s: float = 0.5,
           zero_phase: bool = False) -> np.ndarray:
    """Per-trial SNR in dB, shape (n_trials, n_electrodes).

    Idle and move envelopes are computed per epoch, each padded with
    ``pad_s`` seconds of its own mirror image, so that power from the
    neighbouring trial in the concatenation does not leak through the smoother.
    """
    idx, _ = _channel_rows(trials, electrodes)
    rec = trials.recording
    pad = int(round(pad_s * rec.sample_rate))
    out = np.empty((trials.n_trials, idx.size))
    for c, i in enumerate(idx):
        row = np.asarray(rec.data[i], dtype=float)
        p_idle = _epoch_envelope(trials.idle(row), rec.sample_rate, band, smooth, pad, zero_phase).mean(axis=1)
        p_move = _epoch_envelope(trials.move(row), rec.sample_rate, band, smooth, pad, zero_phase).mean(axis=1)
        if np.any(p_idle <= 0) or np.any(p_move <= 0):
            k = int(np.flatnonzero((p_idle <= 0) | (p_move <= 0))[0])
            raise ValueError(f"non-positive mean envelope in trial {k} of {rec.labels[i]!r}")
        out[:, c] = 10.0 * np.log10(p_move / p_idle)
    return out


def fractal_dimension(epoch, sample_rate: float = 2000.0, time_unit_ms: float = 1.0,
                      amp_unit_uv: float = 1.0) -> np.ndarray | float:
    """Waveform fractal dimension ln(N-1) / (ln(N-1) + ln(d/L)) along the last axis.

    The epoch is cut into non-overlapping data vectors spanning one time
    quantum (``time_unit_ms``; 2 samples at 2 kHz). Vector k has time
    coordinate k and its samples in amplitude quanta as the remaining
    coordinates. L sums Euclidean steps between successive vectors, d is the
    largest distance from the first vector and N the number of samples.
    """
    x = np.asarray(epoch, dtype=float)
    n = x.shape[-1]
    m = int(round(time_unit_ms * sample_rate / 1000.0))
    if m < 1:
        raise ValueError("time quantum shorter than one sample")
    n_vec = n // m
    if n < 4 or n_vec < 2:
        raise ValueError(f"epoch too short for fractal dimension ({n} samples)")
    flat = x.reshape(-1, n)
    ptp = flat.max(axis=1) - flat.min(axis=1)
    if np.any(ptp == 0):
        raise DegenerateEpochError("constant epoch has no waveform to measure")
    blocks = x[..., :n_vec * m].reshape(x.shape[:-1] + (n_vec, m)) / amp_unit_uv
    steps = np.sqrt(1.0 + np.sum(np.diff(blocks, axis=-2) ** 2, axis=-1))
    length = steps.sum(axis=-1)
    k = np.arange(n_vec, dtype=float)
    dist = np.sqrt(k * k + np.sum((blocks - blocks[..., :1, :]) ** 2, axis=-1))
    d = dist.max(axis=-1)
    ln_n = math.log(n - 1)
    fd = ln_n / (ln_n + np.log(d / length))
    return float(fd) if np.ndim(fd) == 0 else fd


def relative_fd(move_epoch, idle_epoch, sample_rate: float = 2000.0, **kwargs):
    """FD(move) - FD(idle)."""
    return fractal_dimension(move_epoch, sample_rate, **kwargs) - fractal_dimension(idle_epoch, sample_rate, **kwargs)


def relative_fd_matrix(trials: TrialSet, electrodes: Optional[Sequence[str]] = None,
                       band: FilterSpec = DspConfig().gamma, metrics: MetricsConfig = MetricsConfig(),
                       zero_phase: bool = False) -> np.ndarray:
    """Relative FD of the band-filtered signal, shape (n_trials, n_electrodes)."""
    idx, _ = _channel_rows(trials, electrodes)
    rec = trials.recording
    sos = design_butterworth(band, rec.sample_rate)
    kw = dict(time_unit_ms=metrics.fd_time_unit_ms, amp_unit_uv=metrics.fd_amp_unit_uv)
    out = np.empty((trials.n_trials, idx.size))
    for c, i in enumerate(idx):
        xg = filter_forward(rec.data[i], sos, zero_phase)
        out[:, c] = (fractal_dimension(trials.move(xg), rec.sample_rate, **kw)
                     - fractal_dimension(trials.idle(xg), rec.sample_rate, **kw))
    return out


@dataclass(frozen=True)
class ForceLevels:
    levels: np.ndarray   # 1-based level per trial
    edges: np.ndarray    # n_levels + 1 bin edges
    centers: np.ndarray  # n_levels bin centres

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def force_levels(mean_force, n_levels: int = 10) -> ForceLevels:
    """Equal-width bins over [min, max] of per-trial mean force; the maximum falls in the top level."""
    f = np.asarray(mean_force, dtype=float)
    lo, hi = float(f.min()), float(f.max())
    if not hi > lo:
        raise ValueError("mean force is constant across trials; cannot form levels")
    width = (hi - lo) / n_levels
    levels = np.minimum(np.floor((f - lo) / width).astype(int), n_levels - 1) + 1
    edges = lo + width * np.arange(n_levels + 1)
    return ForceLevels(levels, edges, 0.5 * (edges[:-1] + edges[1:]))


def level_means(fl: ForceLevels, values: np.ndarray):
    """Mean of ``values`` rows per populated level: (level numbers, centres, means)."""
    values = np.asarray(values, dtype=float)
    populated = np.unique(fl.levels)
    means = np.vstack([values[fl.levels == lv].mean(axis=0) for lv in populated])
    return populated, fl.centers[populated - 1], means


@dataclass(frozen=True, eq=False)
class FdCorrelation:
    labels: tuple[str, ...]
    r: np.ndarray
    t: np.ndarray
    pvalue: np.ndarray
    significant_r: np.ndarray
    level_numbers: np.ndarray
    level_centers: np.ndarray
    level_means: np.ndarray  # (n_populated_levels, n_electrodes)
    trial_levels: np.ndarray

    @property
    def significant(self) -> np.ndarray:
        return self.significant_r != 0


def fd_correlation(trials: TrialSet, electrodes: Optional[Sequence[str]] = None,
                   dsp: DspConfig = DspConfig(), metrics: MetricsConfig = MetricsConfig(),
                   rel_fd: Optional[np.ndarray] = None) -> FdCorrelation:
    idx, labels = _channel_rows(trials, electrodes)
    if rel_fd is None:
        rel_fd = relative_fd_matrix(trials, labels, dsp.gamma, metrics, dsp.zero_phase)
    fl = force_levels(trials.mean_force, metrics.n_force_levels)
    numbers, centers, means = level_means(fl, rel_fd)
    res = [pearson_significance(centers, means[:, c], metrics.alpha, metrics.t_variant)
           for c in range(len(labels))]
    return FdCorrelation(
        labels,
        np.array([x.r for x in res]),
        np.array([x.t for x in res]),
        np.array([x.pvalue for x in res]),
        np.array([x.significant_r for x in res]),
        numbers, centers, means, fl.levels,
    )


@dataclass(frozen=True)
class RegionSummary:
    ha_mean: float
    nha_mean: float
    ha_vs_nha_p: float
    n_sce: int
    n_sce_ha: int
    sce_proportion_ha: Optional[float]  # percent; None when there is no SCE
    hand_motor_sig_r: float
    hand_motor_n_sce: int
    contralesional_sig_r: float
    contralesional_n_sce: int

    def as_rows(self) -> list[tuple[str, object]]:
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]


def _mean_sig_abs_r(fd: FdCorrelation, group: Sequence[str]) -> tuple[float, int]:
    """Mean |significant R| over the group's significant electrodes; 0 when none."""
    vals = [abs(fd.significant_r[fd.labels.index(l)]) for l in group if l in fd.labels]
    sig = [v for v in vals if v != 0]
    return (float(np.mean(sig)) if sig else 0.0), len(sig)


def region_summary(gamma: BandPowerSummary, fd: FdCorrelation, montage: Montage) -> RegionSummary:
    regions = [montage.region(l) for l in gamma.labels]
    for l in fd.labels:
        montage.region(l)
    vals = gamma.move_mean
    ha = np.array([v for v, r in zip(vals, regions) if r == "HA"])
    nha = np.array([v for v, r in zip(vals, regions) if r == "NHA"])
    p = wilcoxon_ranksum(ha, nha).pvalue if ha.size and nha.size else float("nan")
    sce = [l for l, s in zip(fd.labels, fd.significant) if s]
    sce_ha = sum(montage.region(l) == "HA" for l in sce)
    hm_r, hm_n = _mean_sig_abs_r(fd, montage.hand_motor)
    cl_r, cl_n = _mean_sig_abs_r(fd, montage.contralesional)
    return RegionSummary(
        ha_mean=float(ha.mean()) if ha.size else float("nan"),
        nha_mean=float(nha.mean()) if nha.size else float("nan"),
        ha_vs_nha_p=float(p),
        n_sce=len(sce),
        n_sce_ha=int(sce_ha),
        sce_proportion_ha=100.0 * sce_ha / len(sce) if sce else None,
        hand_motor_sig_r=hm_r,
        hand_motor_n_sce=hm_n,
        contralesional_sig_r=cl_r,
        contralesional_n_sce=cl_n,
    )


def region_electrodes(labels: Sequence[str], montage: Montage, region: str) -> list[str]:
    return [l for l in labels if montage.region(l) == region]


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Everything computed for one condition."""

    bands: dict[str, BandPowerSummary]
    snr: dict[str, np.ndarray]     # band -> (n_trials, n_electrodes) dB
    fd: FdCorrelation
    region: RegionSummary
    mean_force: np.ndarray

    @property
    def labels(self) -> tuple[str, ...]:
        return self.bands["gamma"].labels


def compute_metrics(trials: TrialSet, montage: Montage, dsp: DspConfig = DspConfig(),
                    metrics: MetricsConfig = MetricsConfig()) -> MetricsReport:
    """Band-power z-scores, SNR, FD-force correlation and region aggregates
    over all scalp channels of ``trials``."""
    _, labels = _channel_rows(trials, None)
    missing = [l for l in labels if l not in montage.labels]
    if missing:
        raise ValueError(f"electrodes missing from the montage: {missing}")
    bands = band_power_summaries(trials, BANDS, labels, dsp, metrics.alpha)
    snr = {
        "gamma": snr_db(trials, labels, dsp.gamma, dsp.smoother, zero_phase=dsp.zero_phase),
        "mu": snr_db(trials, labels, dsp.mu, dsp.smoother, zero_phase=dsp.zero_phase),
    }
    fd = fd_correlation(trials, labels, dsp, metrics)
    return MetricsReport(bands, snr, fd, region_summary(bands["gamma"], fd, montage), trials.mean_force)
