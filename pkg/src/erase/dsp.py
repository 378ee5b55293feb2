"""Filtering, spectral decomposition, envelope extraction and normalization.

All functions operate along the last axis of numpy arrays so that a whole
channels x samples block can be processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import signal


class InvalidFilterSpec(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    kind: Literal["bandpass", "lowpass"]
    order: int
    high_hz: float
    low_hz: Optional[float] = None

    def validate(self, sample_rate: float) -> None:
        nyq = sample_rate / 2.0
        if self.order < 1 or int(self.order) != self.order:
            raise InvalidFilterSpec(f"order must be a positive integer, got {self.order}")
        if self.kind == "bandpass":
            if self.low_hz is None or not 0 < self.low_hz < self.high_hz < nyq:
                raise InvalidFilterSpec(
                    f"bandpass needs 0 < low < high < Nyquist ({nyq} Hz), got {self.low_hz}-{self.high_hz} Hz"
                )
        elif self.kind == "lowpass":
            if not 0 < self.high_hz < nyq:
                raise InvalidFilterSpec(f"lowpass cutoff must lie in (0, {nyq}) Hz, got {self.high_hz}")
        else:
            raise InvalidFilterSpec(f"unknown filter kind {self.kind!r}")


def bandpass(low_hz: float, high_hz: float, order: int) -> FilterSpec:
    return FilterSpec("bandpass", order, high_hz, low_hz)


def lowpass(high_hz: float, order: int) -> FilterSpec:
    return FilterSpec("lowpass", order, high_hz)


def design_butterworth(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Second-order sections of a digital Butterworth filter.

    The analog prototype is mapped with the bilinear transform, cutoffs
    prewarped so the -3 dB points land exactly on the requested frequencies.
    For a bandpass, ``order`` is the prototype order (2*order poles).
    """
    spec.validate(sample_rate)
    if spec.kind == "bandpass":
        wn = [spec.low_hz, spec.high_hz]
    else:
        wn = spec.high_hz
    sos = signal.butter(spec.order, wn, btype=spec.kind, output="sos", fs=sample_rate)
    _, p, _ = signal.sos2zpk(sos)
    if np.max(np.abs(p)) >= 1 - 1e-8:
        raise InvalidFilterSpec(f"designed filter is not stable (max |pole| = {np.max(np.abs(p))})")
    return sos


def _check_finite(x: np.ndarray) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite input sample at index {where if len(where) > 1 else where[0]}")


def filter_forward(x, sos: np.ndarray, zero_phase: bool = False) -> np.ndarray:
    """Causal filtering along the last axis; ``zero_phase`` runs forward-backward instead."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    if zero_phase:
        return signal.sosfiltfilt(sos, x, axis=-1)
    return signal.sosfilt(sos, x, axis=-1)


def envelope_power(x, sample_rate: float, band: FilterSpec, smooth: FilterSpec,
                   zero_phase: bool = False) -> np.ndarray:
    """Instantaneous band power low-pass smoothed: lowpass(bandpass(x)**2)."""
    if band.kind != "bandpass" or smooth.kind != "lowpass":
        raise InvalidFilterSpec("envelope_power needs a bandpass band and a lowpass smoother")
    xb = filter_forward(x, design_butterworth(band, sample_rate), zero_phase)
    return filter_forward(xb * xb, design_butterworth(smooth, sample_rate), zero_phase)


@dataclass(frozen=True)
class Spectrogram:
    """power has shape (..., frames, freqs) in uV^2 per frame."""

    power: np.ndarray
    freqs_hz: np.ndarray
    times_s: np.ndarray
    window_len: int
    hop: int

    def band_mean(self, low_hz: float, high_hz: float) -> np.ndarray:
        """Mean power over bins with low <= f <= high; shape (..., frames)."""
        sel = (self.freqs_hz >= low_hz) & (self.freqs_hz <= high_hz)
        if not sel.any():
            raise ValueError(f"no frequency bins inside [{low_hz}, {high_hz}] Hz")
        return self.power[..., sel].mean(axis=-1)


def frame_starts(n_samples: int, window_len: int, hop: int) -> np.ndarray:
    return np.arange(0, n_samples - window_len + 1, hop)


def stft_power(x, sample_rate: float, window_len: int = 512, hop: int = 128) -> Spectrogram:
    """Hann-windowed one-sided periodogram per frame.

    Bin powers are scaled so that, per frame, they sum to the energy of the
    windowed frame (Parseval).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if window_len > n:
        raise ValueError(f"window of {window_len} samples is longer than the signal ({n})")
    if hop < 1 or window_len < 2:
        raise ValueError("hop must be >= 1 and window_len >= 2")
    _check_finite(x)
    win = signal.get_window("hann", window_len)
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len, axis=-1)[..., ::hop, :]
    spec = np.fft.rfft(frames * win, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    power[..., 1:] *= 2.0
    if window_len % 2 == 0:
        power[..., -1] /= 2.0
    power /= window_len
    starts = frame_starts(n, window_len, hop)
    return Spectrogram(
        power=power,
        freqs_hz=np.fft.rfftfreq(window_len, 1.0 / sample_rate),
        times_s=(starts + window_len / 2.0) / sample_rate,
        window_len=window_len,
        hop=hop,
    )


def zscore_along_time(power: np.ndarray, axis: int = -2, labels=None) -> np.ndarray:
    """z-score each series along ``axis`` (population variance)."""
    mean = power.mean(axis=axis, keepdims=True)
    std = power.std(axis=axis, keepdims=True)
    flat = np.squeeze(std, axis=axis)
    if np.any(flat <= 0):
        where = tuple(int(i) for i in np.argwhere(np.atleast_1d(flat) <= 0)[0])
        if labels is not None and len(where) >= 2:
            raise ValueError(f"zero-variance series: channel {labels[where[0]]!r}, bin {where[-1]}")
        raise ValueError(f"zero-variance series at bin {where[-1]}" if where else "zero-variance series")
    return (power - mean) / std


def zscore_per_channel_frequency(spec: Spectrogram, labels=None) -> Spectrogram:
    """Each (channel, frequency) power series gets mean 0, variance 1 over frames."""
    return Spectrogram(
        power=zscore_along_time(spec.power, axis=-2, labels=labels),
        freqs_hz=spec.freqs_hz,
        times_s=spec.times_s,
        window_len=spec.window_len,
        hop=spec.hop,
    )
