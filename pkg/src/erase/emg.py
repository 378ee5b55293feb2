"""Simulated EMG: band-limited Gaussian noise gated by movement-locked bursts.

Each burst of each source draws its own noise from a generator seeded by
``(seed, source, burst)``, so a burst's waveform depends only on its index
and not on where it sits in the timeline. The same spec therefore yields
the same sources on a continuous recording and on trial-concatenated data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dsp import bandpass, design_butterworth, filter_forward, lowpass

# Noise drawn ahead of each burst to let the band filter settle (seconds).
_WARMUP_S = 0.2


@dataclass(frozen=True)
class EmgSpec:
    band_low_hz: float = 20.0
    band_high_hz: float = 200.0
    band_order: int = 4
    ramp_ms: float = 100.0
    amplitude_scale: float = 10.0  # target RMS (uV) over active samples
    n_sources: int = 8
    seed: int = 1
    force_coupling: float = 1.0  # burst gain = 1 + coupling * normalized trial force
    jitter: float = 0.5  # SD of each source's own slow log-amplitude fluctuation within a burst
    jitter_hz: float = 4.0

    def validate(self, sample_rate: float) -> None:
        if not 0 < self.band_low_hz < self.band_high_hz < sample_rate / 2:
            raise ValueError(
                f"EMG band {self.band_low_hz}-{self.band_high_hz} Hz invalid for {sample_rate} Hz sampling"
            )
        if self.amplitude_scale <= 0:
            raise ValueError("amplitude_scale must be positive")
        if self.n_sources < 1:
            raise ValueError("n_sources must be >= 1")
        if self.ramp_ms < 0 or self.force_coupling < 0 or self.jitter < 0:
            raise ValueError("ramp_ms, force_coupling and jitter must be non-negative")
        if self.jitter > 0 and not 0 < self.jitter_hz < sample_rate / 2:
            raise ValueError(f"jitter_hz must lie in (0, {sample_rate / 2}) Hz")


def trapezoid(length: int, ramp: int) -> np.ndarray:
    """Unit plateau with linear rise and fall of ``ramp`` samples each."""
    env = np.ones(length)
    ramp = min(ramp, length // 2)
    if ramp > 0:
        up = np.arange(1, ramp + 1) / (ramp + 1)
        env[:ramp] = up
        env[length - ramp:] = up[::-1]
    return env


def burst_gains(mean_force: Sequence[float], coupling: float) -> np.ndarray:
    """Per-burst amplitude gain, linear in min-max normalized trial force."""
    f = np.asarray(mean_force, dtype=float)
    if f.size == 0 or coupling == 0:
        return np.ones(f.size)
    span = f.max() - f.min()
    norm = (f - f.min()) / span if span > 0 else np.zeros_like(f)
    return 1.0 + coupling * norm


def simulate_emg(spec: EmgSpec, n_samples: int, sample_rate: float,
                 bursts: Sequence[tuple[int, int]], gains: Optional[Sequence[float]] = None,
                 burst_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Simulated EMG sources, shape (n_sources, n_samples) in uV.

    ``bursts`` lists (start sample, length) of the active epochs; ``gains``
    optionally scales each burst. Within a burst every source also carries
    its own slow log-normal amplitude fluctuation (``spec.jitter``); a
    shared envelope alone would leave the sources uncorrelated but not
    independent, and ICA could not resolve them. ``burst_ids`` (default 0..n-1) key the
    per-burst noise generators, so a burst keeps its waveform when other
    bursts are dropped or moved. Sources are rescaled so their RMS over
    active samples equals ``spec.amplitude_scale``; with no active samples
    the output is all zeros.
    """
    spec.validate(sample_rate)
    out = np.zeros((spec.n_sources, n_samples))
    if gains is None:
        gains = np.ones(len(bursts))
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (len(bursts),):
        raise ValueError("one gain per burst required")
    ids = np.arange(len(bursts)) if burst_ids is None else np.asarray(burst_ids, dtype=np.int64)
    if ids.shape != (len(bursts),):
        raise ValueError("one id per burst required")
    sos = design_butterworth(bandpass(spec.band_low_hz, spec.band_high_hz, spec.band_order), sample_rate)
    slow_sos = design_butterworth(lowpass(spec.jitter_hz, 2), sample_rate) if spec.jitter > 0 else None
    warm = int(round(_WARMUP_S * sample_rate))
    ramp = int(round(spec.ramp_ms * sample_rate / 1000.0))
    active = np.zeros(n_samples, dtype=bool)
    for b, (start, length) in enumerate(bursts):
        if length <= 0:
            continue
        if start < 0 or start + length > n_samples:
            raise ValueError(f"burst {b} [{start}, {start + length}) outside [0, {n_samples})")
        env = trapezoid(length, ramp) * gains[b]
        active[start:start + length] |= env > 0
        for m in range(spec.n_sources):
            rng = np.random.default_rng([spec.seed, m, int(ids[b])])
            noise = filter_forward(rng.standard_normal(warm + length), sos)[warm:]
            if slow_sos is not None:
                slow = filter_forward(rng.standard_normal(warm + length), slow_sos)[warm:]
                sd = slow.std()
                if sd > 0:
                    noise *= np.exp(spec.jitter * slow / sd)
            out[m, start:start + length] += env * noise
    if active.any():
        rms = np.sqrt(np.mean(out[:, active] ** 2, axis=1))
        scale = np.divide(spec.amplitude_scale, rms, out=np.zeros_like(rms), where=rms > 0)
        out *= scale[:, None]
    return out
