"""Trial segmentation, virtual-channel augmentation and ICA artifact rejection.

Two cleaning conditions are provided: ERASE, where simulated-EMG reference
channels are appended before ICA and components loading on them are
rejected, and a conventional ICA baseline that rejects components by their
high-gamma power share.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .config import DspConfig, IcaConfig, PipelineConfig
from .dsp import FilterSpec, design_butterworth, filter_forward, stft_power
from .emg import EmgSpec, burst_gains, simulate_emg
from .fastica import IcaConvergenceError, IcaModel, RankError, fit_fastica, inverse_transform, transform
from .recording import ChannelKind, Recording

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrialSet:
    """Trials stored concatenated: trial k occupies samples [k*L, (k+1)*L) of
    ``recording``, the first ``idle_len`` of them idle, the rest movement."""

    recording: Recording
    onsets: np.ndarray        # move onset sample in the source recording, per trial
    event_index: np.ndarray   # position of each trial in the sorted event list
    mean_force: np.ndarray    # per-trial mean force over the move epoch
    idle_len: int
    move_len: int
    n_skipped: int = 0
    preprocess: Optional[FilterSpec] = None

    @property
    def trial_len(self) -> int:
        return self.idle_len + self.move_len

    @property
    def n_trials(self) -> int:
        return len(self.onsets)

    @property
    def sample_rate(self) -> float:
        return self.recording.sample_rate

    @property
    def boundaries(self) -> np.ndarray:
        """(n_trials, 2) table of [start, stop) sample ranges in the concatenation."""
        starts = np.arange(self.n_trials) * self.trial_len
        return np.column_stack([starts, starts + self.trial_len])

    @property
    def move_bursts(self) -> list[tuple[int, int]]:
        return [(int(k * self.trial_len + self.idle_len), self.move_len) for k in range(self.n_trials)]

    def epochs(self, rows: np.ndarray) -> np.ndarray:
        """Reshape channel rows (..., n_trials*L) to (..., n_trials, L)."""
        rows = np.asarray(rows)
        return rows.reshape(rows.shape[:-1] + (self.n_trials, self.trial_len))

    def idle(self, rows: np.ndarray) -> np.ndarray:
        return self.epochs(rows)[..., :self.idle_len]

    def move(self, rows: np.ndarray) -> np.ndarray:
        return self.epochs(rows)[..., self.idle_len:]

    def with_recording(self, rec: Recording) -> "TrialSet":
        if rec.n_samples != self.recording.n_samples:
            raise ValueError("replacement recording must keep the trial layout")
        return replace(self, recording=rec)


def trial_index(onsets: np.ndarray, idle_len: int, move_len: int) -> np.ndarray:
    """Source-recording sample indices of the concatenated trials."""
    offs = np.arange(-idle_len, move_len)
    return (np.asarray(onsets, dtype=np.int64)[:, None] + offs[None, :]).ravel()


def trial_mean_force(force_row: np.ndarray, onsets: np.ndarray, move_len: int) -> np.ndarray:
    idx = np.asarray(onsets, dtype=np.int64)[:, None] + np.arange(move_len)[None, :]
    return np.asarray(force_row, dtype=float)[idx].mean(axis=1)


def valid_onsets(events_s: Sequence[float], sample_rate: float, n_samples: int,
                 idle_len: int, move_len: int):
    """Sorted onset samples that have room for a full trial, their sorted-event
    positions, and the number skipped."""
    onsets = np.sort(np.rint(np.asarray(events_s, dtype=float) * sample_rate).astype(np.int64))
    ok = (onsets - idle_len >= 0) & (onsets + move_len <= n_samples)
    return onsets[ok], np.flatnonzero(ok), int((~ok).sum())


def segment_trials(recording: Recording, events_s: Sequence[float], idle_len_s: float = 1.0,
                   move_len_s: float = 2.0, preprocess: Optional[FilterSpec] = None,
                   zero_phase: bool = False) -> TrialSet:
    """Extract (1 s idle, 2 s move) trials around each move onset and concatenate them.

    With ``preprocess`` given, scalp and virtual channels are filtered on the
    continuous recording before extraction; force channels are never filtered.
    Events too close to either edge are skipped with a warning.
    """
    fs = recording.sample_rate
    idle_len = int(round(idle_len_s * fs))
    move_len = int(round(move_len_s * fs))
    onsets, event_idx, skipped = valid_onsets(events_s, fs, recording.n_samples, idle_len, move_len)
    if skipped:
        warnings.warn(f"skipped {skipped} event(s) without a full idle/move window", stacklevel=2)
    if onsets.size == 0:
        raise ValueError("no complete trials in recording")
    idx = trial_index(onsets, idle_len, move_len)
    sos = design_butterworth(preprocess, fs) if preprocess is not None else None
    out = np.empty((recording.n_channels, idx.size))
    for i, kind in enumerate(recording.kinds):
        row = recording.data[i]
        if sos is not None and kind is not ChannelKind.FORCE:
            row = filter_forward(row, sos, zero_phase)
        out[i] = row[idx]
    force_idx = recording.indices(ChannelKind.FORCE)
    if force_idx.size:
        mean_force = trial_mean_force(recording.data[force_idx[0]], onsets, move_len)
    else:
        mean_force = np.zeros(onsets.size)
    rec = Recording(recording.labels, recording.kinds, fs, out)
    return TrialSet(rec, onsets, event_idx, mean_force, idle_len, move_len, skipped, preprocess)


def concatenate(trials: TrialSet) -> Recording:
    """The channelwise concatenation of all trials (boundaries in ``trials.boundaries``)."""
    if trials.n_trials == 0:
        raise ValueError("empty trial set")
    return trials.recording


def virtual_labels(n: int) -> tuple[str, ...]:
    return tuple(f"VEMG{i + 1}" for i in range(n))


def augment_with_virtual_channels(eeg: Recording, emg_sources, labels=None) -> Recording:
    """Append simulated EMG rows as channels of kind virtual after the existing ones."""
    src = np.atleast_2d(np.asarray(emg_sources, dtype=float))
    if src.size == 0:
        return eeg
    if src.shape[1] != eeg.n_samples:
        raise ValueError(f"EMG sources have {src.shape[1]} samples, recording has {eeg.n_samples}")
    labels = tuple(labels) if labels is not None else virtual_labels(src.shape[0])
    return Recording(
        eeg.labels + labels,
        eeg.kinds + (ChannelKind.VIRTUAL,) * src.shape[0],
        eeg.sample_rate,
        np.vstack([eeg.data, src]),
    )


def classify_artifact_ics(model: IcaModel, virtual_mask, theta: float = 1.0):
    """Loading-ratio rule: r_j = mean |A_ij| over virtual channels divided by
    mean |A_ij| over all channels, each mixing column at unit norm; reject r_j > theta.

    Returns (rejected component indices, scores).
    """
    mask = np.asarray(virtual_mask, dtype=bool)
    a = np.abs(model.mixing)
    if mask.shape != (a.shape[0],):
        raise ValueError(f"virtual mask needs {a.shape[0]} entries, got {mask.shape}")
    if not mask.any():
        raise ValueError("no virtual channels in model")
    norms = np.sqrt(np.sum(a * a, axis=0))
    if np.any(norms == 0):
        raise ValueError(f"mixing column of component {int(np.flatnonzero(norms == 0)[0])} is zero")
    a = a / norms
    scores = a[mask].mean(axis=0) / a.mean(axis=0)
    return tuple(int(j) for j in np.flatnonzero(scores > theta)), scores


@dataclass(frozen=True, eq=False)
class EraseResult:
    cleaned: Recording        # scalp (+ force) channels, virtual channels dropped
    model: IcaModel
    rejected: tuple[int, ...]
    rejection_scores: np.ndarray
    ica_input: Recording      # exactly what ICA was fitted on
    condition: str = "erase"


def fit_with_retries(data: np.ndarray, cfg: IcaConfig) -> IcaModel:
    last = None
    for attempt in range(cfg.retries + 1):
        seed = cfg.seed + attempt
        try:
            return fit_fastica(data, cfg.n_components, cfg.nonlinearity, cfg.max_iter, cfg.tol, seed)
        except IcaConvergenceError as exc:
            log.warning("ICA did not converge with seed %d (delta %.3g)", seed, exc.last_delta)
            last = exc
    raise last


def _rebuild(original: Recording, ica_rows: np.ndarray, cleaned_rows: np.ndarray) -> Recording:
    data = np.array(original.data, dtype=float, copy=True)
    data[ica_rows] = cleaned_rows
    return Recording(original.labels, original.kinds, original.sample_rate, data)


def simulate_virtual_channels(trials: TrialSet, spec: EmgSpec, zero_phase: bool = False) -> np.ndarray:
    """Simulated EMG on the concatenated timeline, bursts on the move epochs,
    filtered with the trials' preprocessing band."""
    gains = burst_gains(trials.mean_force, spec.force_coupling)
    src = simulate_emg(spec, trials.recording.n_samples, trials.sample_rate, trials.move_bursts, gains,
                       burst_ids=trials.event_index)
    if trials.preprocess is not None:
        src = filter_forward(src, design_butterworth(trials.preprocess, trials.sample_rate), zero_phase)
    return src


def run_erase(trials: TrialSet, emg_spec: EmgSpec, ica: IcaConfig = IcaConfig(), theta: float = 1.0,
              emg_sources: Optional[np.ndarray] = None, zero_phase: bool = False) -> EraseResult:
    """simulate EMG -> augment -> FastICA -> loading-ratio rejection -> back-projection.

    ``emg_sources`` (n_virtual x n_samples, aligned to the concatenated
    trials) overrides the simulation.
    """
    rec = trials.recording
    scalp = rec.indices(ChannelKind.SCALP)
    if emg_sources is None:
        emg_sources = simulate_virtual_channels(trials, emg_spec, zero_phase)
    augmented = augment_with_virtual_channels(rec.select(scalp), emg_sources)
    virtual = augmented.indices(ChannelKind.VIRTUAL)
    if virtual.size == 0:
        raise ValueError("ERASE needs at least one virtual EMG channel")
    # a silent virtual channel adds a zero row: the augmented covariance is
    # rank deficient and no component can load on that channel
    flat = [augmented.labels[i] for i in virtual if np.ptp(augmented.data[i]) == 0]
    if flat:
        rank = augmented.n_channels - len(flat)
        raise RankError(f"virtual channel(s) {flat} are constant; augmented data has rank <= {rank}", rank)
    model = fit_with_retries(augmented.data, ica)
    rejected, scores = classify_artifact_ics(model, augmented.mask(ChannelKind.VIRTUAL), theta)
    comps = transform(model, augmented.data)
    back = inverse_transform(model, comps, rejected)
    del comps
    cleaned = _rebuild(rec, scalp, back[:scalp.size])
    log.info("ERASE rejected %d of %d components", len(rejected), model.n_components)
    return EraseResult(cleaned, model, rejected, scores, augmented, "erase")


def gamma_power_fraction(components: np.ndarray, sample_rate: float, dsp: DspConfig = DspConfig()) -> np.ndarray:
    """Share of each component's spectral power that lies in the high-gamma band."""
    lo, hi = dsp.gamma.low_hz, dsp.gamma.high_hz
    out = np.empty(components.shape[0])
    for j, row in enumerate(components):
        spec = stft_power(row, sample_rate, dsp.stft_window, dsp.stft_hop)
        psd = spec.power.mean(axis=0)
        band = (spec.freqs_hz >= lo) & (spec.freqs_hz <= hi)
        total = psd.sum()
        out[j] = psd[band].sum() / total if total > 0 else 0.0
    return out


def run_conventional_ica(trials: TrialSet, ica: IcaConfig = IcaConfig(), gamma_fraction: float = 0.5,
                         dsp: DspConfig = DspConfig()) -> EraseResult:
    """ICA on the scalp channels alone; reject components whose high-gamma
    power share exceeds ``gamma_fraction``."""
    rec = trials.recording
    scalp = rec.indices(ChannelKind.SCALP)
    eeg = rec.select(scalp)
    model = fit_with_retries(eeg.data, ica)
    comps = transform(model, eeg.data)
    scores = gamma_power_fraction(comps, rec.sample_rate, dsp)
    rejected = tuple(int(j) for j in np.flatnonzero(scores > gamma_fraction))
    back = inverse_transform(model, comps, rejected)
    del comps
    cleaned = _rebuild(rec, scalp, back)
    return EraseResult(cleaned, model, rejected, scores, eeg, "conventional")


CONDITIONS = ("baseline", "erase", "conventional")


def preprocess_recording(recording: Recording, events_s: Sequence[float], cfg: PipelineConfig) -> TrialSet:
    return segment_trials(recording, events_s, cfg.trials.idle_len_s, cfg.trials.move_len_s,
                          cfg.dsp.preprocess, cfg.dsp.zero_phase)


def virtual_channels_for_recording(recording: Recording, trials: TrialSet, spec: EmgSpec,
                                   cfg: PipelineConfig) -> np.ndarray:
    """Simulated EMG laid out on the continuous timeline, then filtered and cut
    like the EEG (combine, filter, extract)."""
    fs = recording.sample_rate
    bursts = [(int(o), trials.move_len) for o in trials.onsets]
    gains = burst_gains(trials.mean_force, spec.force_coupling)
    src = simulate_emg(spec, recording.n_samples, fs, bursts, gains, burst_ids=trials.event_index)
    sos = design_butterworth(cfg.dsp.preprocess, fs)
    idx = trial_index(trials.onsets, trials.idle_len, trials.move_len)
    out = np.empty((src.shape[0], idx.size))
    for m in range(src.shape[0]):
        out[m] = filter_forward(src[m], sos, cfg.dsp.zero_phase)[idx]
    return out


def process(recording: Recording, events_s: Sequence[float], condition: str,
            cfg: PipelineConfig = PipelineConfig()):
    """Run one condition end to end on a continuous recording.

    Returns ``(trials, result)``: the preprocessed trials (cleaned for the
    ICA conditions) and the EraseResult, or None for baseline.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    trials = preprocess_recording(recording, events_s, cfg)
    if condition == "baseline":
        return trials, None
    if condition == "erase":
        sources = virtual_channels_for_recording(recording, trials, cfg.erase.emg, cfg)
        result = run_erase(trials, cfg.erase.emg, cfg.ica, cfg.erase.theta, emg_sources=sources)
    else:
        result = run_conventional_ica(trials, cfg.ica, cfg.conventional.gamma_fraction, cfg.dsp)
    return trials.with_recording(result.cleaned), result
