"""Ground-truth scene generator and oracle scoring for the cleaning pipeline.

A scene is a continuous recording of repeated 2 s flexions separated by
3-5 s rests, built as ``recording = clean + emg + noise`` on the scalp
channels plus a force channel:

* ``clean`` mixes spatially smooth background sources with movement-locked
  neural sources: high-gamma synchronization over the hand motor area whose
  amplitude grows with trial force, and mu desynchronization.
* ``emg`` projects force-scaled simulated EMG bursts onto the scalp, mostly
  over the non-hemicraniectomy side.
* ``noise`` is white sensor noise, regenerated from the seed on demand.

All arrays are float32 to keep 200-trial scenes within a few hundred MB.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

from .config import DspConfig, PipelineConfig
from .dsp import bandpass, design_butterworth, envelope_power, filter_forward, lowpass
from .emg import EmgSpec, burst_gains, simulate_emg, trapezoid
from .fastica import transform
from .montage import Montage, default_montage
from .pipeline import EraseResult, TrialSet, trial_index, trial_mean_force
from .recording import ChannelKind, Recording

SCENE_LABELS = (
    # left hand motor (HA) and their right homologues
    "C3", "C5", "C1", "FCC5h", "FCC3h", "CCP5h", "CCP3h",
    "C4", "C6", "C2", "FCC6h", "FCC4h", "CCP4h", "CCP6h",
    # further HA electrodes
    "F3", "F7", "FC5", "FT7", "T7", "TP7", "CP5", "P3",
    # further NHA electrodes
    "F4", "F8", "FC6", "FT8", "T8", "TP8", "CP6", "P4", "Fz", "Pz",
)


@dataclass(frozen=True)
class NeuralSource:
    name: str
    electrodes: tuple[str, ...]
    band_low_hz: float
    band_high_hz: float
    amplitude: float        # uV RMS of the unit-gain source at its peak electrode
    idle_gain: float = 1.0
    move_gain: float = 1.0
    force_coupling: float = 0.0  # move gain *= 1 + coupling * normalized trial force
    width: float = 0.2
    modulation: float = 0.0  # SD of an independent slow log-amplitude fluctuation


def _default_neural() -> tuple[NeuralSource, ...]:
    return (
        NeuralSource("gamma_hand_motor", ("C3", "FCC3h", "CCP3h"), 80.0, 160.0, 1.5,
                     idle_gain=0.4, move_gain=1.0, force_coupling=2.0, width=0.15),
        NeuralSource("mu_hand_motor", ("C3",), 8.0, 12.0, 6.0, idle_gain=1.0, move_gain=0.35, width=0.2),
        NeuralSource("mu_contralesional", ("C4",), 8.0, 12.0, 4.0, width=0.2),
        # weaker move-related gamma spread over the rest of the hand area, not force coupled
        NeuralSource("gamma_ha_broad", ("FC5", "C5", "CP5", "T7"), 80.0, 160.0, 1.0,
                     idle_gain=0.4, move_gain=1.0, width=0.3),
    )


@dataclass(frozen=True)
class SceneSpec:
    n_trials: int = 200
    sample_rate: float = 2000.0
    labels: Optional[tuple[str, ...]] = SCENE_LABELS  # None: all bundled electrodes
    ha_side: str = "left"
    move_s: float = 2.0
    gap_min_s: float = 3.0
    gap_max_s: float = 5.0
    lead_s: float = 2.0
    force_min: float = 0.2
    force_max: float = 1.0
    force_ramp_s: float = 0.15
    force_noise: float = 0.005
    neural: tuple[NeuralSource, ...] = field(default_factory=_default_neural)
    n_background: int = 28  # background + neural sources = channel count
    background_amplitude: float = 5.0
    background_width: float = 0.3
    emg: EmgSpec = EmgSpec()
    emg_centers: tuple[str, ...] = ("T8", "FT8", "TP8", "F8", "FC6", "CP6", "P4", "F4")
    emg_width: float = 0.3
    emg_gain: float = 1.0
    noise_sigma: float = 0.5
    seed: int = 7

    def validate(self) -> None:
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not 0 < self.gap_min_s <= self.gap_max_s:
            raise ValueError("need 0 < gap_min_s <= gap_max_s")
        if self.emg_gain < 0 or self.noise_sigma < 0 or self.background_amplitude < 0:
            raise ValueError("gains and noise levels must be non-negative")
        for s in self.neural:
            if min(s.idle_gain, s.move_gain) < 0 or s.force_coupling < 0:
                raise ValueError(f"neural source {s.name}: gains must be non-negative")
        if self.emg_gain > 0:
            self.emg.validate(self.sample_rate)
        if len(self.emg_centers) < 1:
            raise ValueError("emg_centers must name at least one electrode")

    def montage(self) -> Montage:
        full = default_montage(self.ha_side)
        return full if self.labels is None else full.subset(self.labels)


@dataclass(frozen=True, eq=False)
class Scene:
    spec: SceneSpec
    recording: Recording       # scalp channels then force
    montage: Montage
    events_s: np.ndarray
    onsets: np.ndarray
    target_force: np.ndarray
    mean_force: np.ndarray
    clean: np.ndarray          # (n_scalp, n_samples) float32
    emg: np.ndarray            # (n_scalp, n_samples) float32, projected EMG
    emg_sources: np.ndarray    # (n_emg, n_samples) float32
    emg_weights: np.ndarray    # (n_scalp, n_emg)
    quantum: float             # grid step of every stored part (uV)

    @property
    def scalp_labels(self) -> tuple[str, ...]:
        return self.montage.labels

    def noise(self, channel: Optional[int] = None) -> np.ndarray:
        n = self.recording.n_samples
        if channel is not None:
            return _noise_row(self.spec, channel, n, self.quantum)
        return np.vstack([_noise_row(self.spec, c, n, self.quantum) for c in range(len(self.scalp_labels))])


def _noise_row(spec: SceneSpec, channel: int, n: int, quantum: Optional[float] = None) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 99, channel])
    x = (spec.noise_sigma * rng.standard_normal(n)).astype(np.float32)
    return x if quantum is None else _quantize(x, quantum)


def _quantize(x: np.ndarray, quantum: float) -> np.ndarray:
    return (np.round(x / np.float32(quantum)) * np.float32(quantum)).astype(np.float32)


def _grid(bound: float) -> float:
    """Power-of-two step q such that every multiple of q up to ``bound`` is an
    exact float32 and sums of three such parts stay exact."""
    bound = max(float(bound), 1e-30)
    return float(2.0 ** (np.ceil(np.log2(bound)) - 23))


def _spatial(positions: np.ndarray, centers: np.ndarray, width: float) -> np.ndarray:
    """Gaussian falloff from the nearest centre, peak 1."""
    d2 = ((positions[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1).min(axis=1)
    return np.exp(-d2 / (2.0 * width * width))


def _band_noise(rng, n: int, fs: float, lo: float, hi: float) -> np.ndarray:
    sos = design_butterworth(bandpass(lo, hi, 4), fs)
    x = filter_forward(rng.standard_normal(n), sos)
    return x / np.sqrt(np.mean(x * x))


def _log_envelope(rng, n: int, fs: float, sd: float, cutoff_hz: float = 2.0) -> np.ndarray:
    """exp(sd * unit-variance low-passed noise), normalized to unit mean square."""
    slow = filter_forward(rng.standard_normal(n), design_butterworth(lowpass(cutoff_hz, 2), fs))
    env = np.exp(sd * slow / np.std(slow))
    return env / np.sqrt(np.mean(env * env))


def _background(rng, n: int, fs: float) -> np.ndarray:
    """Unit-RMS 1/f noise with a slow log-normal amplitude modulation (super-Gaussian)."""
    m = sp_fft.next_fast_len(n, real=True)
    spec = sp_fft.rfft(rng.standard_normal(m))
    f = sp_fft.rfftfreq(m, 1.0 / fs)
    f[0] = f[1]
    x = sp_fft.irfft(spec / np.sqrt(f), m)[:n]
    x *= _log_envelope(rng, n, fs, 0.6, cutoff_hz=0.3)
    return x / np.sqrt(np.mean(x * x))


def _gain_profile(n: int, onsets: np.ndarray, move_len: int, idle_gain: float,
                  move_gains: np.ndarray, ramp: int) -> np.ndarray:
    g = np.full(n, idle_gain, dtype=float)
    shape = trapezoid(move_len, ramp)
    for o, mg in zip(onsets, move_gains):
        g[o:o + move_len] = idle_gain + (mg - idle_gain) * shape
    return g


def generate_scene(spec: SceneSpec = SceneSpec()) -> Scene:
    spec.validate()
    montage = spec.montage()
    for label in spec.emg_centers:
        if label not in montage.labels:
            raise ValueError(f"EMG centre {label!r} is not in the scene montage")
    for s in spec.neural:
        for label in s.electrodes:
            if label not in montage.labels:
                raise ValueError(f"neural source {s.name} names {label!r}, not in the scene montage")
    fs = spec.sample_rate
    rng = np.random.default_rng(spec.seed)
    move_len = int(round(spec.move_s * fs))
    lead = int(round(spec.lead_s * fs))
    gaps = rng.uniform(spec.gap_min_s, spec.gap_max_s, spec.n_trials)
    onsets = np.empty(spec.n_trials, dtype=np.int64)
    pos = lead + int(round(gaps[0] * fs))
    for k in range(spec.n_trials):
        onsets[k] = pos
        if k + 1 < spec.n_trials:
            pos += move_len + int(round(gaps[k + 1] * fs))
    n = int(onsets[-1] + move_len + lead)
    target = rng.uniform(spec.force_min, spec.force_max, spec.n_trials)

    force = np.zeros(n)
    ramp_f = int(round(spec.force_ramp_s * fs))
    shape = trapezoid(move_len, ramp_f)
    for o, f in zip(onsets, target):
        force[o:o + move_len] = f * shape
    force += spec.force_noise * rng.standard_normal(n)
    force = force.astype(np.float32)
    mean_force = trial_mean_force(force, onsets, move_len)
    span = mean_force.max() - mean_force.min()
    norm_force = (mean_force - mean_force.min()) / span if span > 0 else np.zeros_like(mean_force)

    pos_xy = montage.positions
    n_ch = len(montage)
    weights, series_seeds = [], []
    # Background: random smooth blobs plus a weak dense component for conditioning.
    for b in range(spec.n_background):
        center = rng.uniform(-0.8, 0.8, size=(1, 2))
        w = _spatial(pos_xy, center, spec.background_width) + 0.3 * rng.standard_normal(n_ch)
        weights.append(spec.background_amplitude * w / np.max(np.abs(w)))
        series_seeds.append(("bg", b))
    for j, s in enumerate(spec.neural):
        centers = np.array([montage.position(l) for l in s.electrodes])
        weights.append(s.amplitude * _spatial(pos_xy, centers, s.width))
        series_seeds.append(("neural", j))
    mixing = np.column_stack(weights)

    clean = np.zeros((n_ch, n), dtype=np.float32)
    ramp_n = int(round(0.05 * fs))
    for col, (kind, j) in enumerate(series_seeds):
        srng = np.random.default_rng([spec.seed, 1 if kind == "bg" else 2, j])
        if kind == "bg":
            x = _background(srng, n, fs)
        else:
            s = spec.neural[j]
            x = _band_noise(srng, n, fs, s.band_low_hz, s.band_high_hz)
            mg = s.move_gain * (1.0 + s.force_coupling * norm_force)
            x *= _gain_profile(n, onsets, move_len, s.idle_gain, mg, ramp_n)
            if s.modulation > 0:
                x *= _log_envelope(srng, n, fs, s.modulation)
        for c in range(n_ch):
            clean[c] += (mixing[c, col] * x).astype(np.float32)

    emg_weights = spec.emg_gain * _spatial_each(pos_xy, np.array([montage.position(l) for l in spec.emg_centers]),
                                                spec.emg_width, spec.emg.n_sources)
    if spec.emg_gain > 0:
        gains = burst_gains(mean_force, spec.emg.force_coupling)
        bursts = [(int(o), move_len) for o in onsets]
        sources = simulate_emg(spec.emg, n, fs, bursts, gains)
    else:
        sources = np.zeros((spec.emg.n_sources, n))
    emg = np.zeros((n_ch, n), dtype=np.float32)
    for c in range(n_ch):
        emg[c] = (emg_weights[c] @ sources).astype(np.float32)
    sources = sources.astype(np.float32)

    # Snap all parts to a common power-of-two grid, so clean + emg + noise is
    # exact in float32 and the decomposition holds bit for bit.
    noise_max = max(float(np.max(np.abs(_noise_row(spec, c, n)))) for c in range(n_ch))
    bound = float(np.max(np.abs(clean))) + float(np.max(np.abs(emg))) + noise_max
    quantum = _grid(2.0 * bound)
    data = np.empty((n_ch + 1, n), dtype=np.float32)
    for c in range(n_ch):
        clean[c] = _quantize(clean[c], quantum)
        emg[c] = _quantize(emg[c], quantum)
        data[c] = clean[c] + emg[c] + _noise_row(spec, c, n, quantum)
    data[n_ch] = force
    rec = Recording(montage.labels + ("FORCE",), (ChannelKind.SCALP,) * n_ch + (ChannelKind.FORCE,), fs, data)
    return Scene(spec, rec, montage, onsets / fs, onsets, target, mean_force, clean, emg, sources, emg_weights,
                 quantum)


def _spatial_each(positions: np.ndarray, centers: np.ndarray, width: float, n_sources: int) -> np.ndarray:
    """(n_channels, n_sources) projection; source m is centred on centers[m % len(centers)]."""
    cols = []
    for m in range(n_sources):
        c = centers[m % len(centers)][None, :]
        cols.append(_spatial(positions, c, width))
    return np.column_stack(cols)


@dataclass(frozen=True)
class Scorecard:
    labels: tuple[str, ...]
    residual_emg_fraction: np.ndarray   # per channel, NaN where no EMG was injected
    emg_reduction_nha: float            # percent of NHA high-gamma EMG power removed
    distortion_corr: dict               # hand-motor electrode -> envelope correlation
    planted: tuple[int, ...]
    rejected: tuple[int, ...]
    recall: float
    precision: float

    @property
    def mean_distortion_corr(self) -> float:
        return float(np.mean(list(self.distortion_corr.values())))


def _cut(row: np.ndarray, trials: TrialSet, sos, zero_phase: bool) -> np.ndarray:
    idx = trial_index(trials.onsets, trials.idle_len, trials.move_len)
    return filter_forward(np.asarray(row, dtype=float), sos, zero_phase)[idx]


def planted_components(components: np.ndarray, true_sources: np.ndarray, min_corr: float = 0.5):
    """Component index best matching each true source (|corr| >= min_corr)."""
    s = components - components.mean(axis=1, keepdims=True)
    t = true_sources - true_sources.mean(axis=1, keepdims=True)
    s_norm = np.sqrt((s * s).sum(axis=1))
    t_norm = np.sqrt((t * t).sum(axis=1))
    corr = np.abs(s @ t.T) / np.outer(np.where(s_norm > 0, s_norm, 1), np.where(t_norm > 0, t_norm, 1))
    best = corr.argmax(axis=0)
    return tuple(sorted({int(best[m]) for m in range(t.shape[0]) if corr[best[m], m] >= min_corr})), corr


def recall_precision(rejected, planted) -> tuple[float, float]:
    rej, pl = set(rejected), set(planted)
    hit = len(rej & pl)
    recall = hit / len(pl) if pl else 1.0
    precision = hit / len(rej) if rej else (1.0 if not pl else 0.0)
    return recall, precision


def tune_theta(scores: np.ndarray, planted) -> tuple[float, float, float]:
    """Threshold maximizing F1 of the rejected set against ``planted``.

    Candidates sit midway between consecutive sorted scores; returns
    (theta, recall, precision).
    """
    s = np.sort(np.asarray(scores, dtype=float))
    cands = np.concatenate([[s[0] - 1.0], 0.5 * (s[1:] + s[:-1]), [s[-1] + 1.0]])
    best = None
    for th in cands:
        rej = np.flatnonzero(scores > th)
        r, p = recall_precision(rej, planted)
        f1 = 2 * r * p / (r + p) if r + p > 0 else 0.0
        key = (f1, r, -th)
        if best is None or key > best[0]:
            best = (key, float(th), r, p)
    return best[1], best[2], best[3]


def oracle_scores(result: Optional[EraseResult], scene: Scene, trials: TrialSet,
                  cfg: PipelineConfig = PipelineConfig(), cleaned: Optional[Recording] = None) -> Scorecard:
    """Compare a cleaned trial set with the scene's decomposition.

    ``trials`` is the preprocessed (uncleaned) trial set of the scene; the
    cleaned data come from ``result`` or, for an untouched input, ``cleaned``.
    """
    if cleaned is None:
        if result is None:
            raise ValueError("need a result or a cleaned recording")
        cleaned = result.cleaned
    if cleaned.n_samples != trials.recording.n_samples:
        raise ValueError("cleaned recording is not aligned with the scene trials")
    fs = scene.recording.sample_rate
    dsp = cfg.dsp
    pre = design_butterworth(dsp.preprocess, fs)
    gsos = design_butterworth(dsp.gamma, fs)
    labels = scene.scalp_labels
    frac = np.full(len(labels), np.nan)
    resid_pow = np.zeros(len(labels))
    emg_pow = np.zeros(len(labels))
    dist = {}
    hand = set(scene.montage.hand_motor)
    for c, label in enumerate(labels):
        clean = _cut(scene.clean[c], trials, pre, dsp.zero_phase)
        noise = _cut(scene.noise(c), trials, pre, dsp.zero_phase)
        emg = _cut(scene.emg[c], trials, pre, dsp.zero_phase)
        out = np.asarray(cleaned.data[cleaned.index(label)], dtype=float)
        resid = filter_forward(out - clean - noise, gsos, dsp.zero_phase)
        eg = filter_forward(emg, gsos, dsp.zero_phase)
        resid_pow[c] = float(resid @ resid)
        emg_pow[c] = float(eg @ eg)
        if emg_pow[c] > 0:
            frac[c] = resid_pow[c] / emg_pow[c]
        elif resid_pow[c] <= 1e-10 * float(clean @ clean):
            frac[c] = 0.0  # nothing injected and nothing left beyond round-off
        if label in hand:
            e_clean = envelope_power(clean, fs, dsp.gamma, dsp.smoother, dsp.zero_phase)
            e_out = envelope_power(out, fs, dsp.gamma, dsp.smoother, dsp.zero_phase)
            dist[label] = float(np.corrcoef(e_clean, e_out)[0, 1])
    nha = np.array([scene.montage.region(l) == "NHA" for l in labels])
    total = emg_pow[nha].sum()
    reduction = 100.0 * (1.0 - resid_pow[nha].sum() / total) if total > 0 else 0.0
    if result is not None and scene.emg_sources.any():
        truth = np.vstack([_cut(s, trials, pre, dsp.zero_phase) for s in scene.emg_sources])
        comps = transform(result.model, result.ica_input.data)
        planted, _ = planted_components(comps, truth)
        rejected = result.rejected
    else:
        planted, rejected = (), tuple(result.rejected) if result is not None else ()
    recall, precision = recall_precision(rejected, planted)
    return Scorecard(labels, frac, reduction, dist, planted, tuple(rejected), recall, precision)
