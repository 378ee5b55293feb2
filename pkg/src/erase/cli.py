"""Command-line interface: ``erase simulate | run | report``.

Exit codes: 0 success, 1 runtime failure (I/O, malformed input, pipeline
error), 2 usage error or invalid configuration. Every option can also be
set through an ``ERASE_<OPTION>`` environment variable; the flag wins.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, build, load_json, pipeline_config, to_dict
from .dsp import InvalidFilterSpec
from .fastica import save_model
from .io import read_events, read_recording, write_events, write_recording
from .metrics import compute_metrics, percent_reduction, region_electrodes
from .montage import MontageError, read_montage, write_montage
from .pipeline import CONDITIONS, preprocess_recording, process
from .recording import ChannelKind, Recording
from .report import (bar_chart_svg, read_band_power_csv, read_fd_correlation_csv, read_region_summary_csv,
                     topography_svg, write_band_power_csv, write_components_csv, write_fd_correlation_csv,
                     write_fd_levels_csv, write_region_summary_csv, write_snr_csv)
from .synth import SceneSpec, generate_scene

log = logging.getLogger("erase")


class UsageFailure(click.ClickException):
    exit_code = 2


class RuntimeFailure(click.ClickException):
    exit_code = 1


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out: Path, payload: dict, outputs: list[Path]) -> None:
    payload = dict(payload)
    payload["version"] = __version__
    payload["outputs"] = {p.relative_to(out).as_posix(): sha256(p) for p in sorted(outputs)}
    (out / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_raw(config: Optional[Path]) -> dict:
    if config is None:
        return {}
    return load_json(config)


def scene_spec(raw: dict, seed: Optional[int] = None) -> SceneSpec:
    spec = build(SceneSpec, raw.get("scene", {}), "scene")
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    try:
        spec.validate()
        spec.montage()
    except (ValueError, MontageError) as exc:
        raise ConfigError(f"scene: {exc}") from None
    return spec


def _guard(fn):
    """Map library exceptions onto exit codes, naming the raising module."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ConfigError, InvalidFilterSpec) as exc:
            raise UsageFailure(f"invalid configuration: {exc}") from None
        except (OSError, MemoryError) as exc:
            raise RuntimeFailure(f"I/O error: {exc}") from None
        except Exception as exc:  # surfaced with provenance, exit 1
            module = type(exc).__module__
            raise RuntimeFailure(f"{module}.{type(exc).__name__}: {exc}") from None

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="erase")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """EMG artifact reduction for EEG with simulated-EMG reference channels."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


_config_opt = click.option("--config", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                           envvar="ERASE_CONFIG", help="JSON configuration file.")
_seed_opt = click.option("--seed", type=int, envvar="ERASE_SEED", default=None)
_out_opt = click.option("--out", type=click.Path(file_okay=False, path_type=Path), envvar="ERASE_OUT",
                        required=True, help="Output directory (created if missing).")


@main.command()
@_config_opt
@_seed_opt
@_out_opt
@_guard
def simulate(config: Optional[Path], seed: Optional[int], out: Path) -> None:
    """Generate a synthetic scene with its ground truth.

    Writes recording.ercd (scalp + force), events.txt, montage.csv and
    truth/ (clean.ercd, emg.ercd, emg_sources.ercd, truth.json). The sensor
    noise is recording - clean - emg.
    """
    spec = scene_spec(_load_raw(config), seed)
    scene = generate_scene(spec)
    out.mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(exist_ok=True)
    fs = scene.recording.sample_rate
    scalp = (ChannelKind.SCALP,) * len(scene.scalp_labels)
    files = [out / "recording.ercd", out / "events.txt", out / "montage.csv",
             out / "truth" / "clean.ercd", out / "truth" / "emg.ercd", out / "truth" / "emg_sources.ercd",
             out / "truth" / "truth.json"]
    write_recording(files[0], scene.recording)
    write_events(files[1], scene.events_s)
    write_montage(files[2], scene.montage)
    write_recording(files[3], Recording(scene.scalp_labels, scalp, fs, scene.clean))
    write_recording(files[4], Recording(scene.scalp_labels, scalp, fs, scene.emg))
    n_src = scene.emg_sources.shape[0]
    write_recording(files[5], Recording(tuple(f"EMG{m + 1}" for m in range(n_src)),
                                        (ChannelKind.VIRTUAL,) * n_src, fs, scene.emg_sources))
    truth = {
        "target_force": [float(x) for x in scene.target_force],
        "mean_force": [float(x) for x in scene.mean_force],
        "emg_weights": {l: [float(w) for w in scene.emg_weights[i]] for i, l in enumerate(scene.scalp_labels)},
        "quantum_uv": scene.quantum,
    }
    files[6].write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, {"command": "simulate", "scene": to_dict(spec), "seeds": {"scene": spec.seed,
                                                                                  "emg": spec.emg.seed}}, files)
    click.echo(f"wrote scene with {spec.n_trials} trials to {out}")


def _sibling(recording: Path, name: str) -> Optional[Path]:
    p = recording.parent / name
    return p if p.exists() else None


@main.command()
@click.argument("recording", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--events", type=click.Path(exists=True, dir_okay=False, path_type=Path), envvar="ERASE_EVENTS",
              help="Movement onsets, one per line in seconds [default: events.txt next to RECORDING].")
@click.option("--montage", type=click.Path(exists=True, dir_okay=False, path_type=Path), envvar="ERASE_MONTAGE",
              help="Montage CSV [default: montage.csv next to RECORDING, else the bundled layout].")
@click.option("--condition", type=click.Choice(CONDITIONS), envvar="ERASE_CONDITION", default="erase",
              show_default=True)
@_config_opt
@click.option("--seed", type=int, envvar="ERASE_SEED", default=None, help="ICA initialization seed.")
@click.option("--theta", type=float, envvar="ERASE_THETA", default=None, help="ERASE rejection threshold.")
@_out_opt
@_guard
def run(recording: Path, events: Optional[Path], montage: Optional[Path], condition: str,
        config: Optional[Path], seed: Optional[int], theta: Optional[float], out: Path) -> None:
    """Clean RECORDING under one condition and compute the metrics."""
    cfg = pipeline_config(_load_raw(config))
    if seed is not None:
        cfg = dataclasses.replace(cfg, ica=dataclasses.replace(cfg.ica, seed=seed))
    if theta is not None:
        if not theta > 0:
            raise UsageFailure(f"--theta must be positive, got {theta}")
        cfg = dataclasses.replace(cfg, erase=dataclasses.replace(cfg.erase, theta=theta))
    events = events or _sibling(recording, "events.txt")
    if events is None:
        raise UsageFailure("no --events given and no events.txt next to the recording")
    montage = montage or _sibling(recording, "montage.csv")
    mont = read_montage(montage)
    rec = read_recording(recording)
    onsets = read_events(events)
    trials, result = process(rec, onsets, condition, cfg)
    report = compute_metrics(trials, mont, cfg.dsp, cfg.metrics)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    extra: dict[str, object] = {"condition": condition, "n_trials": trials.n_trials}
    if result is not None:
        files.append(out / "cleaned.ercd")
        write_recording(files[-1], result.cleaned)
        files.append(out / "ica_model.bin")
        save_model(files[-1], result.model)
        files.append(out / "components.csv")
        name = "loading_ratio" if condition == "erase" else "gamma_fraction"
        write_components_csv(files[-1], result.rejection_scores, result.rejected, name)
        extra["n_rejected"] = len(result.rejected)
        del result
        before = compute_gamma_baseline(rec, onsets, cfg)
        nha = region_electrodes(report.labels, mont, "NHA")
        if nha and float(np.mean([before.value(e) for e in nha])) > 0:
            extra["gamma_reduction_nha_percent"] = percent_reduction(before, report.bands["gamma"], nha)
    del trials
    for name, writer in (("band_power.csv", lambda p: write_band_power_csv(p, report.bands, mont)),
                         ("snr.csv", lambda p: write_snr_csv(p, report.labels, report.snr, report.mean_force)),
                         ("fd_correlation.csv", lambda p: write_fd_correlation_csv(p, report.fd, mont)),
                         ("fd_levels.csv", lambda p: write_fd_levels_csv(p, report.fd)),
                         ("region_summary.csv", lambda p: write_region_summary_csv(p, report.region, extra))):
        files.append(out / name)
        writer(files[-1])
    inputs = {"recording": recording, "events": events}
    if montage is not None:
        inputs["montage"] = montage
    payload = {
        "command": "run",
        "condition": condition,
        "config": to_dict(cfg),
        "seeds": {"ica": cfg.ica.seed, "virtual_emg": cfg.erase.emg.seed},
        "inputs": {k: {"name": p.name, "sha256": sha256(p)} for k, p in inputs.items()},
        "n_virtual": cfg.erase.emg.n_sources if condition == "erase" else 0,
    }
    _write_manifest(out, payload, files)
    click.echo(f"{condition}: wrote {len(files)} files to {out}")


def compute_gamma_baseline(rec: Recording, onsets, cfg: PipelineConfig):
    """High-gamma summary of the uncleaned trials, the reference for percent reduction."""
    from .metrics import band_power_z

    trials = preprocess_recording(rec, onsets, cfg)
    return band_power_z(trials, "gamma", dsp=cfg.dsp, alpha=cfg.metrics.alpha)


@main.command()
@click.argument("metrics_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--montage", type=click.Path(exists=True, dir_okay=False, path_type=Path), envvar="ERASE_MONTAGE",
              help="Montage CSV [default: the bundled layout].")
@_out_opt
@_guard
def report(metrics_dir: Path, montage: Optional[Path], out: Path) -> None:
    """Render topographies and the correlation bar chart from a run directory."""
    mont = read_montage(montage)
    bands = read_band_power_csv(metrics_dir / "band_power.csv")
    sig_r = read_fd_correlation_csv(metrics_dir / "fd_correlation.csv")
    summary = read_region_summary_csv(metrics_dir / "region_summary.csv")
    n_virtual = 0
    if (metrics_dir / "manifest.json").exists():
        n_virtual = int(json.loads((metrics_dir / "manifest.json").read_text()).get("n_virtual", 0))
    condition = summary.get("condition", "")
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for band in sorted(bands):
        vals = {l: v[0] for l, v in bands[band].items()}
        sig = {l: v[2] for l, v in bands[band].items()}
        files.append(out / f"topography_{band}.svg")
        files[-1].write_text(topography_svg(vals, sig, mont, f"{condition} z-scored {band} power (move)",
                                            n_virtual=n_virtual))
    files.append(out / "fd_correlation_bars.svg")
    files[-1].write_text(bar_chart_svg(sig_r, mont, f"{condition} significant |R| relative FD vs force"))
    files.append(out / "summary.csv")
    files[-1].write_text("quantity,value\n" + "".join(f"{k},{v}\n" for k, v in summary.items()))
    _write_manifest(out, {"command": "report", "inputs": {
        p.name: sha256(p) for p in sorted(metrics_dir.glob("*.csv"))}}, files)
    click.echo(f"wrote {len(files)} report files to {out}")


if __name__ == "__main__":  # pragma: no cover
    main()
