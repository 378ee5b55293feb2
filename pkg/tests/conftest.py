"""Shared fixtures: the default 200-trial harness scene and its three
processing conditions, computed once per session and reduced to summaries so
the large intermediate arrays can be released."""

import gc
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from erase.config import PipelineConfig
from erase.metrics import BandPowerSummary, FdCorrelation, RegionSummary, band_power_summaries, fd_correlation, \
    region_summary, snr_db
from erase.pipeline import process
from erase.synth import Scorecard, SceneSpec, generate_scene, oracle_scores, tune_theta


@dataclass
class ConditionSummary:
    bands: dict
    fd: FdCorrelation
    region: RegionSummary
    gamma_snr: np.ndarray           # (n_trials, n_hand_motor)
    scorecard: Scorecard = None
    rejected: tuple = ()
    scores: np.ndarray = None
    seconds: float = 0.0

    @property
    def gamma(self) -> BandPowerSummary:
        return self.bands["gamma"]


@dataclass
class DefaultRun:
    scene: object
    conditions: dict = field(default_factory=dict)
    tuned: tuple = ()
    scene_seconds: float = 0.0


def _summarize(trials, scene, cfg):
    bands = band_power_summaries(trials, dsp=cfg.dsp, alpha=cfg.metrics.alpha)
    fd = fd_correlation(trials, dsp=cfg.dsp, metrics=cfg.metrics)
    snr = snr_db(trials, scene.montage.hand_motor, cfg.dsp.gamma, cfg.dsp.smoother, zero_phase=cfg.dsp.zero_phase)
    return ConditionSummary(bands, fd, region_summary(bands["gamma"], fd, scene.montage), snr)


@pytest.fixture(scope="session")
def default_run():
    cfg = PipelineConfig()
    t0 = time.perf_counter()
    scene = generate_scene(SceneSpec())
    run = DefaultRun(scene, scene_seconds=time.perf_counter() - t0)

    t0 = time.perf_counter()
    base_trials, _ = process(scene.recording, scene.events_s, "baseline", cfg)
    run.conditions["baseline"] = _summarize(base_trials, scene, cfg)
    run.conditions["baseline"].seconds = time.perf_counter() - t0

    for cond in ("erase", "conventional"):
        t0 = time.perf_counter()
        trials, result = process(scene.recording, scene.events_s, cond, cfg)
        summary = _summarize(trials, scene, cfg)
        summary.scorecard = oracle_scores(result, scene, base_trials, cfg)
        summary.rejected = result.rejected
        summary.scores = np.asarray(result.rejection_scores)
        summary.seconds = time.perf_counter() - t0
        if cond == "erase":
            run.tuned = tune_theta(summary.scores, summary.scorecard.planted)
        run.conditions[cond] = summary
        del trials, result
        gc.collect()
    del base_trials
    gc.collect()
    return run


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion's outcome: ``criterion(n, ok, detail)``."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}"
        _CRITERIA[number] = line
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
