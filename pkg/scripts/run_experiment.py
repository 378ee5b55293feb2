"""Generate a harness scene and compare baseline, ERASE and conventional ICA.

    python3 scripts/run_experiment.py --trials 60
"""

import time

from _common import load, parser

from erase.metrics import band_power_summaries, fd_correlation, percent_reduction, region_electrodes, region_summary
from erase.pipeline import process
from erase.synth import generate_scene, oracle_scores


def main():
    args = parser(__doc__.splitlines()[0]).parse_args()
    spec, cfg = load(args)
    t0 = time.perf_counter()
    scene = generate_scene(spec)
    print(f"scene: {spec.n_trials} trials, seed {spec.seed}, {time.perf_counter() - t0:.1f} s")
    base, _ = process(scene.recording, scene.events_s, "baseline", cfg)
    base_gamma = band_power_summaries(base, dsp=cfg.dsp, alpha=cfg.metrics.alpha)["gamma"]
    nha = region_electrodes(base_gamma.labels, scene.montage, "NHA")
    print(f"{'condition':<13}{'NHA red %':>10}{'EMG rm %':>10}{'dist r':>8}{'rejected':>10}"
          f"{'HA>NHA p':>10}{'SCE in HA':>10}")
    for cond in ("baseline", "erase", "conventional"):
        t0 = time.perf_counter()
        trials, result = (base, None) if cond == "baseline" else process(scene.recording, scene.events_s, cond, cfg)
        bands = band_power_summaries(trials, dsp=cfg.dsp, alpha=cfg.metrics.alpha)
        fd = fd_correlation(trials, dsp=cfg.dsp, metrics=cfg.metrics)
        rs = region_summary(bands["gamma"], fd, scene.montage)
        card = oracle_scores(result, scene, base, cfg, cleaned=None if result else base.recording)
        share = "-" if rs.sce_proportion_ha is None else f"{rs.sce_proportion_ha:.0f} %"
        n_rej = len(result.rejected) if result else 0
        print(f"{cond:<13}{percent_reduction(base_gamma, bands['gamma'], nha):>10.1f}{card.emg_reduction_nha:>10.1f}"
              f"{card.mean_distortion_corr:>8.3f}{n_rej:>10d}{rs.ha_vs_nha_p:>10.2g}{share:>10}"
              f"   ({time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()
