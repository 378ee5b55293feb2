"""How much ERASE depends on the virtual channels matching the scene's EMG.

Runs ERASE with the virtual EMG generated from the scene's own EMG seed
(matched) and from unrelated seeds, reporting the share of NHA EMG power
removed and the number of rejected components.

    python3 scripts/reference_mode_study.py --trials 60 --other-seeds 2 5
"""

import dataclasses

from _common import load, parser

from erase.pipeline import process
from erase.synth import generate_scene, oracle_scores


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--other-seeds", type=int, nargs="+", default=[2, 5])
    args = p.parse_args()
    spec, cfg = load(args)
    scene = generate_scene(spec)
    base, _ = process(scene.recording, scene.events_s, "baseline", cfg)
    print(f"{'virtual seed':>13}{'mode':>10}{'EMG rm %':>10}{'dist r':>8}{'rejected':>10}")
    for seed in [spec.emg.seed, *args.other_seeds]:
        emg = dataclasses.replace(cfg.erase.emg, seed=seed)
        run_cfg = dataclasses.replace(cfg, erase=dataclasses.replace(cfg.erase, emg=emg))
        _, result = process(scene.recording, scene.events_s, "erase", run_cfg)
        card = oracle_scores(result, scene, base, run_cfg)
        mode = "matched" if seed == spec.emg.seed else "unrelated"
        print(f"{seed:>13d}{mode:>10}{card.emg_reduction_nha:>10.1f}{card.mean_distortion_corr:>8.3f}"
              f"{len(result.rejected):>10d}")


if __name__ == "__main__":
    main()
