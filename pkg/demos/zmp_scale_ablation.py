"""Show why the vertical hand load must rescale the commanded ZMP.

Runs the bundled vertical push/pull scenario twice: once as shipped, once
with the ablation flag that freezes the ZMP scale at one. The hands lift
and then press down 200 N each per phase, which moves 40 percent of the
weight off or onto the feet; planning with the wrong scale makes every
sway step land the real pressure point well off the plan, saturating the
ankle authority through most stances.

    python3 demos/zmp_scale_ablation.py
"""

from locomanip.scenario import (
    apply_overrides,
    bundled_scenario_path,
    load_raw_config,
    parse_config,
    run_scenario,
)

METRIC = "rms_implied_zmp_dev_y"


def run(force_kappa_one):
    raw = load_raw_config(bundled_scenario_path("testcase2"))
    if force_kappa_one:
        raw = apply_overrides(raw, ["ablation.force_kappa_one=true"])
    return run_scenario(parse_config(raw), write=False)


def main():
    correct = run(force_kappa_one=False)
    ablated = run(force_kappa_one=True)

    print("correct scale: completed %.1f s, %s = %.5f m"
          % (correct.trace.duration, METRIC, correct.metrics[METRIC]))
    if ablated.trace.diverged:
        print("frozen scale:  DIVERGED at t = %.3f s, %s = %.5f m up to there"
              % (ablated.trace.diverged_at, METRIC, ablated.metrics[METRIC]))
    else:
        print("frozen scale:  completed %.1f s, %s = %.5f m"
              % (ablated.trace.duration, METRIC, ablated.metrics[METRIC]))
    print("saturated stabilizer steps: %d vs %d"
          % (correct.metrics["zmp_saturated_steps"],
             ablated.metrics["zmp_saturated_steps"]))
    print("implied-ZMP deviation ratio: %.1fx"
          % (ablated.metrics[METRIC] / correct.metrics[METRIC]))


if __name__ == "__main__":
    main()
