#!/usr/bin/env python3
"""Run the full default pipeline and print the headline metrics.

Equivalent to ``phasestab simulate --output-dir runs/default`` but handy for
poking at the intermediate objects from a REPL or profiler.
"""

import argparse
import json

from phasestab.cli import run_pipeline
from phasestab.config import SimConfig, apply_override


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output-dir", default="runs/default")
    parser.add_argument("--set", action="append", default=[], metavar="FIELD=VALUE")
    args = parser.parse_args()

    cfg = SimConfig()
    for item in args.set:
        dotted, raw = item.split("=", 1)
        apply_override(cfg, dotted, raw)
    cfg.output_dir = args.output_dir
    cfg.validate()

    summary = run_pipeline(cfg)
    headline = {
        "N_unstable": summary["spectrum"]["N_unstable"],
        "margin": summary["synth"]["margin"],
        "riccati_residual": summary["synth"]["residual_rel"],
        "steering_error": summary["controllability"]["steering_error"],
        "fitted_rate": summary["fitted_rate"],
        "final_xi_norm": summary["simulate"]["final_xi_norm"],
    }
    print(json.dumps(headline, indent=2))


if __name__ == "__main__":
    main()
