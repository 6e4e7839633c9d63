"""Synthesize the controller families on one quadratic and compare them.

Six closed loops are generated for the same 10-dimensional ill
conditioned quadratic, written out as YAML configs, and handed to the
compare verb, which integrates each one and tabulates time to gradient
decades plus the final objective value:

    polyak        heavy-ball damping, Euclidean metric
    accel_newton  the same damping pattern in the Hessian metric
    quasi_newton  Hessian metric replaced by a BFGS estimate
    nesterov      gradient-corrected damping via the direct family
    min_p         steepest certificate descent on a tapered budget
    min_p_star    exact decay-rate tracking, V' = -eta V

The min_p_star config carries a verify block, so its summary.json also
certifies the achieved decay rate against the requested one. Per-run
artifacts (trajectory.csv, summary.json, config_echo.yaml) land in
per-label subdirectories of --out-dir next to compare.csv.
"""

import argparse
import os

import yaml

from accelflow.cli import main as cli_main

PROBLEM = {"name": "quadratic", "dim": 10, "kappa": 100.0, "seed": 3}
BASE = {"kind": "flow", "h": 0.01, "t_max": 100.0}

METHODS = {
    "polyak": {"controller": "polyak", "gamma_a": 10.0, "gamma_b": 10.0},
    "accel_newton": {"controller": "accel_newton",
                     "gamma_a": 25.0, "gamma_b": 100.0},
    "quasi_newton": {"controller": "quasi_newton",
                     "gamma_a": 25.0, "gamma_b": 100.0},
    "nesterov": {"controller": "nesterov", "gamma_a": 10.0},
    "min_p": {"controller": "min_p", "delta": 100.0, "delta_mode": "taper"},
    "min_p_star": {"controller": "min_p_star", "eta": 1.0},
}


def build_config(label):
    config = {"label": label, "problem": dict(PROBLEM),
              "method": {**BASE, **METHODS[label]}}
    if label == "min_p_star":
        config["verify"] = {"checks": ["dissipation", "stationarity"],
                            "dissipation_mode": "rate", "eta": 1.0}
    return config


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="runs/flow_showcase")
    args = parser.parse_args(argv)

    config_dir = os.path.join(args.out_dir, "configs")
    os.makedirs(config_dir, exist_ok=True)
    paths = []
    for label in METHODS:
        path = os.path.join(config_dir, f"{label}.yaml")
        with open(path, "w") as fh:
            yaml.safe_dump(build_config(label), fh, sort_keys=False)
        paths.append(path)

    return cli_main(["compare", *paths, "--out-dir", args.out_dir])


if __name__ == "__main__":
    raise SystemExit(main())
