"""
Running a whole budget sweep from one config
============================================

The driver chains sanitization, matching, travel-time estimation and the
adversary metrics for a list of budgets, plus an unsanitized baseline. All
randomness comes from one master seed, so reruns reproduce every file byte
for byte.

The same run from a shell::

    privtravel run --config sweep.json --out-dir sweep_out

or stage by stage::

    privtravel simulate --experiment 2 --trips 400 --seed 3 --out tr.csv --net-out net.json --route-out route.json
    privtravel sanitize --eps-total 0.3 --seed 3 --in tr.csv --out san.csv
    privtravel match --network net.json --route route.json --in san.csv --out mapped.csv
    privtravel tpu --network net.json --route route.json --in mapped.csv --out cdf.csv
"""
import os
import tempfile

from privtravel import run_experiment

config = {
    "simulate": {"experiment": 2, "trips": 400},
    "epsilons": [0.05, 0.1, 0.3, 0.5, 0.8],
    "clip_radii": [20, 40, 80],
    "seed": 3,
    "repeats": 3,
    "weighted": True,
}

out_dir = tempfile.mkdtemp(prefix="privtravel-sweep-")
report = run_experiment(config, out_dir)

print(f"{'setting':>9} {'K':>5} {'usable':>7} {'K_eff':>7} {'sd':>6}")
for label, k, usable, keff, sd in report.keff_table():
    print(f"{label:>9} {k:>5} {usable:>7.1f} {keff:>7.1f} {sd:>6.1f}")

print(f"\n{'eps':>5} {'AD mapped':>10} {'AD raw':>8}")
for eps, ad_m, _, ad_r, _ in report.ad_table():
    print(f"{eps:>5} {ad_m:>10.1f} {ad_r:>8.1f}")

print("\nfiles:", ", ".join(sorted(os.listdir(out_dir))))
