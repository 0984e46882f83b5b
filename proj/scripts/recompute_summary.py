#!/usr/bin/env python3
"""Recompute summary.csv from fits.csv and params.csv and compare."""
import csv
import math
import sys
from collections import defaultdict

import numpy as np

MISSING_NODE_VARIANTS = {"MC-EBDM", "MC-EBDMA"}


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main(out_dir, tol=1e-12):
    fits = read(f"{out_dir}/fits.csv")
    params = read(f"{out_dir}/params.csv")
    summary = read(f"{out_dir}/summary.csv")

    ok = {(r["variant"], r["replicate"]) for r in fits if r["status"] == "ok"}
    values = defaultdict(list)
    for r in fits:
        if (r["variant"], r["replicate"]) not in ok:
            continue
        metrics = ["fit_imp", "fit_theta"] + (["wm_corr"] if r["variant"] in MISSING_NODE_VARIANTS else [])
        for m in metrics:
            x = float(r[m])
            if math.isfinite(x):
                values[(r["variant"], m)].append(x)
    for r in params:
        if r["param"].startswith("theta_") and (r["variant"], r["replicate"]) in ok:
            x = float(r["value"])
            if math.isfinite(x):
                values[(r["variant"], r["param"])].append(x)

    failures = 0
    for row in summary:
        data = np.array(values.get((row["variant"], row["metric"]), []))
        if int(row["count"]) != data.size:
            print(f"count mismatch {row['variant']} {row['metric']}: {row['count']} vs {data.size}")
            failures += 1
            continue
        for col, q in (("median", 50), ("q1", 25), ("q3", 75)):
            got = float(row[col])
            want = float(np.percentile(data, q, method="linear")) if data.size else float("nan")
            same = (math.isnan(got) and math.isnan(want)) or abs(got - want) <= tol * max(1.0, abs(want))
            if not same:
                print(f"{row['variant']} {row['metric']} {col}: {got!r} vs {want!r}")
                failures += 1
    print(f"checked {len(summary)} summary rows, {failures} mismatches")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
