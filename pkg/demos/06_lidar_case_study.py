"""A periodic sensing job next to a batch hog.

The lidar job runs every 100 ms. Alone its execution time is constant; with
an uncontrolled memory hog the worst case grows; under master control with
throttling it returns close to the uncontended value."""

import numpy as np

from vlibsim import parse_scenario, run_scenario

for name in ("lidar_alone", "lidar_darknet", "lidar_darknet_mem"):
    s = np.array(run_scenario(parse_scenario(name)).histograms["lidar"])
    print(f"{name:18s} n={s.size} min={s.min()} mean={s.mean():.0f} max={s.max()}")
    if s.min() == s.max():
        print(f"    every job took {s[0]} cycles")
        continue
    counts, edges = np.histogram(s, bins=5)
    for n, lo, hi in zip(counts, edges, edges[1:]):
        print(f"    [{lo:8.0f}, {hi:8.0f}) {'#' * int(60 * n / s.size)}")
