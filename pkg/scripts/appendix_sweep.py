"""Large-radius sweep over random planar point clouds."""
import argparse
import time
from dataclasses import dataclass

import numpy as np

from fraclk.appendix import large_r_sweep, random_cloud


@dataclass
class Config:
    clouds: int = 100
    points: int = 20
    R: float = 1.5
    seed: int = 11


def run(cfg: Config) -> None:
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    slack, unreliable, total, failed = [], 0, 0, 0
    for _ in range(cfg.clouds):
        sw = large_r_sweep(random_cloud(rng, cfg.points), cfg.R)
        for row in sw.rows:
            total += 1
            failed += not row.passed
            unreliable += row.reach.unreliable
            slack.append(row.reach.slack)
    print(f"{cfg.clouds} clouds, {total} radii: {failed} failures, "
          f"min reach slack {min(slack):.3f}, unreliable {unreliable / total:.1%} "
          f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clouds", type=int, default=Config.clouds)
    a = ap.parse_args()
    run(Config(clouds=a.clouds))
