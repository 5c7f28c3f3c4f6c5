"""Regression of per-realization average limits on M_inf for the random Cantor model."""
import argparse
import time
from dataclasses import dataclass

from fraclk import load_model
from fraclk.limits import m_infinity_regression, rhs_constant


@dataclass
class Config:
    model: str = "random-cantor"
    k: int = 1
    replicates: int = 300
    rhs_replicates: int = 2000
    delta: float = 1e-6
    top: float = 1e-3
    seed: int = 7
    workers: int = 1


def run(cfg: Config) -> None:
    model = load_model(cfg.model)
    t0 = time.perf_counter()
    rhs = rhs_constant(model, cfg.k, cfg.rhs_replicates, cfg.seed, workers=cfg.workers)
    print(f"integral constant {rhs.value:.5f} +- {rhs.stderr:.5f} ({time.perf_counter() - t0:.1f} s)")
    for top in (1.0, cfg.top):
        t0 = time.perf_counter()
        rep = m_infinity_regression(model, cfg.k, cfg.replicates, cfg.seed, cfg.delta,
                                    workers=cfg.workers, top=top)
        f, c = rep.fit, rep.control
        print(f"top={top:g}: slope {f.slope:.4f} CI ({f.slope_ci[0]:.4f}, {f.slope_ci[1]:.4f}) "
              f"intercept {f.intercept:.4f} CI ({f.intercept_ci[0]:.4f}, {f.intercept_ci[1]:.4f}) "
              f"control slope {c.slope:.3f} CI ({c.slope_ci[0]:.3f}, {c.slope_ci[1]:.3f}) "
              f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=Config.replicates)
    ap.add_argument("--workers", type=int, default=Config.workers)
    a = ap.parse_args()
    run(Config(replicates=a.replicates, workers=a.workers))
