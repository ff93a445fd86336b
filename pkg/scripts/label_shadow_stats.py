"""How much of the bone surface each sweep sees, and how much is shadowed.

    python3 scripts/label_shadow_stats.py [--variant A]
"""
import argparse

import numpy as np

from usocc import config as config_mod
from usocc import experiment as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variant", default="A", choices=["A", "B"])
    args = ap.parse_args()
    cfg = config_mod.preset("desk", phantom={"preset": "vertebra", "variant": args.variant})
    ds = ex.simulate(cfg)
    thr = cfg.transmittance.shadow_threshold
    print(f"{'sweep':>16} {'samples':>8} {'occupied':>9} {'labelled':>9} {'shadowed':>9}")
    for sid, traj in enumerate(cfg.trajectories):
        sel = ds.sweep_id == sid
        occ = ds.occupancy[sel] == 1
        shadow = ds.transmittance[sel] < thr
        print(f"{traj.kind:>16} {sel.sum():>8} {occ.sum():>9} {ds.label[sel].sum():>9} "
              f"{np.mean(shadow):>9.3f}")


if __name__ == "__main__":
    main()
