"""Four-method comparison on the vertebra phantom, followed by transfer to variant B.

    python3 scripts/run_ablation.py --preset desk --out runs/ablation

Writes per-seed rows, a median summary and a fine-tuning table (before and
after adapting each UltrON-10 model to the second phantom).
"""
import argparse
import json
import logging
import time
from pathlib import Path

from usocc import config as config_mod
from usocc import experiment as ex
from usocc.metrics import SUMMARY_FIELDS, write_csv
from usocc.network import save_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk", choices=sorted(config_mod.PRESETS))
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--skip-finetune", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    if args.config:
        cfg = config_mod.load(args.config, args.set)
    else:
        cfg = config_mod.from_dict(config_mod.apply_overrides(config_mod.preset(args.preset).to_dict(),
                                                              args.set))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps() + "\n")

    phantom = cfg.phantom_spec()
    dataset = ex.simulate(cfg, phantom)
    gt = ex.truth(cfg, phantom)
    rows, models = [], {}
    for seed in cfg.ablation.seeds:
        for name in cfg.ablation.methods:
            t0 = time.perf_counter()
            result, subset, _, report = ex.run_method(cfg, dataset, gt, phantom, ex.METHODS[name], seed)
            models[name, seed] = result.model
            save_checkpoint(result.model, out / f"{name}_seed{seed}.npz", {"method": name, "seed": seed})
            rows.append(report.csv_row(phantom.name, name, ex.METHODS[name].fraction))
            print(f"{name:>20} seed {seed}: CD {report.cd:.3f} mm  HD {report.hd:.3f} mm  "
                  f"({len(subset)} labels, {time.perf_counter() - t0:.0f} s)")
    write_csv(rows, out / "ablation_runs.csv")
    summary = ex.summarize(rows)
    print(write_csv(summary, out / "ablation.csv", SUMMARY_FIELDS), end="")

    if args.skip_finetune or "UltrON-10" not in cfg.ablation.methods:
        return
    phantom_b = cfg.phantom_spec("finetune_phantom")
    dataset_b = ex.simulate(cfg, phantom_b)
    gt_b = ex.truth(cfg, phantom_b)
    ft_rows = []
    for seed in cfg.ablation.seeds:
        res = ex.finetune_transfer(cfg, models["UltrON-10", seed], phantom_b, dataset_b, gt_b, seed)
        ft_rows.append(res["before"].csv_row(phantom_b.name, "no-finetune", 0.0))
        ft_rows.append(res["after"].csv_row(phantom_b.name, "finetune", cfg.finetune.fraction))
        print(f"finetune seed {seed}: CD {res['before'].cd:.3f} -> {res['after'].cd:.3f} mm")
    write_csv(ft_rows, out / "finetune.csv")
    (out / "finetune_summary.json").write_text(json.dumps(ex.summarize(ft_rows), indent=2) + "\n")


if __name__ == "__main__":
    main()
