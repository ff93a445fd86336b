"""``usocc`` command line: simulate | train | finetune | extract | evaluate | ablate.

Every command writes into the run directory (``output_dir`` of the config,
or ``--out``) and leaves a ``manifest_<command>.json`` with the config hash,
seed, library versions and hashes of its inputs and outputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from . import experiment as ex
from ._io import save_npz, sha256_file, sha256_json
from .extraction import read_mesh, write_mesh
from .metrics import SUMMARY_FIELDS, compute_metrics, sample_surface, write_csv
from .network import InputKind, load_checkpoint, save_checkpoint
from .samples import SampleSet
from .training import TrainingDiverged

log = logging.getLogger("usocc")

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4


def _versions():
    import scipy
    import skimage
    return {"usocc": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "scikit-image": skimage.__version__}


def write_manifest(run_dir: Path, command: str, cfg, inputs=None, outputs=None, extra=None):
    manifest = {
        "command": command,
        "config_hash": sha256_json(cfg.to_dict()),
        "seed": cfg.seed,
        "versions": _versions(),
        "inputs": {k: sha256_file(v) for k, v in (inputs or {}).items()},
        "outputs": {k: sha256_file(run_dir / v) for k, v in (outputs or {}).items()},
    }
    manifest.update(extra or {})
    path = run_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _run_dir(cfg, args) -> Path:
    d = Path(args.out or cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "lr"])
        for step, value, lr in trace:
            w.writerow([step, repr(float(value)), repr(float(lr))])


def _method_from_args(cfg, args) -> ex.Method:
    if getattr(args, "method", None):
        return ex.METHODS[args.method]
    kind = InputKind.COORDINATES if args.input == "coordinates" else InputKind.ACOUSTIC_FEATURES
    return ex.Method("custom", kind, cfg.train.supervision_fraction, cfg.train.loss_kind)


# -- commands --------------------------------------------------------------------

def cmd_simulate(cfg, args):
    run_dir = _run_dir(cfg, args)
    phantom = cfg.phantom_spec()
    dataset = ex.simulate(cfg, phantom)
    dataset.save(run_dir / "dataset.npz")
    gt = ex.truth(cfg, phantom)
    write_mesh(gt.surface_mesh, run_dir / "gt_mesh.ply", ex.unit_transform(cfg))
    (run_dir / "config.json").write_text(cfg.dumps() + "\n")
    sweeps = sorted(int(s) for s in np.unique(dataset.sweep_id))
    write_manifest(run_dir, "simulate", cfg,
                   outputs={"dataset": "dataset.npz", "gt_mesh": "gt_mesh.ply"},
                   extra={"n_samples": len(dataset), "sweeps": sweeps,
                          "sweep_kinds": [t.kind for t in cfg.trajectories]})
    print(f"wrote {len(dataset)} samples in {len(sweeps)} sweeps to {run_dir}")
    return 0


def _load_dataset(cfg, args, run_dir):
    path = _require(args.dataset or run_dir / "dataset.npz")
    return SampleSet.load(path), path


def cmd_train(cfg, args):
    run_dir = _run_dir(cfg, args)
    dataset, ds_path = _load_dataset(cfg, args, run_dir)
    method = _method_from_args(cfg, args)
    seed = cfg.seed
    init = ex.init_model(cfg, method.input_kind, seed)
    try:
        result, subset = ex.train_method(cfg, dataset, method, seed, model=init)
    except TrainingDiverged as exc:
        dump = run_dir / "diverged_state.npz"
        save_npz(dump, {k: np.asarray(v) for k, v in exc.state.items()})
        print(f"error: {exc}; state written to {dump}", file=sys.stderr)
        return EXIT_DIVERGED
    name = args.name or "model"
    save_checkpoint(result.model, run_dir / f"{name}.npz",
                    extra={"method": method.name, "loss_kind": method.loss_kind.value})
    _write_trace(run_dir / f"{name}_loss.csv", result.trace)
    labels_used = int(len(subset))
    write_manifest(run_dir, "train", cfg, inputs={"dataset": ds_path},
                   outputs={"model": f"{name}.npz", "loss_trace": f"{name}_loss.csv"},
                   extra={"method": method.name, "input_kind": method.input_kind.value,
                          "loss_kind": method.loss_kind.value,
                          "supervision_fraction": method.fraction,
                          "labels_available": len(dataset), "labels_used": labels_used,
                          "labels_used_fraction": labels_used / len(dataset),
                          "final_loss": result.trace[-1][1] if result.trace else None})
    print(f"trained {method.name} on {labels_used}/{len(dataset)} labels -> {run_dir / (name + '.npz')}")
    return 0


def cmd_extract(cfg, args):
    run_dir = _run_dir(cfg, args)
    model_path = _require(args.model or run_dir / "model.npz")
    model = load_checkpoint(model_path)
    phantom = cfg.phantom_spec(args.phantom)
    mesh = ex.reconstruct(cfg, model, phantom)
    out = args.mesh or "mesh.ply"
    write_mesh(mesh, run_dir / out, ex.unit_transform(cfg))
    write_manifest(run_dir, "extract", cfg, inputs={"model": model_path}, outputs={"mesh": out},
                   extra={"n_vertices": len(mesh.vertices), "n_triangles": len(mesh.triangles)})
    print(f"wrote mesh with {len(mesh.triangles)} triangles to {run_dir / out}")
    return 0


def evaluate_files(mesh_path, gt_path, n_points=30000, seed=0):
    mesh, tf = read_mesh(_require(mesh_path))
    gt, gt_tf = read_mesh(_require(gt_path))
    tf = tf or gt_tf
    pred_pts = sample_surface(mesh, n_points, seed)
    gt_pts = sample_surface(gt, n_points, seed + 1)
    report = compute_metrics(pred_pts, gt_pts, seed)
    if tf is not None:
        report = report.scaled(1.0 / tf.scale, "mm")
    return report


def cmd_evaluate(cfg, args):
    run_dir = _run_dir(cfg, args)
    n = args.n_points or cfg.metrics.n_points
    report = evaluate_files(args.mesh, args.gt, n, cfg.seed)
    (run_dir / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_csv([report.csv_row(cfg.phantom_spec().name, args.label or Path(args.mesh).stem)],
              run_dir / "metrics.csv")
    write_manifest(run_dir, "evaluate", cfg, inputs={"mesh": args.mesh, "gt": args.gt},
                   outputs={"metrics": "metrics.json"})
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_finetune(cfg, args):
    run_dir = _run_dir(cfg, args)
    model_path = _require(args.model or run_dir / "model.npz")
    model = load_checkpoint(model_path)
    phantom_b = cfg.phantom_spec("finetune_phantom")
    dataset_b = ex.simulate(cfg, phantom_b)
    gt_b = ex.truth(cfg, phantom_b)
    out = ex.finetune_transfer(cfg, model, phantom_b, dataset_b, gt_b, cfg.seed)
    save_checkpoint(out["result"].model, run_dir / "model_finetuned.npz",
                    extra={"finetuned_from": sha256_file(model_path)})
    _write_trace(run_dir / "model_finetuned_loss.csv", out["result"].trace)
    rows = [{**out["before"].csv_row(phantom_b.name, "no-finetune", 0.0)},
            {**out["after"].csv_row(phantom_b.name, "finetune", cfg.finetune.fraction)}]
    write_csv(rows, run_dir / "finetune.csv")
    write_manifest(run_dir, "finetune", cfg, inputs={"model": model_path},
                   outputs={"model": "model_finetuned.npz", "table": "finetune.csv"},
                   extra={"labels_used": out["result"].n_samples, "iterations": cfg.finetune.iterations,
                          "frozen_layers": cfg.finetune.n_frozen})
    print(f"CD before {out['before'].cd:.3f} mm, after {out['after'].cd:.3f} mm")
    return 0


def cmd_ablate(cfg, args):
    run_dir = _run_dir(cfg, args)
    phantom = cfg.phantom_spec()
    dataset = ex.simulate(cfg, phantom)
    dataset.save(run_dir / "dataset.npz")
    ds_hash = sha256_file(run_dir / "dataset.npz")
    gt = ex.truth(cfg, phantom)
    rows, runs = [], []
    for seed in cfg.ablation.seeds:
        for name in cfg.ablation.methods:
            method = ex.METHODS[name]
            result, subset, _, report = ex.run_method(cfg, dataset, gt, phantom, method, seed)
            rows.append(report.csv_row(phantom.name, name, method.fraction) | {"seed": seed})
            runs.append({"method": name, "seed": seed, "dataset_hash": ds_hash,
                         "labels_used": len(subset)})
    write_csv(rows, run_dir / "ablation_runs.csv")
    summary = ex.summarize(rows)
    write_csv(summary, run_dir / "ablation.csv", SUMMARY_FIELDS)
    write_manifest(run_dir, "ablate", cfg, outputs={"dataset": "dataset.npz", "table": "ablation.csv",
                                                     "runs": "ablation_runs.csv"},
                   extra={"runs": runs, "dataset_hash": ds_hash})
    print(write_csv(summary, fields=SUMMARY_FIELDS), end="")
    return 0


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "finetune": cmd_finetune,
            "extract": cmd_extract, "evaluate": cmd_evaluate, "ablate": cmd_ablate}


def build_parser():
    p = argparse.ArgumentParser(prog="usocc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run-config JSON file")
        sp.add_argument("--preset", default="desk", choices=sorted(config_mod.PRESETS),
                        help="base settings when --config is not given")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. train.iterations=100")
        sp.add_argument("--out", help="run directory (default: output_dir from the config)")
        return sp

    common(sub.add_parser("simulate", help="simulate sweeps, write dataset and ground-truth mesh"))
    sp = common(sub.add_parser("train", help="train an occupancy model on a dataset"))
    sp.add_argument("--dataset")
    sp.add_argument("--method", choices=sorted(ex.METHODS))
    sp.add_argument("--input", choices=["features", "coordinates"], default="features")
    sp.add_argument("--name", help="checkpoint basename (default: model)")
    sp = common(sub.add_parser("finetune", help="adapt a model to the finetune phantom"))
    sp.add_argument("--model")
    sp = common(sub.add_parser("extract", help="mesh the zero level set of a trained model"))
    sp.add_argument("--model")
    sp.add_argument("--mesh", help="output file name (.ply or .obj)")
    sp.add_argument("--phantom", default="phantom", choices=["phantom", "finetune_phantom"])
    sp = common(sub.add_parser("evaluate", help="CD/HD/MAD/RMSE between two meshes"))
    sp.add_argument("mesh")
    sp.add_argument("gt")
    sp.add_argument("--n-points", type=int)
    sp.add_argument("--label")
    common(sub.add_parser("ablate", help="run the four-method comparison table"))
    return p


def load_config(args):
    if args.config:
        return config_mod.load(args.config, args.set)
    base = config_mod.preset(args.preset).to_dict()
    return config_mod.from_dict(config_mod.apply_overrides(base, args.set))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
