from utils.runtime import apply_thread_limits

apply_thread_limits()

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from analytics.report import write_json
from data.dataset import real_splits, synthetic_splits
from data.feature_reader import write_features
from data.metadata_reader import SCORE_KEYS, ClipRecord, load_metadata, write_metadata
from data.splits import save_split
from data.synthetic import SyntheticSpec
from losses.winsorize import TargetStatistics, describe_targets, winsorize_targets
from tensorcore.linalg import ConvergenceError
from utils.config import PRESETS, read_config_file, resolve_config


# =================================================
#  CONFIGURATION
# =================================================

ROOT = Path(__file__).resolve().parent
DEFAULT_OUT = ROOT / "output"

# exit codes
EXIT_OK = 0
EXIT_FAILED = 1
EXIT_BAD_INPUT = 2


# =================================================
# ARGUMENTS
# =================================================

def add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None, help="JSON config with model/loss/solver/run sections")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="Output directory")


def add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=PRESETS, default=None, help="Model size preset (default desk)")
    p.add_argument("--geometry", default=None, help="all | hyperbolic | spherical | euclidean | a+b")
    p.add_argument("--routing", choices=["learned", "uniform", "hard"], default=None)
    p.add_argument("--pooling", choices=["attention", "mean"], default=None)
    p.add_argument("--head", choices=["adapter", "linear"], default=None)


def add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--metadata", type=Path, default=None, help="Metadata JSON (real data)")
    p.add_argument("--features", type=Path, default=None, help="Feature container directory")
    p.add_argument("--split-file", type=Path, default=None, help="Saved split JSON")
    p.add_argument("--clips", type=int, default=None, help="Synthetic clip count")
    p.add_argument("--users", type=int, default=None, help="Synthetic user count")
    p.add_argument("--noise", type=float, default=None, help="Synthetic noise scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Geometric mixture-of-experts regression "
                                                 "and pairwise-comparison labeling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="Fit scores from a comparison TSV")
    add_common(p)
    p.add_argument("comparisons", type=Path)
    p.add_argument("--items", type=int, default=None, help="N (default: inferred)")
    p.add_argument("--targets", type=int, default=None, help="T (default: inferred)")
    p.add_argument("--lambda-nuc", type=float, default=None, help="Nuclear-norm weight λ")
    p.add_argument("--alpha", type=float, default=None, help="Likelihood scale α")
    p.add_argument("--select-lambda", action="store_true", help="Choose λ on held-out comparisons")
    p.add_argument("--truth", type=Path, default=None, help="Planted utilities for a recovery report")

    p = sub.add_parser("simulate", help="Planted utilities -> comparison TSV + truth JSON")
    add_common(p)
    p.add_argument("--items", type=int, default=60)
    p.add_argument("--targets", type=int, default=3)
    p.add_argument("--pairs-per-item", type=float, default=40)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--scale", type=float, default=1.5)
    p.add_argument("--tie-band", type=float, default=0.0)

    p = sub.add_parser("winsorize", help="Soft-winsorize metadata scores with train statistics")
    add_common(p)
    p.add_argument("metadata", type=Path)
    p.add_argument("--split-file", type=Path, default=None)

    p = sub.add_parser("synth", help="Write the synthetic benchmark to disk")
    add_common(p)
    add_data_flags(p)
    p.add_argument("--preset", choices=PRESETS, default=None, help="Model size preset (sets d_model)")

    p = sub.add_parser("train", help="Train a model")
    add_common(p)
    add_model_flags(p)
    add_data_flags(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--accum", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--loss-mode", choices=["adaptive", "fixed", "mse"], default=None)
    p.add_argument("--resume", type=Path, default=None, help="Checkpoint to resume from")

    p = sub.add_parser("eval", help="Evaluate a checkpoint on a split")
    add_common(p)
    add_data_flags(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--geometry", default=None, help="Evaluate with a geometry subset")
    p.add_argument("--routing", choices=["learned", "uniform", "hard"], default=None)

    p = sub.add_parser("verify", help="Run the invariant suite")
    add_common(p)
    p.add_argument("--only", nargs="*", default=None, help="Subset of check names")
    return parser


def resolve(args):
    file_values = read_config_file(args.config) if args.config else {}
    run = {"seed": args.seed, "out": str(args.out) if args.out else None}
    for flag in ("epochs", "batch", "accum", "preset"):
        run[flag] = getattr(args, flag, None)
    run["peak_lr"] = getattr(args, "lr", None)
    run["synthetic_clips"] = getattr(args, "clips", None)
    run["synthetic_users"] = getattr(args, "users", None)
    run["synthetic_noise"] = getattr(args, "noise", None)
    model = {k: getattr(args, k, None) for k in ("geometry", "routing", "pooling", "head")}
    if args.command == "eval":
        model = {}
    loss = {"mode": getattr(args, "loss_mode", None)}
    solver = {"lam": getattr(args, "lambda_nuc", None), "alpha": getattr(args, "alpha", None)}
    resolved = resolve_config(file_values, run, model, loss, solver)
    if not resolved.run.out or resolved.run.out == "output":
        resolved.run.out = str(args.out or DEFAULT_OUT)
    return resolved


def load_splits(args, cfg, issues):
    """Real data when --metadata/--features are given, else the synthetic benchmark."""
    if args.metadata or args.features:
        if not (args.metadata and args.features):
            raise ValueError("--metadata and --features must be given together")
        splits, split = real_splits(args.metadata, args.features, cfg.model.d_model,
                                    args.split_file, cfg.run.seed, issues)
        return splits, split, None
    spec = SyntheticSpec(seed=cfg.run.seed, n_clips=cfg.run.synthetic_clips,
                         n_users=cfg.run.synthetic_users, n_targets=cfg.model.n_targets,
                         d_model=cfg.model.d_model, noise=cfg.run.synthetic_noise)
    splits, split, recipe = synthetic_splits(spec, cfg.run.seed)
    return splits, split, recipe


def save_issues(issues, path: Path):
    if issues:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(issues).to_csv(path, index=False)
        print(f"⚠️  {len(issues)} issues saved → {path}")


# =================================================
# COMMANDS
# =================================================

def cmd_label(args, cfg) -> int:
    from engine.label_runner import run_label
    out = Path(cfg.run.out)
    run_label(args.comparisons, out / "scores.json", args.items, args.targets, cfg.solver,
              select=args.select_lambda, seed=cfg.run.seed, truth=args.truth,
              config_echo={"run": cfg.run.to_dict()})
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    from engine.label_runner import run_simulate
    run_simulate(Path(cfg.run.out), args.items, args.targets, args.pairs_per_item, args.rank,
                 args.scale, args.tie_band, cfg.run.seed)
    return EXIT_OK


def cmd_winsorize(args, cfg) -> int:
    from data.splits import load_split
    records = load_metadata(args.metadata)
    if not records:
        raise ValueError(f"{args.metadata}: no clips")
    Y = np.stack([r.score_vector() for r in records])
    train_ids = set(load_split(args.split_file).train) if args.split_file else None
    mask = np.array([train_ids is None or r.id in train_ids for r in records])
    stats = TargetStatistics.fit(Y[mask], SCORE_KEYS)
    W = winsorize_targets(Y, stats, cfg.loss.winsor_theta, cfg.loss.winsor_scale)

    out = Path(cfg.run.out)
    rows = [{"id": r.id, **dict(zip(SCORE_KEYS, W[i].tolist()))} for i, r in enumerate(records)]
    write_json(out / "winsorized_scores.json", {"config": cfg.to_dict(),
                                                "target_statistics": stats.to_dict(),
                                                "scores": rows})
    describe_targets(Y, SCORE_KEYS).round(6).to_csv(out / "target_statistics.csv", index=False)
    print(f"✓ Winsorized {len(records)} clips → {out / 'winsorized_scores.json'}")
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    issues = []
    splits, split, recipe = load_splits(args, cfg, issues)
    out = Path(cfg.run.out)
    features = out / "features"
    bundles = [b for name in ("train", "val", "test") for b in splits[name]]
    for i, b in enumerate(bundles, start=1):
        write_features(features, b)
        if i % 500 == 0 or i == len(bundles):
            print(f"[{i}/{len(bundles)}] containers written")
    records = [ClipRecord(id=b.clip_id, user_no=b.user_no, video_id=b.clip_id,
                          video_filename=f"{b.clip_id}.mp4",
                          scores=dict(zip(SCORE_KEYS, b.y.tolist()))) for b in bundles]
    write_metadata(out / "metadata.json", records)
    save_split(out / "split.json", split)
    write_json(out / "recipe.json", {"config": cfg.to_dict(), "recipe": recipe})
    print(f"✓ Synthetic benchmark → {out}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    from engine.train_engine import TrainEngine, TrainingAborted
    issues = []
    splits, split, _ = load_splits(args, cfg, issues)
    out = Path(cfg.run.out)
    save_split(out / "split.json", split)
    save_issues(issues, out / "load_issues.csv")
    if args.resume:
        engine = TrainEngine.resume(args.resume, cfg, splits["train"], splits["val"], out)
    else:
        engine = TrainEngine(cfg, splits["train"], splits["val"], out)
    try:
        summary = engine.fit()
    except TrainingAborted:
        return EXIT_FAILED
    write_json(out / f"{engine.run_name}_summary.json", {"config": cfg.to_dict(), "summary": summary})
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from engine.eval_engine import run_eval
    from model.checkpoint import load_checkpoint
    header, _ = load_checkpoint(args.checkpoint)
    saved = header.get("config")
    if saved and not (args.metadata or args.features):
        # regenerate the synthetic benchmark the checkpoint was trained on
        cfg = resolve_config({k: saved[k] for k in ("run", "model", "loss", "solver")})
        cfg.run.out = str(args.out or DEFAULT_OUT)
    elif "model" in header:
        cfg.model = cfg.model.from_dict(header["model"])
    issues = []
    splits, _, _ = load_splits(args, cfg, issues)
    out = Path(cfg.run.out)
    save_issues(issues, out / "load_issues.csv")
    overrides = {"geometry": args.geometry, "routing": args.routing}
    tag = "_".join(f"{k}-{v.replace('+', '-')}" for k, v in overrides.items() if v)
    name = f"{Path(args.checkpoint).stem}_{args.split}" + (f"_{tag}" if tag else "")
    run_eval(args.checkpoint, splits[args.split], args.split, out / "reports" / f"{name}.json",
             config_echo=cfg.to_dict(), overrides=overrides)
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    from engine.verify_suite import run_verify
    passed, results = run_verify(args.only)
    write_json(Path(cfg.run.out) / "verify.json",
               {"passed": passed,
                "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail}
                           for r in results]})
    return EXIT_OK if passed else EXIT_FAILED


COMMANDS = {
    "label": cmd_label,
    "simulate": cmd_simulate,
    "winsorize": cmd_winsorize,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.time()
    try:
        cfg = resolve(args)
        code = COMMANDS[args.command](args, cfg)
    except (ValueError, FileNotFoundError) as e:
        print(f"❌ {args.command}: {e}")
        return EXIT_BAD_INPUT
    except (ConvergenceError, RuntimeError) as e:
        stage = getattr(e, "stage", None) or getattr(e, "routine", None) or args.command
        print(f"❌ {args.command} failed at stage '{stage}': {e}")
        return EXIT_FAILED
    print(f"Runtime: {time.time() - start:.1f} seconds")
    return code


if __name__ == "__main__":
    sys.exit(main())
