"""Command-line interface.

Usage:
    python main.py pipeline --synth small --seed 7 --out output/small
    python main.py prepare-data --checkins data/nyc.csv --out output/nyc
    python main.py train-global --out output/nyc
    python main.py train-region --out output/nyc --jobs 4
    python main.py train-device --out output/nyc --jobs 4
    python main.py evaluate --out output/nyc
    python main.py bench --out output/nyc --dim 16,32,64 --t-r 8,16,1024

Stage commands read ``<out>/splits.json`` and ``<out>/checkpoints`` by
default, so running them in order reproduces ``pipeline`` exactly.

Exit codes: 0 success, 1 other failure, 2 usage, 3 config, 4 missing
input, 5 stage failure or freeze violation, 6 checkpoint, 7 data.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from presets.preset_registry import PresetRegistry

from .config import PRESETS_DIR
from .data import (
    CheckInDataset,
    SynthSpec,
    TierSplits,
    build_tier_splits,
    load_checkins,
    partition_regions,
    read_splits,
    synth_generate,
    write_checkins,
    write_splits,
)
from .errors import CheckpointError, ConfigError, DataError, DCPRError, StageError
from .evaluation import TrainedModels, bench, evaluate_all
from .logging import make_run_logger
from .orchestration import (
    GLOBAL_FILE,
    checkpoint_provenance,
    compare_transfer,
    device_job,
    metrics_table,
    region_file,
    region_job,
    report_config,
    run_jobs,
    run_pipeline,
    save_checkpoint,
    train_global,
)
from .orchestration.pipeline import job_seed
from .run_config import RunConfig, resolve_run_config
from .text_loader import render_template

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_STAGE = 5
EXIT_CHECKPOINT = 6
EXIT_DATA = 7

STAGE_FIELDS = {"seconds"}


# =============================================================================
# Argument parsing
# =============================================================================
def int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat key = value config file")
    common.add_argument("--seed", type=int, help="Base seed for every job")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--mode", choices=["dcpr", "dcpr_t"], help="dcpr_t trains regions from scratch")
    common.add_argument("--jobs", type=int, help="Worker processes for region and device jobs")
    common.add_argument("--t-r", dest="t_r", help="Reverse steps (a comma list for bench)")
    common.add_argument("--dim", help="Embedding width d (a comma list for bench)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override any config key")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dcpr", description="Cloud-edge-device diffusion POI recommender")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    def add_data_source(p: argparse.ArgumentParser) -> None:
        p.add_argument("--checkins", help="Check-in CSV (user_id,poi_id,category_id,lat,lon,timestamp)")
        p.add_argument("--synth", help="Synthetic preset name or synth.conf path")
        p.add_argument("--regions", dest="num_regions", type=int, help="Number of k-means regions")

    p = add("prepare-data", "Partition regions and build the cloud/edge/device splits")
    add_data_source(p)

    p = add("synth", "Generate a planted-pattern check-in CSV")
    p.add_argument("--synth", required=True, help="Synthetic preset name or synth.conf path")
    p.add_argument("--csv", help="Output CSV (default <out>/checkins.csv)")

    p = add("train-global", "Cloud stage: train the global category model")
    p.add_argument("--splits", help="Splits file (default <out>/splits.json)")

    p = add("train-region", "Edge stage: specialize region models over the frozen global model")
    p.add_argument("--splits", help="Splits file (default <out>/splits.json)")
    p.add_argument("--global-ckpt", help=f"Global checkpoint (default <out>/checkpoints/{GLOBAL_FILE})")
    p.add_argument("--region", type=int, help="Only this region")

    p = add("train-device", "Device stage: train personal patches over the frozen region models")
    p.add_argument("--splits", help="Splits file (default <out>/splits.json)")
    p.add_argument("--checkpoints", help="Checkpoint directory (default <out>/checkpoints)")
    p.add_argument("--region", type=int, help="Only users of this region")
    p.add_argument("--user", type=int, help="Only this user")

    p = add("evaluate", "Leave-one-out test metrics")
    p.add_argument("--splits", help="Splits file (default <out>/splits.json)")
    p.add_argument("--checkpoints", help="Checkpoint directory (default <out>/checkpoints)")
    p.add_argument("--no-patches", action="store_true", help="Score with the region models alone")

    p = add("bench", "On-device size, training time, and latency per d and T_R")
    p.add_argument("--splits", help="Splits file (default <out>/splits.json, optional)")
    p.add_argument("--checkpoints", help="Checkpoint directory (default <out>/checkpoints, optional)")
    p.add_argument("--repeats", type=int, default=None, help="Timed recommendations per row")

    p = add("pipeline", "Run every stage and evaluate")
    add_data_source(p)
    p.add_argument("--splits", help="Reuse an existing splits file instead of building one")

    p = add("transfer", "Compare pretrained and scratch region training")
    add_data_source(p)
    p.add_argument("--splits", help="Reuse an existing splits file instead of building one")
    p.add_argument("--repeats", type=int, default=3, help="Paired repeats")
    return parser


# =============================================================================
# Shared helpers
# =============================================================================
def configure_logging(verbose: bool) -> None:
    logging.basicConfig(format="%(levelname)s %(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)


def resolve(args: argparse.Namespace, lists: bool = False) -> RunConfig:
    """Build the RunConfig for ``args``; ``--t-r``/``--dim`` must be single values unless ``lists``."""
    flags: dict[str, Any] = {
        "seed": args.seed,
        "out": args.out,
        "mode": args.mode,
        "jobs": args.jobs,
        "checkins": getattr(args, "checkins", None),
        "synth": getattr(args, "synth", None),
        "num_regions": getattr(args, "num_regions", None),
    }
    if not lists:
        for flag, key in (("t_r", "T_R"), ("dim", "d")):
            text = getattr(args, flag)
            if text is not None:
                values = int_list(text, "--" + flag.replace("_", "-"))
                if len(values) != 1:
                    raise ConfigError(f"--{flag.replace('_', '-')} takes a single value for {args.command}")
                flags[key] = values[0]
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        flags[key.strip()] = value.strip()

    preset = PresetRegistry(PRESETS_DIR).get_preset(args.synth) if getattr(args, "synth", None) else None
    return resolve_run_config(
        config_file=args.config,
        preset_train=preset.train_file if preset else None,
        flags=flags,
    )


def synth_spec(name: str) -> SynthSpec:
    preset = PresetRegistry(PRESETS_DIR).get_preset(name)
    if preset is not None:
        return SynthSpec.from_file(preset.synth_file)
    if Path(name).is_file():
        return SynthSpec.from_file(name)
    raise FileNotFoundError(f"no preset or synth spec named {name!r}")


def load_dataset(cfg: RunConfig) -> CheckInDataset:
    if cfg.checkins:
        return load_checkins(cfg.checkins, cfg.min_interactions)
    if cfg.synth:
        return synth_generate(synth_spec(cfg.synth))
    raise ConfigError("a data source is required: --checkins PATH or --synth PRESET")


def make_splits(cfg: RunConfig) -> TierSplits:
    dataset = load_dataset(cfg)
    logger.info(
        "[DATA] %d user(s), %d POI(s), %d categories, %d check-in(s)",
        len(dataset.users), len(dataset.pois), len(dataset.categories), dataset.num_checkins,
    )
    region_map = partition_regions(list(dataset.pois.values()), cfg.num_regions, seed=cfg.seed)
    return build_tier_splits(
        dataset, region_map, cfg.region_fraction, cfg.seed, cfg.max_seq_len, cfg.min_sequence_length,
    )


def out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def splits_path(args: argparse.Namespace, cfg: RunConfig) -> Path:
    return Path(args.splits) if getattr(args, "splits", None) else Path(cfg.out) / "splits.json"


def ckpt_dir(args: argparse.Namespace, cfg: RunConfig) -> Path:
    return Path(args.checkpoints) if getattr(args, "checkpoints", None) else Path(cfg.out) / "checkpoints"


def write_json(path: Path, data: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def artifact(cfg: RunConfig, **payload: Any) -> dict[str, Any]:
    """Wrap an artifact with the resolved config and seed."""
    return {"config": report_config(cfg), "seed": cfg.seed, **payload}


def run_logger(cfg: RunConfig, name: str):
    return make_run_logger(cfg.enable_logging, name, Path(cfg.out) / "logs", report_config(cfg))


def check_outcomes(outcomes) -> list[dict[str, Any]]:
    for outcome in outcomes:
        if outcome.error is not None:
            raise StageError(outcome.error, outcome.report)
    return [o.report.model_dump(mode="json", exclude=STAGE_FIELDS) for o in outcomes if o.report is not None]


# =============================================================================
# Commands
# =============================================================================
def cmd_prepare_data(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = make_splits(cfg)
    path = write_splits(splits, out_dir(cfg) / "splits.json")
    print(f"Wrote {path}: {len(splits.regions)} region(s), {len(splits.device_jobs())} device sequence(s)")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    dataset = synth_generate(synth_spec(args.synth))
    path = write_checkins(dataset, Path(args.csv) if args.csv else out_dir(cfg) / "checkins.csv")
    print(f"Wrote {path}: {dataset.num_checkins} check-in(s) from {len(dataset.users)} user(s)")
    return EXIT_OK


def cmd_train_global(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = read_splits(splits_path(args, cfg))
    run_log = run_logger(cfg, "train-global")
    model, report = train_global(
        splits.global_sequences, splits.categories, cfg, job_seed(cfg.seed, "global", "cloud"), run_log,
    )
    path = save_checkpoint(model, out_dir(cfg) / "checkpoints" / GLOBAL_FILE, checkpoint_provenance(cfg, cfg.mode))
    run_log.log_checkpoint(path, "global")
    write_json(Path(cfg.out) / "global_stage.json",
               artifact(cfg, stage=report.model_dump(mode="json", exclude=STAGE_FIELDS)))
    print(f"Wrote {path} ({report.epochs_run} epoch(s), best {report.best_epoch})")
    return EXIT_OK


def cmd_train_region(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = read_splits(splits_path(args, cfg))
    global_path: Optional[str] = None
    if cfg.mode == "dcpr":
        path = Path(args.global_ckpt) if args.global_ckpt else Path(cfg.out) / "checkpoints" / GLOBAL_FILE
        if not path.exists():
            raise FileNotFoundError(f"global checkpoint not found: {path} (run train-global, or use --mode dcpr_t)")
        global_path = str(path)
    region_ids = sorted(splits.regions) if args.region is None else [args.region]
    missing = [r for r in region_ids if r not in splits.regions]
    if missing:
        raise DataError(f"region(s) {missing} have no data in the splits")
    target = out_dir(cfg) / "checkpoints"
    provenance = checkpoint_provenance(cfg, cfg.mode)
    arg_list = [
        (global_path, splits.regions[r], cfg, cfg.mode, splits.categories, str(target), provenance)
        for r in region_ids
    ]
    stages = check_outcomes(run_jobs(region_job, arg_list, cfg.jobs, "regions", cfg.progress))
    write_json(Path(cfg.out) / "region_stages.json", artifact(cfg, mode=cfg.mode, stages=stages))
    print(f"Trained {len(stages)} region model(s) into {target}")
    return EXIT_OK


def cmd_train_device(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = read_splits(splits_path(args, cfg))
    source = ckpt_dir(args, cfg)
    seqs = [
        s for s in splits.device_jobs()
        if (args.region is None or s.region_id == args.region) and (args.user is None or s.user_id == args.user)
    ]
    for region_id in sorted({s.region_id for s in seqs}):
        if not (source / region_file(region_id)).exists():
            raise FileNotFoundError(f"region checkpoint not found: {source / region_file(region_id)}")
    target = out_dir(cfg) / "checkpoints"
    provenance = checkpoint_provenance(cfg, cfg.mode)
    arg_list = [(str(source / region_file(s.region_id)), s, cfg, str(target), provenance) for s in seqs]
    stages = check_outcomes(run_jobs(device_job, arg_list, cfg.jobs, "devices", cfg.progress))
    write_json(Path(cfg.out) / "device_stages.json", artifact(cfg, stages=stages))
    skipped = sum(1 for s in stages if s["skipped"])
    print(f"Trained {len(stages) - skipped} patch model(s), skipped {skipped}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = read_splits(splits_path(args, cfg))
    models = TrainedModels.from_dir(ckpt_dir(args, cfg))
    metrics = evaluate_all(models, splits, cfg, use_patches=not args.no_patches)
    base = out_dir(cfg) / "metrics_report"
    write_json(base.with_suffix(".json"), artifact(cfg, metrics=metrics.model_dump(mode="json")))
    text = render_template(
        "metrics_report.txt",
        seed=cfg.seed,
        T_R=metrics.T_R,
        candidates=metrics.candidates,
        patches="used" if metrics.use_patches else "not used (region models only)",
        table=metrics_table(metrics.model_dump(mode="json")),
    ) + "\n"
    base.with_suffix(".txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = resolve(args, lists=True)
    dims = int_list(args.dim, "--dim") if args.dim else [cfg.d]
    t_rs = int_list(args.t_r, "--t-r") if args.t_r else [cfg.T_R]
    source = ckpt_dir(args, cfg)
    models = TrainedModels.from_dir(source) if source.is_dir() else None
    if models is not None and not models.regions:
        models = None
    spath = splits_path(args, cfg)
    splits = read_splits(spath) if spath.exists() else None
    kwargs = {} if args.repeats is None else {"repeats": args.repeats}
    report = bench(models, cfg, dims, t_rs, splits=splits, **kwargs)
    base = out_dir(cfg) / "bench_report"
    write_json(base.with_suffix(".json"), artifact(cfg, bench=report.model_dump(mode="json")))
    text = report.render()
    base.with_suffix(".txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _splits_for_run(args: argparse.Namespace, cfg: RunConfig) -> TierSplits:
    if args.splits:
        return read_splits(args.splits)
    splits = make_splits(cfg)
    write_splits(splits, out_dir(cfg) / "splits.json")
    return splits


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = _splits_for_run(args, cfg)
    report = run_pipeline(
        splits, cfg, cfg.mode, out_dir(cfg), cfg.jobs,
        run_log=run_logger(cfg, f"pipeline_{cfg.mode}"),
        progress=cfg.progress and sys.stderr.isatty(),
    )
    overall = (report.metrics or {}).get("overall", {})
    print(f"Pipeline ({cfg.mode}, seed {cfg.seed}) finished; reports in {cfg.out}")
    print("  " + ", ".join(f"{k}={v:.4f}" for k, v in overall.items()))
    return EXIT_OK


def cmd_transfer(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    splits = _splits_for_run(args, cfg)
    report = compare_transfer(splits, cfg, repeats=args.repeats)
    base = out_dir(cfg) / "transfer_report"
    write_json(base.with_suffix(".json"), artifact(cfg, transfer=report.model_dump(mode="json")))
    text = report.render()
    base.with_suffix(".txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "prepare-data": cmd_prepare_data,
    "synth": cmd_synth,
    "train-global": cmd_train_global,
    "train-region": cmd_train_region,
    "train-device": cmd_train_device,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "pipeline": cmd_pipeline,
    "transfer": cmd_transfer,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit status (argparse exits with 2 on usage errors)."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        code, message = EXIT_CONFIG, f"config error: {e}"
    except FileNotFoundError as e:
        code, message = EXIT_MISSING, f"missing input: {e}"
    except StageError as e:
        code, message = EXIT_STAGE, f"stage failed: {e}"
    except CheckpointError as e:
        code, message = EXIT_CHECKPOINT, f"checkpoint error: {e}"
    except DataError as e:
        code, message = EXIT_DATA, f"data error: {e}"
    except DCPRError as e:
        code, message = EXIT_FAILURE, f"error: {e}"
    print(message, file=sys.stderr)
    return code
