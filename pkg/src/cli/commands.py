"""
Command-line surface: ``train``, ``recon``, ``phantom``, ``mask`` and ``bench``.

Every command writes its outputs and one ``manifest.ini`` under ``--out``.
Errors map to exit codes: 2 for config errors, 3 for shape/data errors,
4 for numeric failures, 1 for anything unexpected.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, List, Optional, Sequence

from src.analysis.attention_cost import count_costs, format_table, measure_costs, write_csv
from src.cli.manifest import RunManifest
from src.cli.previews import save_preview
from src.cli.recon_runner import ReconRunner
from src.imaging.coils import simulate_coils
from src.imaging.masks import generate_vdrs_mask
from src.imaging.operator import ImagingOperator
from src.imaging.phantoms import DEFAULT_DIGITS, make_digit_phantom, make_volume, noise_ladder
from src.tensor.serialization import save_tensor
from src.training.dataset import ImageDataset
from src.training.selection import select_checkpoint, validation_acquisitions
from src.training.trainer import LOSS_LOG, Trainer
from src.utils.config import Config, load_config
from src.utils.context import cleanup_context, get_context, initialize_context
from src.utils.errors import SlaterError

logger = logging.getLogger("cli")

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"

Command = Callable[[argparse.Namespace, RunManifest], Awaitable[List[Path]]]


def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slater", description="Zero-shot MRI reconstruction with a transformer prior")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, help="Path to an INI configuration file")
        sub.add_argument("--seed", type=int, help="Base seed (overrides the config and SLATER_SEED)")
        sub.add_argument("--out", type=Path, default=Path("runs") / name, help="Output directory")
        return sub

    train = add_command("train", "Pre-train the generator adversarially on procedural phantoms")
    train.add_argument("--steps", type=int, help="Stop after this many steps")
    train.add_argument("--select", action="store_true", help="Score every checkpoint on the validation images")
    train.add_argument("--select-iters", type=int, default=50, help="Inference iterations per validation image")

    recon = add_command("recon", "Reconstruct undersampled acquisitions")
    recon.add_argument("--checkpoint", type=Path, help="Checkpoint directory (required for zero-shot)")
    recon.add_argument("--acquisition", type=Path, help="Acquisition directory; simulated from the config when absent")
    recon.add_argument("--mode", choices=("zero-shot", "dip"))
    recon.add_argument("--R", dest="acceleration", type=float, help="Acceleration of the simulated mask")
    recon.add_argument("--lambda1", type=float)
    recon.add_argument("--lambda2", type=float)
    recon.add_argument("--iters", type=int, help="Inference iterations")
    recon.add_argument("--strict-dc", action="store_true", help="Replace sampled k-space with the acquired values")
    recon.add_argument("--ablate", action="store_true", help="Run the None/L/LN/LNW parameter-set ablation")
    recon.add_argument("--propagate", action="store_true", help="Warm-start each slice from the previous one")
    recon.add_argument("--warm-iters", type=int, help="Iterations for warm-started slices")
    recon.add_argument("--attention-maps", action="store_true", help="Write cross-attention maps as PNGs")

    phantom = add_command("phantom", "Write a numerical phantom")
    phantom.add_argument("--size", type=int)
    phantom.add_argument("--noise-var", type=float)
    phantom.add_argument("--digits", type=_int_list, default=list(DEFAULT_DIGITS))
    phantom.add_argument("--noise-ladder", action="store_true", help="Write the digit phantom at every standard noise level")
    phantom.add_argument("--kind", choices=("digits", "brain"))
    phantom.add_argument("--slices", type=int, help="Number of brain slices")

    mask = add_command("mask", "Write a variable-density random sampling mask")
    mask.add_argument("--size", type=int)
    mask.add_argument("--R", dest="acceleration", type=float)

    bench = add_command("bench", "Compare self- and cross-attention costs")
    bench.add_argument("--sizes", type=_int_list, default=[16, 32, 64])
    bench.add_argument("--latents", type=int, default=16)
    bench.add_argument("--kernel", type=int, default=3)
    bench.add_argument("--no-time", action="store_true", help="Only count operations")
    bench.add_argument("--csv", type=Path, help="CSV file, relative to --out")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Config values set by flags; ``None`` means the flag was not given."""
    if args.command == "train":
        return {"training": {"max_steps": args.steps}}
    if args.command == "recon":
        return {
            "acquisition": {"acceleration": args.acceleration},
            "inference": {
                "mode": args.mode,
                "lambda1": args.lambda1,
                "lambda2": args.lambda2,
                "max_iterations": args.iters,
                "strict_dc": True if args.strict_dc else None,
            },
        }
    if args.command == "phantom":
        return {"acquisition": {
            "size": args.size,
            "noise_variance": args.noise_var,
            "phantom": args.kind,
            "n_slices": args.slices,
        }}
    if args.command == "mask":
        return {"acquisition": {"size": args.size, "acceleration": args.acceleration}}
    return {}


def _config(args: argparse.Namespace) -> Config:
    return load_config(args.config, _overrides(args), args.seed)


async def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    config = _config(args)
    manifest.attach_config(config)
    context = await initialize_context(config.to_dict(), config.seed, args.out)
    dataset = ImageDataset.build(config.dataset, config.synthesizer.final_resolution, context.rng("dataset"))
    trainer = Trainer(config, dataset, args.out)
    result = await asyncio.to_thread(trainer.train)
    manifest.seeds.update(context.seeds_used)
    manifest.seeds.update(trainer.context.seeds_used)
    outputs = [args.out / LOSS_LOG, *result.checkpoints]

    if args.select:
        acq = config.acquisition
        resolution = config.synthesizer.final_resolution
        operator = ImagingOperator(
            generate_vdrs_mask(resolution, resolution, acq.acceleration, acq.seed),
            simulate_coils(resolution, resolution, acq.n_coils),
        )
        validation = validation_acquisitions(dataset.validation, [operator])
        selection = await asyncio.to_thread(
            select_checkpoint, result.checkpoints, validation, config.inference, args.select_iters
        )
        lines = [f"best = {selection.best}"] + [f"{path} = {score:.6g}" for path, score in selection.scores.items()]
        (args.out / "selection.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(args.out / "selection.txt")
    return outputs


async def cmd_recon(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    config = _config(args)
    manifest.attach_config(config)
    if args.checkpoint is not None:
        manifest.inputs["checkpoint"] = str(args.checkpoint)
    if args.acquisition is not None:
        manifest.inputs["acquisition"] = str(args.acquisition)
        if args.acceleration is not None:
            logger.warning("--R only applies to simulated acquisitions; the stored mask is used")

    runner = None
    try:
        runner = ReconRunner(
            config,
            args.out,
            checkpoint=args.checkpoint,
            acquisition_dir=args.acquisition,
            ablate=args.ablate,
            propagate=args.propagate,
            warm_iterations=args.warm_iters,
            attention_maps=args.attention_maps,
        )
        await runner.initialize()
        await runner.run()
        manifest.seeds.update(get_context().seeds_used)
        manifest.seeds["inference"] = config.inference.seed
        return runner.outputs
    finally:
        if runner is not None:
            await runner.cleanup()


async def cmd_phantom(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    config = _config(args)
    manifest.attach_config(config)
    acq = config.acquisition
    context = await initialize_context(config.to_dict(), config.seed, args.out)
    rng = context.rng("phantom")
    outputs = []

    if args.noise_ladder:
        images = {f"phantom_var{variance:g}": image for variance, image in noise_ladder(acq.size, rng, args.digits).items()}
    elif acq.phantom == "digits":
        images = {"phantom": make_digit_phantom(acq.size, acq.noise_variance, args.digits, rng)}
    else:
        volume = make_volume(acq.size, acq.n_slices, rng)
        images = {"phantom": volume[0] if acq.n_slices == 1 else volume}

    for stem, image in images.items():
        outputs.append(save_tensor(args.out / f"{stem}.stf1", image))
        previews = [image] if image.ndim == 2 else list(image)
        for index, preview in enumerate(previews):
            suffix = "" if len(previews) == 1 else f"_{index:03d}"
            outputs.append(save_preview(preview, args.out / f"{stem}{suffix}.png"))
    manifest.seeds.update(context.seeds_used)
    logger.info(f"Wrote {len(images)} phantom(s) of size {acq.size} to {args.out}")
    return outputs


async def cmd_mask(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    config = _config(args)
    manifest.attach_config(config)
    acq = config.acquisition
    mask = generate_vdrs_mask(acq.size, acq.size, acq.acceleration, acq.seed)
    manifest.seeds["mask"] = acq.seed
    logger.info(
        f"Mask {acq.size}x{acq.size}: target R {mask.target_acceleration:g}, "
        f"realized R {mask.realized_acceleration:.3f} after {mask.draws} draw(s)"
    )
    return [mask.save(args.out), args.out / "mask.ini", save_preview(mask.mask, args.out / "mask.png")]


async def cmd_bench(args: argparse.Namespace, manifest: RunManifest) -> List[Path]:
    seed = args.seed if args.seed is not None else 0
    manifest.seeds["bench"] = seed
    if args.no_time:
        reports = [count_costs(h, h, args.latents, args.kernel) for h in args.sizes]
    else:
        reports = await asyncio.to_thread(
            measure_costs, args.sizes, args.latents, args.kernel, seed=seed
        )
    table = format_table(reports)
    print(table, end="")
    args.out.mkdir(parents=True, exist_ok=True)
    table_path = args.out / "costs.txt"
    table_path.write_text(table, encoding="utf-8")
    outputs = [table_path]
    if args.csv is not None:
        outputs.append(write_csv(reports, args.out / args.csv))
    return outputs


COMMANDS: Dict[str, Command] = {
    "train": cmd_train,
    "recon": cmd_recon,
    "phantom": cmd_phantom,
    "mask": cmd_mask,
    "bench": cmd_bench,
}


async def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one command and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags and 0 on --help
        return int(e.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    manifest = RunManifest(command=args.command, argv=argv)
    if args.config is not None:
        manifest.inputs["config"] = str(args.config)

    exit_code = 0
    try:
        logger.info(f"Starting {args.command}")
        outputs = await COMMANDS[args.command](args, manifest)
        manifest.outputs = [str(path) for path in outputs]
    except SlaterError as e:
        logger.error(f"{args.command} failed: {e}")
        exit_code = e.exit_code
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        exit_code = 130
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}", exc_info=True)
        exit_code = 1
    finally:
        await cleanup_context()

    manifest.finish(exit_code)
    try:
        manifest.write(args.out)
    except OSError as e:
        logger.error(f"Cannot write the run manifest to {args.out}: {e}")
    if exit_code == 0:
        logger.info(f"{args.command} complete, results in {args.out}")
    return exit_code
