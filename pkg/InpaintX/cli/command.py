import functools
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import click

from InpaintX.tta import trainer
from InpaintX.tta.attention import AttentionConfig
from InpaintX.tta.bench import run_benchmark
from InpaintX.tta.checkpoint import Checkpoint
from InpaintX.tta.config import PRESETS, from_dict, load_config
from InpaintX.tta.data import MaskSpec, generate_mask, load_image, load_mask, read_manifest, save_image, write_masks
from InpaintX.tta.exception import ConfigError, DataError, InpaintError, NumericError
from InpaintX.tta.helper import print_error, print_info, print_success, print_table
from InpaintX.tta.logger_config import add_file_sink, get_logger, logger_enable, setup_logger
from InpaintX.tta.metrics import MetricReport, evaluate

setup_logger()
logger = get_logger()


def _fail(reason, exit_code, error):
    logger.debug(f"{type(error).__name__}: {error}")
    print_error(f"{reason}: {error}")
    raise SystemExit(exit_code)


def reports_errors(command):
    """Turn engine errors into a one-line ``<reason>: <message>`` on stderr and the matching exit code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except InpaintError as e:
            _fail(e.reason, e.exit_code, e)
        except tomllib.TOMLDecodeError as e:
            _fail(ConfigError.reason, ConfigError.exit_code, e)
        except OSError as e:
            _fail(DataError.reason, DataError.exit_code, e)

    return wrapper


def _configs(config_path, preset):
    if config_path:
        return load_config(config_path, preset)
    return from_dict({}, preset)


@click.group(context_settings={"help_option_names": ['-h', '--help']})
@click.option(
    "-v",
    "--verbose",
    count=True,
    default=0,
    help="Enable verbose logging",
)
@click.pass_context
def inpaintx_cli(ctx, verbose):
    ctx.ensure_object(dict)
    ctx.obj['VERBOSE'] = verbose
    setup_logger()
    logger_enable(verbose)


@inpaintx_cli.command("masks")
@click.option("--size", type=click.IntRange(8), default=64, show_default=True, help="Mask side in pixels")
@click.option("--count", type=click.IntRange(1), default=10, show_default=True, help="Number of masks")
@click.option("--min-ratio", type=float, default=0.10, show_default=True, help="Smallest hole ratio")
@click.option("--max-ratio", type=float, default=0.40, show_default=True, help="Largest hole ratio")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the first mask")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.pass_context
@reports_errors
def masks_command(ctx, size, count, min_ratio, max_ratio, seed, out_dir):
    add_file_sink(out_dir, ctx.obj.get('VERBOSE', 0))
    logger.info(f"Generating {count} masks of {size}x{size}")
    spec = MaskSpec(size=size, min_ratio=min_ratio, max_ratio=max_ratio, seed=seed)
    entries = write_masks(out_dir, count, spec)
    print_success(f"Wrote {len(entries)} masks and manifest.tsv to {out_dir}")


@inpaintx_cli.command("train")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML config")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None, help="Base preset (default toy)")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None, help="Checkpoint to resume")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.pass_context
@reports_errors
def train_command(ctx, config_path, preset, resume, out_dir):
    model_cfg, train_cfg = _configs(config_path, preset)
    result = trainer.train(model_cfg, train_cfg, out_dir, resume=resume, verbose=ctx.obj.get('VERBOSE', 0))
    print_success(f"Training finished at step {result.state.step}; checkpoint {result.checkpoint}")
    if result.report.rows:
        print_table("Held-out metrics", MetricReport.COLUMNS, result.report.table_rows()[-2:])


@inpaintx_cli.command("inpaint")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True, help="Checkpoint file")
@click.option("-i", "--image", type=click.Path(exists=True, dir_okay=False), required=True, help="Image path")
@click.option("-m", "--mask", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Mask path (white = hole)")
@click.option("-o", "--out", type=click.Path(dir_okay=False), required=True, help="Output PNG path")
@reports_errors
def inpaint_command(ckpt, image, mask, out):
    state = trainer.restore(Checkpoint.load(ckpt))
    gt = load_image(image)
    M = load_mask(mask)
    if gt.shape[2:] != M.shape[2:]:
        raise DataError(f"image {image} is {gt.shape[3]}x{gt.shape[2]} but mask {mask} is {M.shape[3]}x{M.shape[2]}")
    size = state.model_config.input_size
    if gt.shape[2:] != (size, size):
        raise DataError(f"image {image} is {gt.shape[3]}x{gt.shape[2]}; the checkpoint expects {size}x{size}")
    ratio = float(M.data.mean())
    band = (state.train_config.mask_min_ratio, state.train_config.mask_max_ratio)
    if not band[0] <= ratio <= band[1]:
        logger.warning(f"hole ratio {ratio:.3f} is outside the trained band [{band[0]}, {band[1]}]")

    started = time.perf_counter()
    comp = trainer.inpaint(state.generator, gt, M)
    elapsed = time.perf_counter() - started
    save_image(out, comp)
    print_info(f"Inpainted {size}x{size} in {elapsed:.3f}s")
    print_success(f"Wrote {out}")


@inpaintx_cli.command("eval")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True, help="Checkpoint file")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Image manifest (path, seed, family)")
@click.option("--out-report", type=click.Path(dir_okay=False), required=True, help="CSV report path")
@reports_errors
def eval_command(ckpt, manifest, out_report):
    state = trainer.restore(Checkpoint.load(ckpt))
    size = state.model_config.input_size
    train_cfg = state.train_config
    report = MetricReport()
    for entry in read_manifest(manifest):
        gt = load_image(entry.path)
        if gt.shape[2:] != (size, size):
            raise DataError(f"{entry.path} is {gt.shape[3]}x{gt.shape[2]}; the checkpoint expects {size}x{size}")
        spec = MaskSpec(size=size, min_ratio=train_cfg.mask_min_ratio, max_ratio=train_cfg.mask_max_ratio,
                        seed=entry.seed)
        M = generate_mask(spec)
        report.extend(evaluate(gt, trainer.inpaint(state.generator, gt, M), M, [Path(entry.path).name]))
    if not report.rows:
        raise DataError(f"manifest {manifest} lists no images")
    report.to_csv(out_report)
    print_table("Evaluation", MetricReport.COLUMNS, report.table_rows())
    print_success(f"Wrote {out_report}")


def _int_list(ctx, param, value):
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


@inpaintx_cli.command("bench-attention")
@click.option("--sizes", default="8,16,32", show_default=True, callback=_int_list, help="Comma-separated sides")
@click.option("--patch", type=click.IntRange(1), default=5, show_default=True, help="Swap patch size (odd)")
@click.option("--stride", type=click.Choice(["1", "2"]), default="1", show_default=True, help="Similarity stride")
@click.option("--downsample", type=click.Choice(["1", "2"]), default="2", show_default=True,
              help="Similarity downsample factor")
@click.option("--mode", type=click.Choice(["swap", "weighted", "both"]), default="both", show_default=True)
@click.option("--repeats", type=click.IntRange(1), default=3, show_default=True)
@click.option("--temperature", type=float, default=0.1, show_default=True, help="Weighted-sum softmax temperature")
@click.option("--seed", type=int, default=0, show_default=True)
@reports_errors
def bench_attention_command(sizes, patch, stride, downsample, mode, repeats, temperature, seed):
    cfg = AttentionConfig(swap_patch=patch, stride=int(stride), downsample=int(downsample))
    modes = ("swap", "weighted") if mode == "both" else (mode,)
    rows = run_benchmark(sizes, cfg, modes, repeats, temperature=temperature, seed=seed)
    print_table(
        "Attention benchmark",
        ("size", "mode", "positions/s", "peak bytes", "oracle", "sharpness"),
        [(r.size, r.mode, r.positions_per_second, r.memory_bytes, r.oracle, r.sharpness) for r in rows],
    )
    if any(r.oracle == "MISMATCH" for r in rows):
        raise NumericError("argmax swap disagrees with the exhaustive oracle")


@inpaintx_cli.command("ablate")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML config")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None, help="Base preset (default toy)")
@click.option("--toggles", default=",".join(trainer.VARIANTS), show_default=True,
              help="Comma-separated variants to train")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True, help="Output directory")
@click.pass_context
@reports_errors
def ablate_command(ctx, config_path, preset, toggles, out_dir):
    model_cfg, train_cfg = _configs(config_path, preset)
    add_file_sink(out_dir, ctx.obj.get('VERBOSE', 0))
    variants = [t.strip() for t in toggles.split(",") if t.strip()]
    rows = trainer.ablate(model_cfg, train_cfg, out_dir, variants)
    print_table(
        "Ablation",
        ("variant", "l1_hole", "l1_full", "ms_ssim", "final total"),
        [(r.variant, r.l1_hole, r.l1_full, r.ms_ssim, r.final_total) for r in rows],
    )


if __name__ == "__main__":
    inpaintx_cli(obj={})
