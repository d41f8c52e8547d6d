import numpy as np
import pytest
from click.testing import CliRunner

from InpaintX.cli import command
from InpaintX.cli.command import inpaintx_cli
from InpaintX.tta.bench import BenchRow
from InpaintX.tta.data import build_dataset, dequantize, load_image, save_image, save_mask
from InpaintX.tta.tensor import Tensor
from InpaintX.tta.trainer import init_state, snapshot


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def checkpoint(tmp_path, tiny_config, tiny_train):
    return snapshot(init_state(tiny_config, tiny_train)).save(tmp_path / "model.ttak")


def invoke(runner, *args):
    return runner.invoke(inpaintx_cli, list(map(str, args)), obj={})


def test_masks_are_deterministic(runner, tmp_path):
    for name in ("a", "b"):
        result = invoke(runner, "masks", "--size", 32, "--count", 3, "--seed", 4, "--out-dir", tmp_path / name)
        assert result.exit_code == 0, result.output
    for k in range(3):
        mask = f"mask_{k:05d}.png"
        assert (tmp_path / "a" / mask).read_bytes() == (tmp_path / "b" / mask).read_bytes()
    assert (tmp_path / "a" / "manifest.tsv").exists()


def test_inpaint_with_empty_mask_returns_input(runner, tmp_path, checkpoint, rng):
    image = dequantize(rng.integers(0, 256, (3, 16, 16)).astype(np.uint8))[None]
    image_path = save_image(tmp_path / "in.png", Tensor(image))
    mask_path = save_mask(tmp_path / "mask.png", Tensor(np.zeros((1, 1, 16, 16))))
    out = tmp_path / "out.png"
    result = invoke(runner, "inpaint", "--ckpt", checkpoint, "-i", image_path, "-m", mask_path, "-o", out)
    assert result.exit_code == 0, result.output
    np.testing.assert_array_equal(load_image(out).data, image)


def test_inpaint_size_mismatch_is_data_error(runner, tmp_path, checkpoint):
    image_path = save_image(tmp_path / "in.png", Tensor(np.zeros((1, 3, 8, 8))))
    mask_path = save_mask(tmp_path / "mask.png", Tensor(np.zeros((1, 1, 8, 8))))
    result = invoke(runner, "inpaint", "--ckpt", checkpoint, "-i", image_path, "-m", mask_path, "-o",
                    tmp_path / "out.png")
    assert result.exit_code == 3
    assert "data-error" in result.output


def test_unreadable_image_exits_three(runner, tmp_path, checkpoint):
    broken = tmp_path / "broken.png"
    broken.write_bytes(b"nothing")
    mask_path = save_mask(tmp_path / "mask.png", Tensor(np.zeros((1, 1, 16, 16))))
    result = invoke(runner, "inpaint", "--ckpt", checkpoint, "-i", broken, "-m", mask_path, "-o",
                    tmp_path / "out.png")
    assert result.exit_code == 3


def test_bad_config_exits_two(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("[model]\ndepth = 3\n")
    result = invoke(runner, "train", "-c", config, "--out-dir", tmp_path / "run")
    assert result.exit_code == 2
    assert "config-error" in result.output
    assert "model.depth" in result.output


def test_unknown_ablation_variant_exits_two(runner, tmp_path):
    result = invoke(runner, "ablate", "--toggles", "full,sharpen", "--out-dir", tmp_path / "ab")
    assert result.exit_code == 2


def test_bench_attention_runs_both_modes(runner):
    result = invoke(runner, "bench-attention", "--sizes", "8,16", "--patch", 3, "--mode", "both", "--repeats", 1)
    assert result.exit_code == 0, result.output
    assert "MISMATCH" not in result.output


def test_bench_indivisible_size_exits_three(runner):
    result = invoke(runner, "bench-attention", "--sizes", "9", "--patch", 3, "--repeats", 1)
    assert result.exit_code == 3


def test_bench_mismatch_exits_four(runner, monkeypatch):
    monkeypatch.setattr(command, "run_benchmark",
                        lambda *args, **kwargs: [BenchRow(8, "swap", 1.0, 1, "MISMATCH", 0.0)])
    result = invoke(runner, "bench-attention", "--sizes", "8", "--repeats", 1)
    assert result.exit_code == 4
    assert "numeric-error" in result.output


def test_eval_writes_report(runner, tmp_path, checkpoint):
    build_dataset(tmp_path / "data", 2, 16, seed=1)
    report = tmp_path / "eval.csv"
    result = invoke(runner, "eval", "--ckpt", checkpoint, "--manifest", tmp_path / "data" / "manifest.tsv",
                    "--out-report", report)
    assert result.exit_code == 0, result.output
    lines = report.read_text().splitlines()
    assert lines[0].startswith("name")
    assert len(lines) == 1 + 2 + 2


def test_eval_with_missing_image_exits_three(runner, tmp_path, checkpoint):
    entries = build_dataset(tmp_path / "data", 2, 16, seed=1)
    entries[1].path.unlink()
    result = invoke(runner, "eval", "--ckpt", checkpoint, "--manifest", tmp_path / "data" / "manifest.tsv",
                    "--out-report", tmp_path / "eval.csv")
    assert result.exit_code == 3
    assert "data-error" in result.output
    assert isinstance(result.exception, SystemExit)


def test_unwritable_output_exits_three(runner, tmp_path, checkpoint):
    image_path = save_image(tmp_path / "in.png", Tensor(np.zeros((1, 3, 16, 16))))
    mask_path = save_mask(tmp_path / "mask.png", Tensor(np.zeros((1, 1, 16, 16))))
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    result = invoke(runner, "inpaint", "--ckpt", checkpoint, "-i", image_path, "-m", mask_path, "-o",
                    blocker / "out.png")
    assert result.exit_code == 3
    assert "data-error" in result.output
    assert isinstance(result.exception, SystemExit)


TINY_TOML = """
[model]
levels = 2
base_channels = 4
input_size = 16
dilations = [2, 4]
disc_channels = [4, 8, 8, 8]
disc_kernel = 3
extractor_channels = [4, 8]

[attention]
swap_patch = 3
sim_patch = 3
stride = 1
downsample = 2

[train]
steps = 2
batch_size = 2
checkpoint_every = 1
log_every = 1
eval_images = 2
prefetch = 1
mask_min_ratio = 0.05
mask_max_ratio = 0.6
"""


def test_train_then_resume(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(TINY_TOML)
    result = invoke(runner, "train", "-c", config, "--out-dir", tmp_path / "run")
    assert result.exit_code == 0, result.output
    straight = (tmp_path / "run" / "train_log.tsv").read_text().splitlines()
    assert len(straight) == 3

    first_checkpoint = tmp_path / "run" / "checkpoints" / "ckpt_000001.ttak"
    resumed = invoke(runner, "train", "-c", config, "--resume", first_checkpoint, "--out-dir", tmp_path / "again")
    assert resumed.exit_code == 0, resumed.output
    assert (tmp_path / "again" / "train_log.tsv").read_text().splitlines()[-1] == straight[-1]
