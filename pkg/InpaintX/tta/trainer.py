"""Alternating discriminator/generator optimisation with checkpoints, logs and sample triptychs."""
import hashlib
import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from devtools import pformat

from . import config as config_io
from . import tensor as T
from .checkpoint import Checkpoint
from .config import TrainConfig
from .data import Batch, MaskSpec, load_bank, make_batch, save_image
from .exception import ConfigError, DataError, NumericError
from .logger_config import add_file_sink, get_logger, remove_file_sink
from .losses import PerceptualExtractor, adv_d_loss, generator_losses, total_loss
from .metrics import MetricReport, evaluate
from .model import AttentionMode, Discriminator, Generator, ModelConfig, Synthesis, build, composite, run
from .tensor import Tensor

logger = get_logger()

HELDOUT_OFFSET = 1_000_000
LOG_FILE = "train_log.tsv"


class Adam:
    """Adam with bias correction; moments are kept in float64, parameters stay float32."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.5, beta2: float = 0.9, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros(p.shape, dtype=np.float64) for name, p in params.items()}
        self.v = {name: np.zeros(p.shape, dtype=np.float64) for name, p in params.items()}

    def step(self, grads: dict):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, param in self.params.items():
            grad = grads.get(param)
            if grad is None:
                continue
            g = grad.data.astype(np.float64)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[name] / correction1) / (np.sqrt(self.v[name] / correction2) + self.eps)
            param.data = (param.data.astype(np.float64) - update).astype(np.float32)

    def state_tensors(self, prefix: str) -> dict:
        out = {}
        for name in self.params:
            out[f"{prefix}/m/{name}"] = self.m[name]
            out[f"{prefix}/v/{name}"] = self.v[name]
        return out

    def load_state(self, prefix: str, ckpt: Checkpoint, t: int):
        self.t = t
        for name in self.params:
            self.m[name] = ckpt.require(f"{prefix}/m/{name}").astype(np.float64)
            self.v[name] = ckpt.require(f"{prefix}/v/{name}").astype(np.float64)


@dataclass
class TrainState:
    model_config: ModelConfig
    train_config: TrainConfig
    generator: Generator
    discriminator: Discriminator
    extractor: PerceptualExtractor
    opt_g: Adam
    opt_d: Adam
    step: int = 0


@dataclass
class LogRecord:
    step: int
    rec: float
    adv_g: float
    adv_d: float
    per: float
    style: float
    total: float

    @classmethod
    def header(cls) -> str:
        return "\t".join(f.name for f in fields(cls))

    def to_line(self) -> str:
        return "\t".join(str(self.step) if i == 0 else repr(value) for i, value in enumerate(astuple(self)))

    @classmethod
    def from_line(cls, line: str) -> "LogRecord":
        parts = line.rstrip("\n").split("\t")
        return cls(int(parts[0]), *(float(p) for p in parts[1:]))


def init_state(model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainState:
    generator, discriminator = build(model_cfg)
    extractor = PerceptualExtractor.from_seed(model_cfg.extractor_seed, 3, model_cfg.extractor_channels)
    opt_g = Adam(generator.named_parameters(), train_cfg.lr_g, train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps)
    opt_d = Adam(discriminator.named_parameters(), train_cfg.lr_d, train_cfg.beta1, train_cfg.beta2,
                 train_cfg.adam_eps)
    return TrainState(model_cfg, train_cfg, generator, discriminator, extractor, opt_g, opt_d)


def _digest(params: dict) -> str:
    h = hashlib.sha1()
    for name, tensor in params.items():
        h.update(name.encode())
        h.update(tensor.data.tobytes())
    return h.hexdigest()


def _ensure_finite(name: str, value: Tensor, state: TrainState, values: dict):
    if not math.isfinite(value.item()):
        logger.error(f"non-finite {name} at step {state.step + 1}\n" + pformat({
            "step": state.step + 1,
            "losses": values,
            "generator_norms": {k: float(np.abs(p.data).max()) for k, p in state.generator.named_parameters().items()},
        }))
        raise NumericError(f"{name} became non-finite at step {state.step + 1}")


def train_step(state: TrainState, batch: Batch) -> LogRecord:
    """One discriminator update on (I_gt ⊕ M, I_comp ⊕ M), then one generator update on the total loss."""
    G, D = state.generator, state.discriminator
    gt, M = batch.gt, batch.mask
    n = gt.shape[0]
    debug = T.debug_enabled()
    with T.Tape():
        pred, _ = run(G, batch.z, M)
        comp = composite(pred, gt, M)

        real = T.concat([gt, M], axis=1)
        fake = T.concat([comp.detach(), M], axis=1)
        scores = D(T.concat([real, fake], axis=0), train_mode=True)
        loss_d = adv_d_loss(T.slice_axis(scores, 0, 0, n), T.slice_axis(scores, 0, n, 2 * n))
        _ensure_finite("discriminator loss", loss_d, state, {"adv_d": loss_d.item()})
        before = _digest(G.named_parameters()) if debug else None
        state.opt_d.step(T.backward(loss_d))
        if debug and _digest(G.named_parameters()) != before:
            raise NumericError("discriminator update modified generator parameters")

        fake_scores = D(T.concat([comp, M], axis=1), train_mode=False)
        parts = generator_losses(state.extractor, gt, pred, comp, fake_scores)
        total = total_loss(state.model_config.loss_weights, parts)
        values = {k: getattr(parts, k).item() for k in ("rec", "adv_g", "per", "style")}
        _ensure_finite("total loss", total, state, {**values, "adv_d": loss_d.item(), "total": total.item()})
        before = _digest(D.named_parameters()) if debug else None
        state.opt_g.step(T.backward(total))
        if debug and _digest(D.named_parameters()) != before:
            raise NumericError("generator update modified discriminator parameters")

    state.step += 1
    record = LogRecord(state.step, values["rec"], values["adv_g"], loss_d.item(), values["per"], values["style"],
                       total.item())
    logger.debug(record.to_line())
    return record


class BatchSource:
    """Batches by step index; a bounded thread pool renders upcoming steps ahead of the loop."""

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig, bank=None):
        self.size = model_cfg.input_size
        self.cfg = train_cfg
        self.bank = bank

    def batch(self, step: int) -> Batch:
        spec = MaskSpec(size=self.size, min_ratio=self.cfg.mask_min_ratio, max_ratio=self.cfg.mask_max_ratio)
        return make_batch(self.cfg.seed, step, self.cfg.batch_size, self.size, self.cfg.families, spec, self.bank)

    def iterate(self, start: int, stop: int):
        if self.cfg.prefetch == 0:
            for step in range(start, stop):
                yield self.batch(step)
            return
        with ThreadPoolExecutor(max_workers=self.cfg.prefetch, thread_name_prefix="batch") as pool:
            pending = deque()
            step = start
            while step < stop or pending:
                while step < stop and len(pending) < self.cfg.prefetch:
                    pending.append(pool.submit(self.batch, step))
                    step += 1
                yield pending.popleft().result()


def snapshot(state: TrainState) -> Checkpoint:
    tensors = {}
    for name, p in state.generator.named_parameters().items():
        tensors[name] = p.data
    for name, p in state.discriminator.named_parameters().items():
        tensors[name] = p.data
    tensors.update(state.discriminator.spectral_vectors())
    tensors.update({name: t.data for name, t in state.extractor.tensors().items()})
    tensors.update(state.opt_g.state_tensors("adam/generator"))
    tensors.update(state.opt_d.state_tensors("adam/discriminator"))
    metadata = {
        "config": config_io.to_dict(state.model_config, state.train_config),
        "step": state.step,
        "extractor_seed": state.extractor.seed,
        "adam": {"generator": state.opt_g.t, "discriminator": state.opt_d.t},
        "rng": {"seed": state.train_config.seed, "next_step": state.step},
    }
    return Checkpoint(metadata, tensors)


def restore(ckpt: Checkpoint) -> TrainState:
    try:
        model_cfg, train_cfg = config_io.from_dict(ckpt.metadata["config"])
        step = int(ckpt.metadata["step"])
        adam = ckpt.metadata["adam"]
    except KeyError as e:
        raise DataError(f"checkpoint metadata lacks {e}") from None
    state = init_state(model_cfg, train_cfg)
    for params in (state.generator.named_parameters(), state.discriminator.named_parameters(),
                   state.extractor.tensors()):
        for name, tensor in params.items():
            stored = ckpt.require(name)
            if stored.shape != tensor.shape:
                raise DataError(f"checkpoint tensor {name} has shape {stored.shape}, model expects {tensor.shape}")
            tensor.data = np.require(stored, dtype=np.float32, requirements="C")
    state.discriminator.load_spectral_vectors({k: ckpt.require(k) for k in state.discriminator.spectral_vectors()})
    state.extractor.seed = ckpt.metadata.get("extractor_seed", model_cfg.extractor_seed)
    state.opt_g.load_state("adam/generator", ckpt, int(adam["generator"]))
    state.opt_d.load_state("adam/discriminator", ckpt, int(adam["discriminator"]))
    state.step = step
    return state


def checkpoint_path(out_dir, step: int) -> Path:
    return Path(out_dir) / "checkpoints" / f"ckpt_{step:06d}.ttak"


def save_triptych(path, gt: Tensor, M: Tensor, comp: Tensor) -> Path:
    """original | masked (hole painted white) | inpainted, for the first sample of a batch."""
    original = gt.data[0]
    hole = M.data[0]
    masked = original * (1.0 - hole) + hole
    return save_image(path, np.concatenate([original, masked, comp.data[0]], axis=2))


def inpaint(G: Generator, gt: Tensor, M: Tensor) -> Tensor:
    z = Tensor(gt.data * (1.0 - M.data))
    pred, _ = run(G, z, M)
    return composite(pred, gt, M)


def heldout_report(state: TrainState, count: int | None = None, bank=None) -> MetricReport:
    count = state.train_config.eval_images if count is None else count
    source = BatchSource(state.model_config, state.train_config, bank)
    report = MetricReport()
    done, k = 0, 0
    while done < count:
        batch = source.batch(HELDOUT_OFFSET + k)
        take = min(count - done, batch.gt.shape[0])
        gt, M = Tensor(batch.gt.data[:take]), Tensor(batch.mask.data[:take])
        names = [f"heldout{done + i:04d}" for i in range(take)]
        report.extend(evaluate(gt, inpaint(state.generator, gt, M), M, names))
        done += take
        k += 1
    return report


def _open_log(out_dir: Path, resume_step: int):
    path = out_dir / LOG_FILE
    kept = []
    if resume_step and path.exists():
        kept = [line for line in path.read_text().splitlines()[1:] if line and int(line.split("\t")[0]) <= resume_step]
    handle = path.open("w")
    handle.write(LogRecord.header() + "\n")
    for line in kept:
        handle.write(line + "\n")
    handle.flush()
    return handle


@dataclass
class TrainResult:
    state: TrainState
    report: MetricReport
    records: list
    checkpoint: Path


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir, resume=None, stop_at: int | None = None,
          verbose: int = 0) -> TrainResult:
    """Run (or resume) training up to ``train_cfg.steps``; ``stop_at`` ends early, e.g. to test resumption."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    add_file_sink(out_dir, verbose)
    if resume is not None:
        state = restore(Checkpoint.load(resume))
        train_cfg = state.train_config
        logger.info(f"resumed from {resume} at step {state.step}")
    else:
        model_cfg.validate()
        train_cfg.validate()
        state = init_state(model_cfg, train_cfg)
    last = min(train_cfg.steps, stop_at) if stop_at is not None else train_cfg.steps
    bank = load_bank(train_cfg.manifest, state.model_config.input_size) if train_cfg.manifest else None
    source = BatchSource(state.model_config, train_cfg, bank)

    records = []
    ckpt = None
    started = time.perf_counter()
    logger.info(f"training steps {state.step + 1}..{last} into {out_dir}")
    with _open_log(out_dir, state.step) as log:
        for batch in source.iterate(state.step, last):
            record = train_step(state, batch)
            records.append(record)
            log.write(record.to_line() + "\n")
            log.flush()
            if state.step % train_cfg.log_every == 0:
                logger.info(f"step {state.step}: total {record.total:.4f} rec {record.rec:.4f} "
                            f"adv_d {record.adv_d:.4f}")
            if state.step % train_cfg.checkpoint_every == 0 or state.step == last:
                ckpt = snapshot(state).save(checkpoint_path(out_dir, state.step))
                comp = inpaint(state.generator, batch.gt, batch.mask)
                save_triptych(out_dir / "samples" / f"step_{state.step:06d}.png", batch.gt, batch.mask, comp)
    if ckpt is None:
        ckpt = snapshot(state).save(checkpoint_path(out_dir, state.step))
    logger.info(f"trained {len(records)} steps in {time.perf_counter() - started:.1f}s")

    report = heldout_report(state, bank=bank)
    if report.rows:
        report.to_csv(out_dir / "eval.csv")
        logger.info(f"held-out: l1_hole {report.l1_hole:.4f} ms_ssim {report.ms_ssim:.4f}")
    return TrainResult(state, report, records, ckpt)


VARIANTS = {
    "full": lambda cfg: {},
    "no_tta": lambda cfg: {"tta_levels": (False,) * cfg.levels},
    "weighted": lambda cfg: {"attention_mode": AttentionMode.WEIGHTED},
    "no_norm": lambda cfg: {"normalize_fusion": False},
    "concat": lambda cfg: {"synthesis": Synthesis.CONCAT},
}


@dataclass
class AblationRow:
    variant: str
    l1_hole: float
    l1_full: float
    ms_ssim: float
    final_total: float


def ablate(model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir, toggles=tuple(VARIANTS)) -> list:
    """Train each variant under identical seeds and compare held-out metrics."""
    unknown = [t for t in toggles if t not in VARIANTS]
    if unknown:
        raise ConfigError([f"unknown ablation variant {t!r}; expected one of {list(VARIANTS)}" for t in unknown])
    rows = []
    for name in toggles:
        variant = model_cfg.variant(**VARIANTS[name](model_cfg))
        logger.info(f"ablation variant {name}")
        variant_dir = Path(out_dir) / name
        try:
            result = train(variant, train_cfg, variant_dir)
        finally:
            remove_file_sink(variant_dir)
        final = result.records[-1].total if result.records else float("nan")
        rows.append(AblationRow(name, result.report.l1_hole, result.report.l1_full, result.report.ms_ssim, final))
    return rows
