"""Adversarial training loop, checkpoint conversion and inference."""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from psgan.autodiff import Tape, Tensor, backward
from psgan.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from psgan.data.samples import Sample, to_images, to_tensor
from psgan.discriminator import (
    Discriminator,
    DiscriminatorConfig,
    discriminator_loss,
    generator_loss_terms,
)
from psgan.errors import CheckpointError, NonFiniteError, ShapeError, TrainingDiverged
from psgan.generator import Generator, GeneratorConfig
from psgan.nn import Module
from psgan.norm import MaskSet
from psgan.optim import Adam, AdamState

log = logging.getLogger(__name__)

MODEL_KIND = "psgan"
LATEST = "latest.ckpt"
REPORT_NAME = "train_log.csv"
REPORT_HEADER = "step,loss_g,loss_g_l1,loss_g_adv,loss_d"


@dataclass(frozen=True)
class TrainConfig:
    lambda_l1: float = 100.0
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 1
    steps: int = 5000
    seed: int = 0
    checkpoint_every: int = 1000

    def __post_init__(self):
        if not self.lambda_l1 >= 0:
            raise ValueError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.steps < 0 or self.checkpoint_every < 0:
            raise ValueError("batch_size must be >= 1; steps and checkpoint_every >= 0")

    def to_dict(self):
        return asdict(self)


def _config_from(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise CheckpointError(f"unknown {cls.__name__} keys in checkpoint: {sorted(unknown)}")
    return cls(**d)


class StepLosses(NamedTuple):
    step: int
    loss_g: float
    loss_g_l1: float
    loss_g_adv: float
    loss_d: float

    def to_line(self) -> str:
        return f"{self.step},{self.loss_g!r},{self.loss_g_l1!r},{self.loss_g_adv!r},{self.loss_d!r}"


@dataclass
class TrainingReport:
    losses: List[StepLosses]
    report_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    trainer: Optional["Trainer"] = field(default=None, repr=False)

    @property
    def final(self) -> Optional[StepLosses]:
        return self.losses[-1] if self.losses else None


@contextmanager
def frozen(module: Module):
    """Temporarily stop ``module``'s parameters from receiving gradients."""
    params = module.parameters()
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield module
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


class Trainer:
    """Holds models, optimizers and the RNG; one call to :meth:`step` is one
    D update followed by one G update on the same batch."""

    def __init__(self, samples: Sequence[Sample], gen_cfg: GeneratorConfig = None,
                 train_cfg: TrainConfig = None, disc_cfg: DiscriminatorConfig = None):
        self.gen_cfg = gen_cfg or GeneratorConfig()
        self.train_cfg = train_cfg or TrainConfig()
        self.disc_cfg = disc_cfg or DiscriminatorConfig()
        cfg = self.train_cfg
        self.gen = Generator(self.gen_cfg, seed=cfg.seed)
        self.disc = Discriminator(self.disc_cfg, seed=cfg.seed + 1)
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        self.opt_g = Adam(self.gen.named_parameters(), cfg.learning_rate, betas)
        self.opt_d = Adam(self.disc.named_parameters(), cfg.learning_rate, betas)
        self.rng = np.random.default_rng([cfg.seed, 1])
        self.step_count = 0
        self._set_data(samples)

    def _set_data(self, samples: Sequence[Sample]):
        samples = list(samples)
        if not samples:
            raise ValueError("training needs at least one sample")
        shapes = {s.shape for s in samples}
        if len(shapes) > 1:
            raise ShapeError(f"all training images must share one size, got {sorted(shapes)}")
        if self.train_cfg.batch_size > len(samples):
            raise ValueError(f"batch_size {self.train_cfg.batch_size} exceeds dataset size {len(samples)}")
        self.content = to_tensor([s.content for s in samples]).data
        self.target = to_tensor([s.target for s in samples]).data
        self.masks: List[MaskSet] = [s.masks for s in samples]

    def sample_batch(self):
        idx = self.rng.choice(len(self.masks), self.train_cfg.batch_size, replace=False)
        return Tensor(self.content[idx]), Tensor(self.target[idx]), [self.masks[i] for i in idx]

    def step(self) -> StepLosses:
        step = self.step_count + 1
        content, target, masks = self.sample_batch()
        try:
            losses = self._update(content, target, masks)
        except NonFiniteError as exc:
            raise TrainingDiverged(f"step {step}: {exc}") from exc
        losses = StepLosses(step, *losses)
        if not all(math.isfinite(v) for v in losses[1:]):
            raise TrainingDiverged(f"step {step}: non-finite loss {losses}")
        self.step_count = step
        return losses

    def _update(self, content, target, masks):
        cfg = self.train_cfg
        self.gen.train()
        tape_g = Tape()
        with tape_g:
            fake = self.gen(content, target, masks, self.rng)

        detached = fake.detach()
        with Tape() as tape_d:
            loss_d = discriminator_loss(self.disc(target, content), self.disc(detached, content))
        self.opt_d.zero_grad()
        backward(loss_d, tape_d)
        self.opt_d.step()
        self.opt_d.zero_grad()

        with frozen(self.disc):
            with tape_g:
                loss_g, l1, adv = generator_loss_terms(self.disc(fake, content), fake, target, cfg.lambda_l1)
            self.opt_g.zero_grad()
            backward(loss_g, tape_g)
        self.opt_g.step()
        self.opt_g.zero_grad()
        return loss_g.item(), l1.item(), adv.item(), loss_d.item()

    def checkpoint(self) -> Checkpoint:
        arrays: Dict[str, np.ndarray] = {}
        arrays.update({f"gen/{k}": v for k, v in self.gen.state_dict().items()})
        arrays.update({f"disc/{k}": v for k, v in self.disc.state_dict().items()})
        for tag, opt in (("adam_g", self.opt_g), ("adam_d", self.opt_d)):
            arrays.update({f"{tag}/m/{k}": v for k, v in opt.state.m.items()})
            arrays.update({f"{tag}/v/{k}": v for k, v in opt.state.v.items()})
        meta = {
            "kind": MODEL_KIND,
            "step": self.step_count,
            "adam_g_t": self.opt_g.state.t,
            "adam_d_t": self.opt_d.state.t,
            "rng": self.rng.bit_generator.state,
            "train_config": self.train_cfg.to_dict(),
            "gen_config": self.gen_cfg.to_dict(),
            "disc_config": self.disc_cfg.to_dict(),
        }
        return Checkpoint({k: np.array(v, dtype=np.float32) for k, v in arrays.items()}, meta)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, samples: Sequence[Sample],
                        train_cfg: TrainConfig = None) -> "Trainer":
        """Rebuild the full training state; ``train_cfg`` may extend ``steps``."""
        meta = _check_meta(ckpt)
        saved = _config_from(TrainConfig, meta["train_config"])
        if train_cfg is None:
            train_cfg = saved
        else:
            dynamics = ("lambda_l1", "learning_rate", "adam_beta1", "adam_beta2", "batch_size", "seed")
            changed = [k for k in dynamics if getattr(train_cfg, k) != getattr(saved, k)]
            if changed:
                raise CheckpointError(f"cannot resume with changed training settings: {changed}")
        self = cls(samples, _config_from(GeneratorConfig, meta["gen_config"]), train_cfg,
                   _config_from(DiscriminatorConfig, meta["disc_config"]))
        self.gen.load_state_dict(ckpt.group("gen"))
        self.disc.load_state_dict(ckpt.group("disc"))
        for tag, opt, t in (("adam_g", self.opt_g, meta["adam_g_t"]), ("adam_d", self.opt_d, meta["adam_d_t"])):
            opt.state = AdamState({k: v.copy() for k, v in ckpt.group(f"{tag}/m").items()},
                                  {k: v.copy() for k, v in ckpt.group(f"{tag}/v").items()}, int(t))
        self.rng.bit_generator.state = meta["rng"]
        self.step_count = int(meta["step"])
        return self


def _check_meta(ckpt: Checkpoint) -> dict:
    meta = ckpt.meta
    if meta.get("kind") != MODEL_KIND:
        raise CheckpointError(f"checkpoint kind {meta.get('kind')!r} is not {MODEL_KIND!r}")
    missing = {"step", "gen_config", "train_config", "disc_config", "rng"} - meta.keys()
    if missing:
        raise CheckpointError(f"checkpoint metadata lacks {sorted(missing)}")
    return meta


def train(dataset: Sequence[Sample], gen_cfg: GeneratorConfig = None, train_cfg: TrainConfig = None,
          checkpoint_dir=None, resume: Union[bool, str, Path] = False,
          disc_cfg: DiscriminatorConfig = None) -> TrainingReport:
    """Train for ``train_cfg.steps`` total steps (counting any resumed ones).

    With ``checkpoint_dir``, writes ``step_NNNNNN.ckpt`` every
    ``checkpoint_every`` steps, ``latest.ckpt`` at the end, and appends per-step
    losses to ``train_log.csv``. ``resume`` is a checkpoint path, or True for
    ``checkpoint_dir/latest.ckpt``.
    """
    train_cfg = train_cfg or TrainConfig()
    out = Path(checkpoint_dir) if checkpoint_dir is not None else None
    latest = out / LATEST if out is not None else None
    if resume:
        source = latest if resume is True else Path(resume)
        if source is None or not source.is_file():
            raise CheckpointError(f"nothing to resume: {source} does not exist")
        trainer = Trainer.from_checkpoint(load_checkpoint(source), dataset, train_cfg)
        log.info("resuming from step %d", trainer.step_count)
    else:
        trainer = Trainer(dataset, gen_cfg, train_cfg, disc_cfg)

    report_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / REPORT_NAME
        if resume and report_path.is_file():
            _truncate_report(report_path, trainer.step_count)
            report_file = report_path.open("a")
        else:
            report_file = report_path.open("w")
            report_file.write(REPORT_HEADER + "\n")

    losses: List[StepLosses] = []
    try:
        while trainer.step_count < train_cfg.steps:
            rec = trainer.step()
            losses.append(rec)
            if report_file is not None:
                report_file.write(rec.to_line() + "\n")
            if rec.step % 100 == 0 or rec.step == 1:
                log.info("step %d  G %.4f (L1 %.4f, adv %.4f)  D %.4f", *rec)
            if out is not None and train_cfg.checkpoint_every and rec.step % train_cfg.checkpoint_every == 0:
                report_file.flush()
                save_checkpoint(trainer.checkpoint(), out / f"step_{rec.step:06d}.ckpt")
    finally:
        if report_file is not None:
            report_file.close()
    report = TrainingReport(losses, trainer=trainer)
    if out is not None:
        report.report_path = out / REPORT_NAME
        report.checkpoint_path = save_checkpoint(trainer.checkpoint(), latest)
    return report


def _truncate_report(path: Path, step: int):
    """Drop records past ``step`` so a resumed run's log has no duplicates."""
    lines = path.read_text().splitlines()
    kept = [ln for ln in lines if not ln[:1].isdigit() or int(ln.split(",", 1)[0]) <= step]
    path.write_text("".join(ln + "\n" for ln in kept))


def load_generator(checkpoint: Union[str, Path, Checkpoint, Generator]) -> Generator:
    if isinstance(checkpoint, Generator):
        return checkpoint
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    meta = _check_meta(ckpt)
    gen = Generator(_config_from(GeneratorConfig, meta["gen_config"]))
    try:
        gen.load_state_dict(ckpt.group("gen"))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"generator weights do not match their config: {exc}") from None
    return gen.eval()


def infer(content_img, style_img, masks, checkpoint) -> Union[np.ndarray, List[np.ndarray]]:
    """Eval-mode generator output as 8-bit RGB, same size as the input.

    Accepts one image (H x W x 3 uint8) with one :class:`MaskSet`, or equal-length
    lists of each. Inputs whose sides are not multiples of the generator's
    stride are edge-padded for the forward pass and cropped back.
    """
    single = isinstance(content_img, np.ndarray) and content_img.ndim == 3
    contents = [content_img] if single else list(content_img)
    styles = [style_img] if single else list(style_img)
    sets = [masks] if single else list(masks)
    if not (len(contents) == len(styles) == len(sets)):
        raise ShapeError("content, style and masks must have equal lengths")
    gen = load_generator(checkpoint)
    step = 2 ** gen.config.n_downsamples
    outs = []
    for c, s, m in zip(contents, styles, sets):
        c, s = np.asarray(c), np.asarray(s)
        if c.shape != s.shape or c.ndim != 3 or c.shape[2] != 3:
            raise ShapeError(f"content {c.shape} and style {s.shape} must be the same H x W x 3")
        if tuple(m.shape) != c.shape[:2]:
            raise ShapeError(f"masks {m.shape} do not match image {c.shape[:2]}")
        h, w = c.shape[:2]
        ph, pw = -h % step, -w % step
        if ph or pw:
            pad = ((0, ph), (0, pw), (0, 0))
            c, s = np.pad(c, pad, mode="edge"), np.pad(s, pad, mode="edge")
            m = MaskSet([np.pad(k, ((0, ph), (0, pw))) for k in m.masks], (h + ph, w + pw))
        out = gen(to_tensor([c]), to_tensor([s]), [m])
        outs.append(to_images(out)[0][:h, :w])
    return outs[0] if single else outs
