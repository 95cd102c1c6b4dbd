import math

import numpy as np
import pytest

from psgan.autodiff import Tensor, bce_with_logits, l1_loss, mul, sum_
from psgan.autodiff.tensor import Tape, backward
from psgan.checkpoint import Checkpoint, FORMAT_VERSION, MAGIC, decode, encode, load_checkpoint, save_checkpoint
from psgan.data.synth import SynthSpec, synthetic_samples
from psgan.discriminator import (
    Discriminator,
    DiscriminatorConfig,
    discriminator_forward,
    discriminator_loss,
    generator_loss,
    generator_loss_terms,
)
from psgan.errors import CheckpointError, ShapeError, TrainingDiverged
from psgan.generator import GeneratorConfig
from psgan.optim import Adam, AdamState, adam_step
from psgan.training import (
    LATEST,
    REPORT_HEADER,
    REPORT_NAME,
    TrainConfig,
    Trainer,
    infer,
    load_generator,
    train,
)

from conftest import param_gradcheck, to_float64

TINY_GEN = GeneratorConfig(base_channels=4, n_resblocks=1, n_downsamples=2, image_size=32)
TINY_DISC = DiscriminatorConfig(base_channels=4, n_layers=2)


@pytest.fixture(scope="module")
def small_samples():
    return synthetic_samples(SynthSpec(image_size=32, max_polys=1, max_chars=2), 6)


def tiny_train(samples, tmp_path=None, steps=4, **kw):
    cfg = TrainConfig(steps=steps, checkpoint_every=kw.pop("checkpoint_every", 0), **kw)
    return train(samples, TINY_GEN, cfg, tmp_path, disc_cfg=TINY_DISC)


# --- discriminator --------------------------------------------------------------

def test_default_discriminator_emits_8x8_logit_map():
    disc = Discriminator()
    x = Tensor(np.random.default_rng(0).uniform(-1, 1, (2, 3, 64, 64)))
    assert disc(x, x).shape == (2, 1, 8, 8)


def test_discriminator_rejects_mismatched_pair():
    disc = Discriminator(TINY_DISC)
    with pytest.raises(ShapeError):
        disc(Tensor(np.zeros((1, 3, 16, 16))), Tensor(np.zeros((1, 3, 32, 32))))


def test_discriminator_is_deterministic_under_seed():
    x = Tensor(np.random.default_rng(0).uniform(-1, 1, (1, 3, 16, 16)))
    a = Discriminator(TINY_DISC, seed=4).eval()(x, x).data
    b = Discriminator(TINY_DISC, seed=4).eval()(x, x).data
    assert a.tobytes() == b.tobytes()


def test_discriminator_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    disc = Discriminator(DiscriminatorConfig(base_channels=3, n_layers=2), seed=2)
    for p in disc.parameters():
        p.data = p.data + rng.normal(0, 0.2, p.shape)
    to_float64(disc)
    img = Tensor(rng.uniform(-1, 1, (1, 3, 12, 12)), requires_grad=True, dtype=np.float64)
    con = Tensor(rng.uniform(-1, 1, (1, 3, 12, 12)), requires_grad=True, dtype=np.float64)
    probe = rng.standard_normal((1, 1, 3, 3))
    loss = lambda: sum_(mul(discriminator_forward(disc, img, con), Tensor(probe, dtype=np.float64)))
    worst = param_gradcheck(list(disc.named_parameters()) + [("image", img), ("content", con)], loss, n_entries=5)
    assert max(worst.values()) < 1e-2, worst


# --- losses -----------------------------------------------------------------------

def test_generator_loss_is_pure_adversarial_when_images_match():
    logits = Tensor(np.array([[[[0.3, -1.2], [2.0, 0.0]]]]))
    img = np.full((1, 3, 2, 2), 0.25)
    adv = bce_with_logits(logits, 1.0).item()
    assert generator_loss(logits, Tensor(img), img, TrainConfig()).item() == pytest.approx(adv, abs=1e-12)


def test_generator_loss_with_zero_weight_ignores_l1():
    logits = Tensor(np.array([[[[0.3, -1.2]]]]))
    fake = Tensor(np.ones((1, 3, 2, 2)))
    adv = bce_with_logits(logits, 1.0).item()
    assert generator_loss(logits, fake, -np.ones((1, 3, 2, 2)), 0.0).item() == pytest.approx(adv, abs=1e-12)


def test_generator_loss_hand_computed_2x2():
    logits = Tensor(np.array([[[[0.0, 1.0], [-1.0, 2.0]]]]), dtype=np.float64)
    fake = Tensor(np.array([[[[0.5, -0.5], [0.0, 1.0]]]]), dtype=np.float64)
    target = np.zeros((1, 1, 2, 2))
    adv = np.mean([math.log1p(math.exp(-z)) for z in (0.0, 1.0, -1.0, 2.0)])
    l1 = (0.5 + 0.5 + 0.0 + 1.0) / 4
    total, got_l1, got_adv = generator_loss_terms(logits, fake, target, 100.0)
    assert got_adv.item() == pytest.approx(adv, abs=1e-6)
    assert got_l1.item() == pytest.approx(l1, abs=1e-6)
    assert total.item() == pytest.approx(adv + 100.0 * l1, abs=1e-6)


def test_discriminator_loss_closed_forms():
    zeros = Tensor(np.zeros((1, 1, 4, 4)), dtype=np.float64)
    assert discriminator_loss(zeros, zeros).item() == pytest.approx(math.log(2.0), abs=1e-9)
    big = Tensor(np.full((1, 1, 4, 4), 40.0), dtype=np.float64)
    small = Tensor(np.full((1, 1, 4, 4), -40.0), dtype=np.float64)
    assert discriminator_loss(big, small).item() < 1e-12


def test_discriminator_loss_swap_symmetry():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 1, 1, 5, 5))
    lhs = discriminator_loss(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64)).item()
    rhs = discriminator_loss(Tensor(-b, dtype=np.float64), Tensor(-a, dtype=np.float64)).item()
    assert lhs == pytest.approx(rhs, abs=1e-12)


# --- Adam -------------------------------------------------------------------------

def test_adam_first_step_moves_by_lr_times_sign():
    p = Tensor(np.array([1.0, -2.0, 0.5, 3.0]), requires_grad=True, dtype=np.float64)
    g = np.array([0.3, -4.0, 1e-3, -7.0])
    adam_step([("p", p)], {"p": g}, AdamState(), lr=0.01, beta1=0.5, beta2=0.999)
    np.testing.assert_allclose(p.data - np.array([1.0, -2.0, 0.5, 3.0]), -0.01 * np.sign(g), rtol=1e-4)


def test_adam_zero_gradient_leaves_parameter_unchanged():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True, dtype=np.float64)
    state = AdamState()
    adam_step([("p", p)], {"p": np.zeros(2)}, state, lr=0.1)
    assert p.data.tolist() == [1.0, -2.0]
    assert state.t == 1


def test_adam_skips_parameters_without_gradient():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    adam_step([("a", a), ("b", b)], {"a": np.ones(2)}, AdamState(), lr=0.1)
    assert b.data.tolist() == [1.0, 1.0] and a.data[0] < 1.0


def test_adam_descends_quadratic_bowl_monotonically():
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([("w", w)], lr=0.1, betas=(0.5, 0.999))
    values = []
    for _ in range(10):
        with Tape() as tape:
            f = sum_(mul(w, w))
        backward(f, tape)
        values.append(f.item())
        opt.step()
        opt.zero_grad()
    assert all(b < a for a, b in zip(values, values[1:]))


# --- configuration -----------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"lambda_l1": -1.0}, {"learning_rate": 0.0}, {"adam_beta1": 1.0}, {"batch_size": 0},
    {"steps": -1}, {"checkpoint_every": -5},
])
def test_train_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_trainer_needs_uniform_sizes_and_enough_samples(small_samples):
    with pytest.raises(ValueError, match="batch_size"):
        Trainer(small_samples[:2], TINY_GEN, TrainConfig(batch_size=3), TINY_DISC)
    big = synthetic_samples(SynthSpec(), 1)
    with pytest.raises(ShapeError, match="one size"):
        Trainer(small_samples[:1] + big, TINY_GEN, TrainConfig(), TINY_DISC)
    with pytest.raises(ValueError):
        Trainer([], TINY_GEN, TrainConfig(), TINY_DISC)


# --- training loop ------------------------------------------------------------------

def test_smoke_run_default_config_50_steps_finite():
    samples = synthetic_samples(SynthSpec(min_polys=2, max_polys=2), 8)
    report = train(samples, GeneratorConfig(), TrainConfig(steps=50, checkpoint_every=0))
    assert len(report.losses) == 50
    assert all(math.isfinite(v) for rec in report.losses for v in rec[1:])


def test_report_and_checkpoints_written(small_samples, tmp_path):
    report = tiny_train(small_samples, tmp_path, steps=4, checkpoint_every=2)
    assert (tmp_path / "step_000002.ckpt").is_file() and (tmp_path / "step_000004.ckpt").is_file()
    assert report.checkpoint_path == tmp_path / LATEST
    lines = (tmp_path / REPORT_NAME).read_text().splitlines()
    assert lines[0] == REPORT_HEADER
    assert [int(ln.split(",")[0]) for ln in lines[1:]] == [1, 2, 3, 4]
    assert lines[1] == report.losses[0].to_line()
    assert load_checkpoint(tmp_path / LATEST).step == 4


def test_fixed_seed_runs_are_bit_identical(small_samples):
    a = tiny_train(small_samples, steps=3, batch_size=2)
    b = tiny_train(small_samples, steps=3, batch_size=2)
    assert a.losses == b.losses
    assert a.trainer.checkpoint() == b.trainer.checkpoint()
    c = tiny_train(small_samples, steps=3, batch_size=2, seed=1)
    assert c.losses != a.losses


def test_resumed_run_equals_uninterrupted_run(small_samples, tmp_path):
    full = tiny_train(small_samples, tmp_path / "full", steps=6)
    tiny_train(small_samples, tmp_path / "part", steps=3)
    resumed = train(small_samples, train_cfg=TrainConfig(steps=6, checkpoint_every=0),
                    checkpoint_dir=tmp_path / "part", resume=True)
    assert [r.step for r in resumed.losses] == [4, 5, 6]
    assert resumed.losses == full.losses[3:]
    assert load_checkpoint(tmp_path / "part" / LATEST) == load_checkpoint(tmp_path / "full" / LATEST)
    assert (tmp_path / "part" / REPORT_NAME).read_text() == (tmp_path / "full" / REPORT_NAME).read_text()
    assert (tmp_path / "part" / LATEST).read_bytes() == (tmp_path / "full" / LATEST).read_bytes()


def test_resume_rejects_changed_dynamics_and_missing_file(small_samples, tmp_path):
    tiny_train(small_samples, tmp_path, steps=1)
    with pytest.raises(CheckpointError, match="learning_rate"):
        train(small_samples, train_cfg=TrainConfig(steps=2, learning_rate=1e-3), checkpoint_dir=tmp_path, resume=True)
    with pytest.raises(CheckpointError, match="nothing to resume"):
        train(small_samples, train_cfg=TrainConfig(steps=2), checkpoint_dir=tmp_path / "empty", resume=True)


def test_resume_truncates_report_past_checkpoint(small_samples, tmp_path):
    tiny_train(small_samples, tmp_path, steps=4, checkpoint_every=2)
    train(small_samples, train_cfg=TrainConfig(steps=3, checkpoint_every=0), checkpoint_dir=tmp_path,
          resume=tmp_path / "step_000002.ckpt")
    steps = [int(ln.split(",")[0]) for ln in (tmp_path / REPORT_NAME).read_text().splitlines()[1:]]
    assert steps == [1, 2, 3]


def test_gradient_isolation_between_d_and_g_steps(small_samples):
    tr = Trainer(small_samples, TINY_GEN, TrainConfig(), TINY_DISC)
    snap = lambda m: [p.data.copy() for p in m.parameters()]
    same = lambda before, m: all(np.array_equal(a, p.data) for a, p in zip(before, m.parameters()))
    calls = []
    d_step, g_step = tr.opt_d.step, tr.opt_g.step

    def checked_d():
        before = snap(tr.gen)
        assert all(p.grad is None for p in tr.gen.parameters())
        d_step()
        calls.append(("d", same(before, tr.gen)))

    def checked_g():
        before = snap(tr.disc)
        assert all(p.grad is None for p in tr.disc.parameters())
        g_step()
        calls.append(("g", same(before, tr.disc)))

    tr.opt_d.step, tr.opt_g.step = checked_d, checked_g
    d0, g0 = snap(tr.disc), snap(tr.gen)
    tr.step()
    assert calls == [("d", True), ("g", True)]
    assert not same(d0, tr.disc) and not same(g0, tr.gen)


def test_non_finite_loss_aborts_naming_the_step(small_samples):
    tr = Trainer(small_samples, TINY_GEN, TrainConfig(), TINY_DISC)
    tr.step()
    tr.target[:] = np.nan
    with pytest.raises(TrainingDiverged, match="step 2"):
        tr.step()


def test_single_sample_overfit_within_2000_steps():
    sample = synthetic_samples(SynthSpec(min_polys=2, max_polys=2), 1)
    tr = Trainer(sample, GeneratorConfig(), TrainConfig(steps=2000))
    content, target = Tensor(tr.content), tr.target
    best = math.inf
    while tr.step_count < 2000 and best >= 0.05:
        tr.step()
        if tr.step_count % 50 == 0:
            best = min(best, l1_loss(tr.gen.eval()(content, Tensor(target), tr.masks), target).item())
    assert best < 0.05, f"L1 {best:.4f} after {tr.step_count} steps"


# --- checkpoints --------------------------------------------------------------------

def test_checkpoint_save_load_save_is_byte_identical(small_samples, tmp_path):
    ckpt = tiny_train(small_samples, steps=1).trainer.checkpoint()
    first = save_checkpoint(ckpt, tmp_path / "a.ckpt").read_bytes()
    again = save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"), tmp_path / "b.ckpt").read_bytes()
    assert first == again
    assert decode(first) == ckpt


def test_checkpoint_holds_everything_needed_to_resume(small_samples):
    ckpt = tiny_train(small_samples, steps=2).trainer.checkpoint()
    prefixes = {k.split("/")[0] for k in ckpt.arrays}
    assert prefixes == {"gen", "disc", "adam_g", "adam_d"}
    assert {"step", "rng", "train_config", "gen_config", "disc_config", "adam_g_t", "adam_d_t"} <= ckpt.meta.keys()
    assert ckpt.step == 2


@pytest.mark.parametrize("mutate,match", [
    (lambda b: b"XXXXXXXX" + b[8:], "magic"),
    (lambda b: MAGIC + (FORMAT_VERSION + 1).to_bytes(4, "little") + b[12:], "version"),
    (lambda b: b[:-3], "truncated"),
    (lambda b: b[:14], "truncated"),
    (lambda b: b + b"\0", "trailing"),
])
def test_corrupt_checkpoints_are_rejected(mutate, match):
    ckpt = Checkpoint({"gen/w": np.arange(6, dtype=np.float32).reshape(2, 3)}, {"kind": "psgan", "step": 1})
    with pytest.raises(CheckpointError, match=match):
        decode(mutate(encode(ckpt)))


def test_load_generator_rejects_foreign_checkpoints(tmp_path):
    with pytest.raises(CheckpointError, match="kind"):
        load_generator(Checkpoint({}, {"kind": "other"}))
    with pytest.raises(CheckpointError, match="not found"):
        load_generator(tmp_path / "missing.ckpt")


# --- inference --------------------------------------------------------------------------

def test_infer_keeps_dims_and_is_deterministic(small_samples):
    ckpt = tiny_train(small_samples, steps=1).trainer.checkpoint()
    s = small_samples[0]
    out = infer(s.content, s.style, s.masks, ckpt)
    assert out.shape == s.content.shape and out.dtype == np.uint8
    assert infer(s.content, s.style, s.masks, ckpt).tobytes() == out.tobytes()
    crop = (slice(0, 30), slice(0, 22))
    from psgan.norm import MaskSet
    masks = MaskSet([m[crop] for m in s.masks.masks], (30, 22))
    odd = infer(s.content[crop], s.style[crop], masks, ckpt)
    assert odd.shape == (30, 22, 3)
    batch = infer([s.content] * 2, [s.style] * 2, [s.masks] * 2, ckpt)
    assert len(batch) == 2 and batch[0].tobytes() == out.tobytes()


def test_infer_rejects_mismatched_inputs(small_samples):
    ckpt = tiny_train(small_samples, steps=1).trainer.checkpoint()
    s = small_samples[0]
    with pytest.raises(ShapeError):
        infer(s.content, s.style[:16], s.masks, ckpt)
    with pytest.raises(ShapeError):
        infer([s.content], [s.style, s.style], [s.masks], ckpt)
