"""``psgan`` command line: datagen, train, replace, eval.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines using the
long-option names (dashes or underscores). Explicit flags win over the file;
unknown keys are rejected. The resolved configuration is logged to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from psgan.errors import PsganError

log = logging.getLogger("psgan")


class UsageError(Exception):
    pass


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# option name -> (type, default, help); REQUIRED keys must come from a flag or the config file
OPTIONS: Dict[str, Dict[str, tuple]] = {
    "datagen": {
        "out": (str, None, "output dataset directory"),
        "n": (int, 100, "number of images"),
        "size": (int, 64, "image side in pixels"),
        "seed": (int, 0, "dataset seed"),
        "min_polys": (int, 1, "fewest text regions per image"),
        "max_polys": (int, 2, "most text regions per image"),
        "max_chars": (int, 5, "longest generated string"),
        "force": (_bool, False, "overwrite a non-empty output directory"),
    },
    "train": {
        "data": (str, None, "dataset directory"),
        "out": (str, None, "directory for checkpoints and the loss log"),
        "steps": (int, 5000, "total training steps"),
        "batch": (int, 1, "batch size"),
        "seed": (int, 0, "training seed"),
        "resume": (str, None, "checkpoint to resume from"),
        "checkpoint_every": (int, 1000, "steps between checkpoints (0 = final only)"),
        "lambda_l1": (float, 100.0, "L1 weight"),
        "learning_rate": (float, 2e-4, "Adam learning rate"),
        "adam_beta1": (float, 0.5, "Adam beta1"),
        "adam_beta2": (float, 0.999, "Adam beta2"),
        "base_channels": (int, 32, "generator width"),
        "n_resblocks": (int, 6, "conditioned residual blocks"),
        "n_downsamples": (int, 2, "encoder downsampling steps"),
        "dropout_rate": (float, 0.5, "residual-block dropout"),
    },
    "replace": {
        "image": (str, None, "input PNG"),
        "polys": (str, None, "polygon file (annotation grammar, transcript ignored)"),
        "text": (str, None, "replacement string for every polygon"),
        "texts": (str, None, "optional 'index,text' file of per-polygon strings"),
        "ckpt": (str, None, "generator checkpoint"),
        "out": (str, None, "output PNG"),
    },
    "eval": {
        "data": (str, None, "dataset directory"),
        "ckpt": (str, None, "generator checkpoint"),
        "out": (str, None, "metrics record file (line-delimited JSON)"),
        "details": (str, None, "per-region detail file (default: <out>.regions.csv)"),
        "on_targets": (_bool, False, "score the unmodified images against their own transcripts"),
        "seed": (int, 0, "seed for the replacement strings"),
    },
}

REQUIRED = {
    "datagen": ("out",),
    "train": ("data", "out"),
    "replace": ("image", "polys", "ckpt", "out"),
    "eval": ("data", "out"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psgan", description="Scene-text replacement with a patched-style GAN.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in OPTIONS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="key=value file of defaults")
        for name, (typ, default, help_) in opts.items():
            flag = "--" + name.replace("_", "-")
            if typ is _bool:
                p.add_argument(flag, dest=name, action="store_true", default=argparse.SUPPRESS, help=help_)
            else:
                shown = "" if default is None else f" (default {default})"
                p.add_argument(flag, dest=name, type=typ, default=argparse.SUPPRESS, help=help_ + shown)
    return parser


def read_config_file(path, command: str) -> Dict[str, object]:
    opts = OPTIONS[command]
    values = {}
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in opts:
            raise UsageError(f"{path}:{i}: unknown key {key!r} for '{command}'")
        try:
            values[key] = opts[key][0](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{i}: bad value for {key}: {exc}") from None
    return values


def resolve(command: str, args: argparse.Namespace) -> Dict[str, object]:
    cfg = {name: spec[1] for name, spec in OPTIONS[command].items()}
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config, command))
    cfg.update({k: v for k, v in vars(args).items() if k in cfg})
    missing = [k for k in REQUIRED[command] if cfg[k] is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return cfg


def cmd_datagen(cfg) -> int:
    from psgan.data.dataset import write_dataset
    from psgan.data.synth import SynthSpec, generate_synthetic

    out = Path(cfg["out"])
    if out.exists() and any(out.iterdir()):
        if not cfg["force"]:
            raise UsageError(f"{out} is not empty (use --force to overwrite)")
        for sub in ("images", "gt"):
            if (out / sub).is_dir():
                shutil.rmtree(out / sub)
        (out / "dataset.json").unlink(missing_ok=True)
    spec = SynthSpec(image_size=cfg["size"], seed=cfg["seed"],
                     min_polys=min(cfg["min_polys"], cfg["max_polys"]), max_polys=cfg["max_polys"],
                     min_chars=min(2, cfg["max_chars"]), max_chars=cfg["max_chars"])
    items = generate_synthetic(spec, cfg["n"])
    meta = {"generator": "synthetic", "n": cfg["n"], "image_size": spec.image_size, "seed": spec.seed,
            "min_polys": spec.min_polys, "max_polys": spec.max_polys, "max_chars": spec.max_chars,
            "min_dim": spec.min_dim}
    write_dataset(out, items, meta)
    print(f"generated {len(items)} samples -> {out}")
    return 0


def cmd_train(cfg) -> int:
    from psgan.data.dataset import load_dataset
    from psgan.generator import GeneratorConfig
    from psgan.training import TrainConfig, train

    samples = load_dataset(cfg["data"])
    if not samples:
        raise PsganError(f"dataset {cfg['data']} has no usable samples")
    gen_cfg = GeneratorConfig(base_channels=cfg["base_channels"], n_resblocks=cfg["n_resblocks"],
                              n_downsamples=cfg["n_downsamples"], dropout_rate=cfg["dropout_rate"],
                              image_size=samples[0].shape[0])
    train_cfg = TrainConfig(lambda_l1=cfg["lambda_l1"], learning_rate=cfg["learning_rate"],
                            adam_beta1=cfg["adam_beta1"], adam_beta2=cfg["adam_beta2"],
                            batch_size=cfg["batch"], steps=cfg["steps"], seed=cfg["seed"],
                            checkpoint_every=cfg["checkpoint_every"])
    report = train(samples, gen_cfg, train_cfg, cfg["out"], resume=cfg["resume"] or False)
    final = report.final
    if final is not None:
        print(f"trained to step {final.step}: loss_g={final.loss_g:.4f} l1={final.loss_g_l1:.4f} "
              f"loss_d={final.loss_d:.4f} -> {report.checkpoint_path}")
    else:
        print(f"nothing to do: already at step {report.trainer.step_count} -> {report.checkpoint_path}")
    return 0


def read_texts_file(path) -> Dict[int, str]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise PsganError(f"{path}: line {i}: expected 'index,text'")
            try:
                out[int(row[0])] = row[1]
            except ValueError:
                raise PsganError(f"{path}: line {i}: bad region index {row[0]!r}") from None
    return out


def cmd_replace(cfg) -> int:
    from psgan.data.annotations import parse_annotations
    from psgan.data.dataset import read_png, write_png
    from psgan.estimator import TextReplacer

    polys = parse_annotations(cfg["polys"])
    if not polys:
        shutil.copyfile(cfg["image"], cfg["out"])
        print(f"no polygons; copied {cfg['image']} -> {cfg['out']}")
        return 0
    per_region = read_texts_file(cfg["texts"]) if cfg["texts"] else {}
    bad = [k for k in per_region if not 0 <= k < len(polys)]
    if bad:
        raise PsganError(f"texts file names regions {bad} but the polygon file has {len(polys)}")
    texts = [per_region.get(i, cfg["text"]) for i in range(len(polys))]
    if any(t is None for t in texts):
        raise UsageError("--text is required for polygons not covered by --texts")
    model = TextReplacer.from_checkpoint(cfg["ckpt"])
    image = read_png(cfg["image"])
    result = model.replace_text(image, polys, texts)
    write_png(result, cfg["out"])
    print(f"replaced {len(polys)} region(s) -> {cfg['out']}")
    return 0


def cmd_eval(cfg) -> int:
    from psgan.data.dataset import load_dataset
    from psgan.metrics import evaluate
    from psgan.recognition import OracleRecognizer

    if not cfg["on_targets"] and cfg["ckpt"] is None:
        raise UsageError("--ckpt is required unless --on-targets is given")
    if cfg["ckpt"] is not None and not Path(cfg["ckpt"]).is_file():
        raise PsganError(f"checkpoint not found: {cfg['ckpt']}")
    samples = load_dataset(cfg["data"])
    if not samples:
        raise PsganError(f"dataset {cfg['data']} has no usable samples")
    out = Path(cfg["out"])
    details = Path(cfg["details"]) if cfg["details"] else out.with_name(out.name + ".regions.csv")
    report = evaluate(samples, cfg["ckpt"], OracleRecognizer(), seed=cfg["seed"],
                      on_targets=cfg["on_targets"], detail_path=details)
    report.write(out)
    print(report.table())
    return 0


COMMANDS = {"datagen": cmd_datagen, "train": cmd_train, "replace": cmd_replace, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
    except UsageError as exc:
        print(f"psgan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    log.info("resolved config: %s %s", args.command, json.dumps(cfg, sort_keys=True))
    try:
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"psgan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (PsganError, OSError, ValueError, KeyError) as exc:
        print(f"psgan {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
