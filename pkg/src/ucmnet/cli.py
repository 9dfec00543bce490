"""``ucmnet`` command line: simulate, train, restore, eval, export-maps, inspect-checkpoint.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import datasim
from .config import PRESET_NAMES, ConfigError, load_config
from .imageio import ImageDecodeError, read_png, write_png
from .metrics import psnr
from .network import UCMNet
from .trainer import Trainer, TrainingError, evaluate, restore
from .upt import token_addresses

logger = logging.getLogger("ucmnet")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def token_palette() -> np.ndarray:
    """Fixed 256-colour table; entry ``i`` is the first three bytes of
    ``sha256(b"ucmnet-token-<i>")``."""
    return np.array(
        [list(hashlib.sha256(f"ucmnet-token-{i}".encode()).digest()[:3]) for i in range(256)],
        dtype=np.uint8,
    )


PALETTE = token_palette()


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _load_model(path: str) -> tuple[ckpt_io.Checkpoint, UCMNet]:
    ck = ckpt_io.load_checkpoint(_require_file(path, "checkpoint"))
    return ck, ck.build_model()


def _read_inputs(paths: list[str]) -> list[np.ndarray]:
    for p in paths:
        _require_file(p, "input image")
    return [read_png(p) for p in paths]


def cmd_simulate(args) -> int:
    spec = datasim.preset(args.preset, seed=args.seed)
    manifest = datasim.generate_dataset(args.n, spec, args.out, source=args.source, size=args.size, seed=args.seed)
    print(manifest)
    print(json.dumps(spec.summary(), sort_keys=True))
    return EXIT_OK


def _split(n: int, holdout: int) -> int:
    if holdout < 0 or holdout >= n:
        raise UsageError(f"holdout of {holdout} leaves no training pairs out of {n}")
    return n - holdout


def cmd_train(args) -> int:
    manifest = _require_file(args.data, "manifest")
    if args.resume:
        ck = ckpt_io.load_checkpoint(_require_file(args.resume, "checkpoint"))
        run = ck.config
        trainer = ck.build_trainer()
    else:
        run = load_config(args.config, args.set)
        model = UCMNet(run.model, seed=run.train.seed, dtype=np.dtype(run.train.dtype))
        trainer = Trainer(model, run.loss, run.train)
    degraded, clean = datasim.load_pairs(manifest)
    cut = _split(len(clean), run.train.holdout)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def save(t: Trainer) -> None:
        path = ckpt_io.save_checkpoint(out / f"ckpt-{t.step:06d}.ucmn", ckpt_io.from_trainer(t, run))
        logger.info("wrote %s", path)

    (out / "config.cfg").write_text(run.to_text(), encoding="utf-8")
    with open(out / "log.jsonl", "a", encoding="utf-8") as log:
        trainer.fit(degraded[:cut], clean[:cut], log_file=log, on_checkpoint=save)
    final = ckpt_io.save_checkpoint(out / "final.ucmn", ckpt_io.from_trainer(trainer, run))
    print(f"checkpoint {final}")
    if cut < len(clean):
        scores = evaluate(trainer.model, degraded[cut:], clean[cut:])
        (out / "eval.json").write_text(json.dumps(scores, sort_keys=True) + "\n", encoding="utf-8")
        print(
            f"holdout PSNR {scores['psnr']:.3f} dB (input {scores['psnr_input']:.3f} dB)  "
            f"SSIM {scores['ssim']:.4f} (input {scores['ssim_input']:.4f})"
        )
    return EXIT_OK


def cmd_restore(args) -> int:
    _, model = _load_model(args.checkpoint)
    images = _read_inputs(args.inputs)
    refs = None
    if args.gt:
        if len(args.gt) != len(args.inputs):
            raise UsageError("--gt needs one reference per input image")
        refs = _read_inputs(args.gt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (path, img) in enumerate(zip(args.inputs, images)):
        restored = restore(model, img[None])[0]
        target = out / (Path(path).stem + ".png")
        write_png(target, restored)
        line = str(target)
        if refs is not None:
            line += f"\tPSNR {psnr(restored, refs[i]):.3f} dB"
        print(line)
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = _require_file(args.data, "manifest")
    ck, model = _load_model(args.checkpoint)
    degraded, clean = datasim.load_pairs(manifest)
    if args.holdout_only:
        cut = _split(len(clean), ck.config.train.holdout)
        degraded, clean = degraded[cut:], clean[cut:]
    scores = evaluate(model, degraded, clean)
    scores["n"] = len(clean)
    print(json.dumps(scores, sort_keys=True))
    return EXIT_OK


def uncertainty_png(s: np.ndarray) -> np.ndarray:
    """Per-map min-max normalization to 8-bit grayscale."""
    lo, hi = float(s.min()), float(s.max())
    scaled = (s - lo) / (hi - lo) if hi > lo else np.zeros_like(s)
    return np.round(scaled * 255.0).astype(np.uint8)


def token_png(addresses: np.ndarray) -> np.ndarray:
    return PALETTE[np.asarray(addresses) % 256]


def export_maps(model: UCMNet, image: np.ndarray, out: Path, prefix: str = "") -> list[tuple[Path, Path]]:
    """Write one uncertainty map and one token map per decoding stage."""
    _, stages = model.forward(np.asarray(image, dtype=model.dtype)[None])
    written = []
    levels = range(model.config.stages, 0, -1)
    for k, st, bank in zip(levels, stages, model.banks()):
        u = out / f"{prefix}uncertainty_s{k}.png"
        t = out / f"{prefix}tokens_s{k}.png"
        write_png(u, uncertainty_png(st.uncertainty.data[0, ..., 0]))
        write_png(t, token_png(token_addresses(st.features, bank.memory)[0]))
        written.append((u, t))
    return written


def cmd_export_maps(args) -> int:
    _, model = _load_model(args.checkpoint)
    images = _read_inputs(args.inputs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path, img in zip(args.inputs, images):
        prefix = f"{Path(path).stem}_" if len(images) > 1 else ""
        for u, t in export_maps(model, img, out, prefix):
            print(f"{u}\t{t}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    ck = ckpt_io.load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    params = {k: v for k, v in ck.tensors.items() if k.startswith("param/")}
    info = {
        "version": ck.version,
        "step": ck.step,
        "dtype": ck.dtype,
        "tensors": len(ck.tensors),
        "model_tensors": len(params),
        "scalars": int(sum(v.size for v in params.values())),
        "config": ck.config.to_flat(),
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ucmnet", description="Under-display-camera image restoration.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic degraded/clean pairs")
    p.add_argument("--preset", required=True, choices=datasim.PRESET_NAMES)
    p.add_argument("-n", type=int, required=True, help="number of pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--source", help="directory of clean PNGs to crop instead of procedural images")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train on a manifest, holding out the last pairs")
    p.add_argument("--config", help=f"config file or preset name ({', '.join(PRESET_NAMES)})")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--data", required=True, help="manifest.tsv")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="continue from a checkpoint (uses its config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore PNG images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gt", nargs="+", help="reference images, one per input, for PSNR")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--holdout-only", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-maps", help="per-stage uncertainty and memory-token maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_export_maps)

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "train" and args.resume and (args.config or args.set):
        print("error: --resume takes its config from the checkpoint; drop --config/--set", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ckpt_io.CheckpointError, ImageDecodeError, TrainingError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
